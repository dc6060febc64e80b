#include "mergeflow/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace mergeflow::io {

nlohmann::json to_json(const PullRequest& pr) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : pr.premerge_runs)
        runs.push_back({{"finished_at", r.finished_at}, {"passed", r.passed}, {"duration", r.duration}});
    return {
        {"type", "pr"},
        {"id", pr.id},
        {"created_at", pr.created_at},
        {"additions", pr.additions},
        {"deletions", pr.deletions},
        {"changed_files", pr.changed_files},
        {"comments", pr.comments},
        {"commits", pr.commits},
        {"reviews", pr.reviews},
        {"depends_on", pr.depends_on},
        {"is_cyclic_dependent", pr.is_cyclic_dependent},
        {"change_queue", pr.change_queue},
        {"premerge_runs", runs},
        {"true_outcome", pr.true_outcome == Outcome::Pass ? "PASS" : "FAIL"},
        {"build_duration", pr.build_duration},
    };
}

PullRequest pr_from_json(const nlohmann::json& doc) {
    PullRequest pr;
    pr.id = doc.at("id").get<PrId>();
    pr.created_at = doc.at("created_at").get<Minutes>();
    pr.additions = doc.at("additions").get<std::int64_t>();
    pr.deletions = doc.at("deletions").get<std::int64_t>();
    pr.changed_files = doc.at("changed_files").get<std::vector<std::string>>();
    pr.comments = doc.at("comments").get<std::int64_t>();
    pr.commits = doc.at("commits").get<std::int64_t>();
    pr.reviews = doc.at("reviews").get<std::int64_t>();
    pr.depends_on = doc.at("depends_on").get<std::vector<PrId>>();
    pr.is_cyclic_dependent = doc.at("is_cyclic_dependent").get<bool>();
    pr.change_queue = doc.at("change_queue").get<PipelineId>();
    for (const auto& r : doc.at("premerge_runs"))
        pr.premerge_runs.push_back(
            {r.at("finished_at").get<Minutes>(), r.at("passed").get<bool>(), r.at("duration").get<double>()});
    const auto outcome = doc.at("true_outcome").get<std::string>();
    if (outcome == "PASS")
        pr.true_outcome = Outcome::Pass;
    else if (outcome == "FAIL")
        pr.true_outcome = Outcome::Fail;
    else
        throw std::invalid_argument("true_outcome must be PASS or FAIL");
    pr.build_duration = doc.at("build_duration").get<double>();
    return pr;
}

nlohmann::json to_json(const EventRecord& ev) {
    nlohmann::json doc{
        {"type", "event"},
        {"kind", std::string(to_string(ev.kind))},
        {"pr_id", ev.pr_id},
        {"pipeline", ev.pipeline},
        {"time", ev.time},
    };
    if (ev.caused_by) doc["caused_by"] = *ev.caused_by;
    return doc;
}

EventRecord event_from_json(const nlohmann::json& doc) {
    EventRecord ev;
    const auto kind = doc.at("kind").get<std::string>();
    const auto parsed = event_kind_from_string(kind);
    if (!parsed) throw std::invalid_argument("unknown event kind " + kind);
    ev.kind = *parsed;
    ev.pr_id = doc.at("pr_id").get<PrId>();
    ev.pipeline = doc.at("pipeline").get<PipelineId>();
    ev.time = doc.at("time").get<Minutes>();
    if (doc.contains("caused_by") && !doc.at("caused_by").is_null()) ev.caused_by = doc.at("caused_by").get<PrId>();
    return ev;
}

nlohmann::json to_json(const Arrival& a) { return {{"type", "arrival"}, {"pr_id", a.pr_id}, {"time", a.time}}; }

Arrival arrival_from_json(const nlohmann::json& doc) {
    return {doc.at("time").get<Minutes>(), doc.at("pr_id").get<PrId>()};
}

void write_jsonl(std::ostream& out, std::string_view content, const Bundle& bundle) {
    out << nlohmann::json{{"type", "header"},
                          {"format", kFormatName},
                          {"version", kFormatVersion},
                          {"content", content}}
               .dump()
        << '\n';
    for (const auto& pr : bundle.prs) out << to_json(pr).dump() << '\n';
    for (const auto& a : bundle.arrivals) out << to_json(a).dump() << '\n';
    for (const auto& ev : bundle.events) out << to_json(ev).dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path, std::string_view content, const Bundle& bundle) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_jsonl(out, content, bundle);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

Bundle read_jsonl(std::istream& in) {
    Bundle bundle;
    std::string line;
    std::size_t number = 0;
    bool header = false;
    const auto fail = [&](const std::string& what) {
        throw IngestError("line " + std::to_string(number) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(std::string("parse error: ") + e.what());
        }
        if (!doc.is_object()) fail("record is not a JSON object");
        const auto type = doc.value("type", std::string{});
        if (!header) {
            if (type != "header" || doc.value("format", std::string{}) != kFormatName) fail("missing mergeflow header");
            const auto version = doc.value("version", std::string{});
            if (version.substr(0, version.find('.')) != "1") fail("unsupported format version " + version);
            header = true;
            continue;
        }
        try {
            if (type == "pr") {
                auto pr = pr_from_json(doc);
                if (auto problems = validate_pull_request(pr); !problems.empty())
                    throw IngestError("line " + std::to_string(number) + ": pr " + std::to_string(pr.id) + ": " +
                                      problems.front());
                if (bundle.prs.contains(pr.id))
                    throw IngestError("line " + std::to_string(number) + ": duplicate pr " + std::to_string(pr.id));
                bundle.prs.add(std::move(pr));
            } else if (type == "arrival") {
                auto a = arrival_from_json(doc);
                if (!bundle.arrivals.empty() && a.time < bundle.arrivals.back().time)
                    throw IngestError("line " + std::to_string(number) + ": arrival of pr " +
                                      std::to_string(a.pr_id) + " is out of time order");
                bundle.arrivals.push_back(a);
            } else if (type == "event") {
                bundle.events.push_back(event_from_json(doc));
            } else {
                fail("unknown record type '" + type + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            fail(std::string("bad record: ") + e.what());
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    try {
        check_event_log(bundle.events);
    } catch (const LogError& e) {
        throw IngestError(std::string("invalid event log: ") + e.what());
    }
    return bundle;
}

Bundle ingest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    return read_jsonl(in);
}

}  // namespace mergeflow::io
