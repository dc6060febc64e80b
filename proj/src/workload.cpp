#include "mergeflow/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mergeflow/random.hpp"

namespace mergeflow::workload {

std::array<double, 24> WorkloadConfig::default_profile() {
    return {0.15, 0.15, 0.15, 0.15, 0.15, 0.15, 0.15, 0.4, 0.8, 1.2, 1.5, 1.5,
            1.5,  1.5,  1.5,  1.5,  1.3,  1.0,  0.7,  0.5, 0.35, 0.25, 0.2, 0.15};
}

void WorkloadConfig::validate() const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("workload " + what); };
    if (days < 0) fail("days must be >= 0");
    if (!(prs_per_day_mean > 0.0)) fail("prs_per_day_mean must be > 0");
    if (pipelines < 1) fail("pipelines must be >= 1");
    if (business_start_hour < 0 || business_end_hour > 24 || business_start_hour >= business_end_hour)
        fail("business hours must satisfy 0 <= start < end <= 24");
    if (!(build_duration_mean > 0.0)) fail("build_duration_mean must be > 0");
    if (!(build_duration_sigma >= 0.0)) fail("build_duration_sigma must be >= 0");
    if (!(failure_rate > 0.0 && failure_rate < 1.0)) fail("failure_rate must be in (0, 1)");
    if (!(dependency_rate >= 0.0 && dependency_rate <= 1.0)) fail("dependency_rate must be in [0, 1]");
    double sum = 0.0;
    for (double w : diurnal_profile) {
        if (!(w >= 0.0)) fail("diurnal_profile weights must be >= 0");
        sum += w;
    }
    if (!(sum > 0.0)) fail("diurnal_profile weights must sum to > 0");
}

nlohmann::json to_json(const WorkloadConfig& c) {
    return {
        {"days", c.days},
        {"prs_per_day_mean", c.prs_per_day_mean},
        {"pipelines", c.pipelines},
        {"business_hours", {c.business_start_hour, c.business_end_hour}},
        {"build_duration_mean", c.build_duration_mean},
        {"build_duration_sigma", c.build_duration_sigma},
        {"failure_rate", c.failure_rate},
        {"diurnal_profile", c.diurnal_profile},
        {"feature_failure_coupling",
         {{"premerge_failures", c.coupling.premerge_failures},
          {"changed_files", c.coupling.changed_files},
          {"changed_lines", c.coupling.changed_lines},
          {"area_risk", c.coupling.area_risk},
          {"cyclic_dependency", c.coupling.cyclic_dependency}}},
        {"dependency_rate", c.dependency_rate},
        {"seed", c.seed},
        {"first_id", c.first_id},
    };
}

WorkloadConfig workload_from_json(const nlohmann::json& doc) {
    WorkloadConfig c;
    c.days = doc.value("days", c.days);
    c.prs_per_day_mean = doc.value("prs_per_day_mean", c.prs_per_day_mean);
    c.pipelines = doc.value("pipelines", c.pipelines);
    if (doc.contains("business_hours")) {
        const auto hours = doc.at("business_hours").get<std::vector<int>>();
        if (hours.size() != 2) throw std::invalid_argument("business_hours needs [start, end)");
        c.business_start_hour = hours[0];
        c.business_end_hour = hours[1];
    }
    c.build_duration_mean = doc.value("build_duration_mean", c.build_duration_mean);
    c.build_duration_sigma = doc.value("build_duration_sigma", c.build_duration_sigma);
    c.failure_rate = doc.value("failure_rate", c.failure_rate);
    if (doc.contains("diurnal_profile")) {
        const auto profile = doc.at("diurnal_profile").get<std::vector<double>>();
        if (profile.size() != 24) throw std::invalid_argument("diurnal_profile needs 24 weights");
        std::copy(profile.begin(), profile.end(), c.diurnal_profile.begin());
    }
    if (doc.contains("feature_failure_coupling")) {
        const auto& k = doc.at("feature_failure_coupling");
        c.coupling.premerge_failures = k.value("premerge_failures", c.coupling.premerge_failures);
        c.coupling.changed_files = k.value("changed_files", c.coupling.changed_files);
        c.coupling.changed_lines = k.value("changed_lines", c.coupling.changed_lines);
        c.coupling.area_risk = k.value("area_risk", c.coupling.area_risk);
        c.coupling.cyclic_dependency = k.value("cyclic_dependency", c.coupling.cyclic_dependency);
    }
    c.dependency_rate = doc.value("dependency_rate", c.dependency_rate);
    c.seed = doc.value("seed", c.seed);
    c.first_id = doc.value("first_id", c.first_id);
    c.validate();
    return c;
}

std::vector<Arrival> Workload::day(int index) const {
    const Minutes lo = index * kMinutesPerDay, hi = lo + kMinutesPerDay;
    std::vector<Arrival> out;
    for (const auto& a : arrivals)
        if (a.time >= lo && a.time < hi) out.push_back(a);
    return out;
}

namespace {

struct Area {
    const char* path;
    double risk;  // standardized failure propensity of the area
    int scope;    // pipeline scope the area belongs to
};

// Fixed code-base layout shared by every generated workload.
constexpr std::array<Area, 12> kAreas{{
    {"driving/control", -0.9, 0},
    {"driving/dynamics", 1.4, 0},
    {"driving/estimation", 0.1, 0},
    {"common/math", -1.1, 0},
    {"perception/camera", 0.6, 1},
    {"perception/lidar", 1.8, 1},
    {"planning/behavior", -0.4, 1},
    {"planning/motion", 0.9, 1},
    {"tools/ci", -1.3, 2},
    {"infra/build", 1.2, 2},
    {"sim/scenarios", 0.0, 2},
    {"docs/guides", -1.6, 2},
}};

constexpr std::array<const char*, 4> kModules{"core", "api", "impl", "test"};

struct Drivers {
    double premerge_failures = 0.0;
    double changed_files = 0.0;
    double changed_lines = 0.0;
    double area_risk = 0.0;
    double cyclic_dependency = 0.0;
};

void standardize(std::vector<double>& values) {
    if (values.size() < 2) return;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    for (double& v : values) v = sd > 0.0 ? (v - mean) / sd : 0.0;
}

double calibrate_bias(const std::vector<double>& score, double target) {
    double lo = -30.0, hi = 30.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        double mean = 0.0;
        for (double s : score) mean += 1.0 / (1.0 + std::exp(-(mid + s)));
        mean /= static_cast<double>(score.size());
        (mean < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Workload generate(const WorkloadConfig& config) {
    config.validate();
    Workload out;

    // Arrival times from an hourly-piecewise Poisson process.
    rnd::Engine arrival_rng(rnd::derive(config.seed, 1));
    const double weight_sum = std::accumulate(config.diurnal_profile.begin(), config.diurnal_profile.end(), 0.0);
    std::vector<Minutes> times;
    for (int d = 0; d < config.days; ++d) {
        for (int h = 0; h < 24; ++h) {
            const double mean = config.prs_per_day_mean * config.diurnal_profile[static_cast<std::size_t>(h)] / weight_sum;
            const auto n = rnd::poisson(arrival_rng, mean);
            for (std::int64_t i = 0; i < n; ++i)
                times.push_back(d * kMinutesPerDay + h * kMinutesPerHour +
                                static_cast<Minutes>(rnd::index(arrival_rng, kMinutesPerHour)));
        }
    }
    std::sort(times.begin(), times.end());

    rnd::Engine rng(rnd::derive(config.seed, 2));
    std::vector<PullRequest> prs;
    std::vector<Drivers> drivers;
    prs.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        PullRequest pr;
        pr.id = config.first_id + static_cast<PrId>(i);
        const Minutes arrival = times[i];
        pr.change_queue = static_cast<PipelineId>(rnd::index(rng, static_cast<std::uint64_t>(config.pipelines)));

        // Files: mostly one area in the pipeline's scope, sometimes a second one.
        std::vector<std::size_t> scoped;
        for (std::size_t a = 0; a < kAreas.size(); ++a)
            if (kAreas[a].scope % config.pipelines == pr.change_queue) scoped.push_back(a);
        if (scoped.empty())
            for (std::size_t a = 0; a < kAreas.size(); ++a) scoped.push_back(a);
        const std::size_t primary = scoped[rnd::index(rng, scoped.size())];
        const std::size_t secondary = rnd::index(rng, kAreas.size());
        const auto file_count = std::min<std::int64_t>(60, 1 + static_cast<std::int64_t>(rnd::lognormal(rng, 0.8, 0.9)));
        double risk_sum = 0.0;
        for (std::int64_t f = 0; f < file_count; ++f) {
            const std::size_t area = rnd::bernoulli(rng, 0.15) ? secondary : primary;
            risk_sum += kAreas[area].risk;
            std::string path = std::string(kAreas[area].path) + "/" + kModules[rnd::index(rng, kModules.size())] +
                               "/file" + std::to_string(rnd::index(rng, 8)) + ".cpp";
            if (std::find(pr.changed_files.begin(), pr.changed_files.end(), path) == pr.changed_files.end())
                pr.changed_files.push_back(std::move(path));
        }
        const double files = static_cast<double>(pr.changed_files.size());
        pr.additions = static_cast<std::int64_t>(rnd::lognormal(rng, 3.0 + 0.6 * std::log(files), 1.0));
        pr.deletions = static_cast<std::int64_t>(rnd::lognormal(rng, 2.0 + 0.6 * std::log(files), 1.2));
        pr.comments = rnd::poisson(rng, 2.0);
        pr.commits = 1 + rnd::poisson(rng, 1.5);
        pr.reviews = rnd::poisson(rng, 1.5);

        const Minutes age = std::max<Minutes>(10, static_cast<Minutes>(rnd::exponential(rng, 36.0 * 60.0)));
        pr.created_at = arrival - age;

        // Pre-merge history; the last run passed, otherwise the PR would not be queued.
        const double flakiness = 0.05 + 0.45 * std::pow(rnd::uniform01(rng), 2.0);
        const auto runs = 1 + rnd::poisson(rng, 1.2);
        for (std::int64_t r = 0; r < runs; ++r) {
            PremergeRun run;
            run.duration = std::max(1.0, std::round(rnd::lognormal(rng, std::log(30.0), 0.3)));
            const double frac = static_cast<double>(r + 1) / static_cast<double>(runs + 1);
            run.finished_at = pr.created_at + static_cast<Minutes>(frac * static_cast<double>(age));
            run.passed = r + 1 == runs || !rnd::bernoulli(rng, flakiness);
            pr.premerge_runs.push_back(run);
        }

        if (i > 0 && rnd::bernoulli(rng, config.dependency_rate)) {
            const std::size_t back = 1 + rnd::index(rng, std::min<std::size_t>(i, 30));
            pr.depends_on.push_back(prs[i - back].id);
            pr.is_cyclic_dependent = rnd::bernoulli(rng, 0.3);
        }

        const double sigma = config.build_duration_sigma;
        const double mu = std::log(config.build_duration_mean) - 0.5 * sigma * sigma;
        pr.build_duration = std::max(1.0, std::round(rnd::lognormal(rng, mu, sigma)));

        Drivers d;
        d.premerge_failures = static_cast<double>(pr.premerge_failures());
        d.changed_files = std::log1p(files);
        d.changed_lines = std::log1p(static_cast<double>(pr.changed_lines()));
        d.area_risk = risk_sum / static_cast<double>(file_count);
        d.cyclic_dependency = pr.is_cyclic_dependent ? 1.0 : 0.0;
        drivers.push_back(d);
        prs.push_back(std::move(pr));
    }

    if (!prs.empty()) {
        std::vector<double> pf, cf, cl, ar, cy;
        for (const auto& d : drivers) {
            pf.push_back(d.premerge_failures);
            cf.push_back(d.changed_files);
            cl.push_back(d.changed_lines);
            ar.push_back(d.area_risk);
            cy.push_back(d.cyclic_dependency);
        }
        for (auto* v : {&pf, &cf, &cl, &ar, &cy}) standardize(*v);
        const auto& k = config.coupling;
        std::vector<double> score(prs.size());
        for (std::size_t i = 0; i < prs.size(); ++i)
            score[i] = k.premerge_failures * pf[i] + k.changed_files * cf[i] + k.changed_lines * cl[i] +
                       k.area_risk * ar[i] + k.cyclic_dependency * cy[i];
        const double bias = calibrate_bias(score, config.failure_rate);
        rnd::Engine outcome_rng(rnd::derive(config.seed, 3));
        for (std::size_t i = 0; i < prs.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-(bias + score[i])));
            prs[i].true_outcome = rnd::bernoulli(outcome_rng, p) ? Outcome::Fail : Outcome::Pass;
        }
    }

    for (std::size_t i = 0; i < prs.size(); ++i) out.arrivals.push_back({times[i], prs[i].id});
    out.prs = PrTable(std::move(prs));
    return out;
}

}  // namespace mergeflow::workload
