#pragma once

// Synthetic merge-queue workloads with a diurnal arrival profile.

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "mergeflow/core.hpp"

namespace mergeflow::workload {

/// Weights on the standardized latent drivers of failure odds.
struct Coupling {
    double premerge_failures = 0.5;
    double changed_files = 0.3;
    double changed_lines = 0.3;
    double area_risk = 0.8;  // risk of the code areas the PR touches
    double cyclic_dependency = 0.5;

    bool operator==(const Coupling&) const = default;
};

struct WorkloadConfig {
    int days = 15;
    double prs_per_day_mean = 400.0;
    int pipelines = 3;
    int business_start_hour = 9;
    int business_end_hour = 17;
    double build_duration_mean = 60.0;
    double build_duration_sigma = 0.25;
    double failure_rate = 0.10;
    std::array<double, 24> diurnal_profile = default_profile();
    Coupling coupling;
    double dependency_rate = 0.03;
    std::uint64_t seed = 1;
    /// First PR id handed out.
    PrId first_id = 1;

    static std::array<double, 24> default_profile();
    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;

    bool operator==(const WorkloadConfig&) const = default;
};

nlohmann::json to_json(const WorkloadConfig& config);
/// Missing keys keep their defaults.
WorkloadConfig workload_from_json(const nlohmann::json& doc);

struct Workload {
    PrTable prs;
    std::vector<Arrival> arrivals;  // time-ordered

    /// Arrivals with time in [day * 1440, (day + 1) * 1440).
    std::vector<Arrival> day(int index) const;
};

Workload generate(const WorkloadConfig& config);

}  // namespace mergeflow::workload
