#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v2n/forecaster.hpp"
#include "v2n/ingest.hpp"

namespace v2n::scaling {

inline constexpr double kMuEvs = 208.37;  // vehicles/second per instance

struct ServiceProfile {
    std::string name;
    double mu = kMuEvs;  // vehicles/second
    double T0 = 0.005;   // seconds
};

// remote_driving, cooperative_awareness, hazard_warning.
const std::vector<ServiceProfile>& service_profiles();
const ServiceProfile& service_profile(std::string_view name);

// Vehicles/hour to vehicles/second.
inline double per_second(double flow_per_hour) { return flow_per_hour / 3600.0; }

enum class PolicyKind { n_min, avg, max };

struct Policy {
    PolicyKind kind = PolicyKind::max;
    std::size_t n_minutes = 30;            // n_min only
    std::string forecaster = "tes-online";  // n_min only

    // "n_min_30", "avg", "max"
    std::string name() const;
    static Policy n_min(std::size_t minutes, std::string forecaster = "tes-online");
    static Policy avg();
    static Policy max();
};

// "max", "avg", "n_min:45", "n_min:45:lstm-online".
Policy parse_policy(std::string_view text);

// Steps [begin, end) of the grid served with `c` instances.
struct Interval {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t c = 1;
    double peak_flow = 0.0;  // F-hat for n_min, the sizing flow for static policies
};

struct ScalingTrace {
    std::string policy;
    ServiceProfile profile;
    std::vector<Timestamp> grid;       // timestamps of the traced steps
    std::size_t first_index = 0;       // grid index of grid[0]
    std::vector<Interval> intervals;   // contiguous, in order
    std::vector<std::string> incidents;  // forecaster failures that held the previous c
};

// The n_min policy over the test steps [begin, end). Decision epochs are every
// n/5 steps; F-hat is the largest of the observed flow at the epoch and the
// forecasts for k = 1 .. n/5 - 1. The forecaster must already be fitted.
// Throws InfeasibleError when T0 <= 1/mu.
ScalingTrace n_min_schedule(const forecast::SeriesView& view, std::size_t begin, std::size_t end,
                            forecast::Forecaster& forecaster, std::size_t n_minutes,
                            const ServiceProfile& profile);

// One interval over [test_begin, test_end) sized for the mean (avg) or the
// peak (max) of the training flows.
ScalingTrace static_schedule(std::span<const double> train_flows, PolicyKind kind,
                             const std::vector<Timestamp>& grid, std::size_t test_begin,
                             std::size_t test_end, const ServiceProfile& profile);

struct ScalingReport {
    std::string policy;
    std::string profile;
    std::size_t steps = 0;
    double cost = 0.0;        // sum of c over steps (server-intervals)
    double cost_ratio = 0.0;  // cost / cost of the max policy
    std::size_t violations = 0;
    double violation_ratio = 0.0;
};

// Per-step check with the realized flow: a violation when lambda >= c mu or
// T > T0. `reference_cost` normalizes cost_ratio (0: leave it at 0).
ScalingReport replay(const ScalingTrace& trace, const ingest::TrafficSeries& realized,
                     double reference_cost = 0.0);

struct PolicyOutcome {
    ScalingReport report;
    ScalingTrace trace;
    std::string error;  // set when the cell failed

    bool ok() const { return error.empty(); }
};

struct CompareOptions {
    forecast::TechniqueConfig techniques = forecast::TechniqueConfig::defaults();
    std::uint64_t seed = 7;
    std::optional<double> radius_km;
    std::size_t jobs = 1;
};

// Every (profile, policy) pair, profiles outermost. Cost ratios are relative
// to the max policy on the same inputs whether or not it is listed.
std::vector<PolicyOutcome> compare_policies(const std::vector<Policy>& policies,
                                            const ingest::CleanDataset& clean,
                                            const std::string& target,
                                            const ingest::ScenarioSplit& scenario,
                                            const std::vector<ServiceProfile>& profiles,
                                            const CompareOptions& options = {});

void write_report_csv(std::ostream& out, const std::vector<ScalingReport>& reports);

// One row per step: policy,service,timestamp,c,peak_flow,realized_flow,T_s,violation.
// Several traces may share one file, each written without its own header.
void write_trace_csv(std::ostream& out, const ScalingTrace& trace,
                     const ingest::TrafficSeries& realized, bool header = true);

// Reads a trace file back into replay inputs, one entry per consecutive
// (policy, service) block.
struct TraceFile {
    ScalingTrace trace;
    ingest::TrafficSeries realized;
};
std::vector<TraceFile> read_trace_csv(std::istream& in);

}  // namespace v2n::scaling
