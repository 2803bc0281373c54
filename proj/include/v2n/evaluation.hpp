#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v2n/forecaster.hpp"
#include "v2n/ingest.hpp"

namespace v2n::evaluation {

// sqrt(mean((a - f)^2)). Throws PreconditionError on empty or unequal input.
double rmse(std::span<const double> actual, std::span<const double> forecast);

struct ExperimentSpec {
    std::string technique;  // hold, des, tes, lstm, gru, tcn, tcnlstm, perfect
    forecast::Mode mode = forecast::Mode::offline;
    std::string scenario;
    std::size_t lookahead = 1;
    std::optional<double> radius_km;  // unset: every probe
    std::uint64_t seed = 7;
    std::string target;  // empty: the run's default target
};

struct ForecastPoint {
    Timestamp timestamp = 0;
    double actual = 0.0;
    double forecast = 0.0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    double rmse = 0.0;
    std::vector<ForecastPoint> forecasts;
    double seconds = 0.0;  // wall clock, not written to reports
    std::string error;     // set when the run failed

    bool ok() const { return error.empty(); }
};

struct EvalOptions {
    forecast::TechniqueConfig techniques = forecast::TechniqueConfig::defaults();
    std::vector<ingest::ScenarioSplit> scenarios;  // empty: built-in splits
    std::string target;                            // empty: first probe
    std::optional<std::size_t> warmup;             // unset: uniform_warmup()
};

// max(longest network history, season length): the same for every technique.
std::size_t uniform_warmup(const forecast::TechniqueConfig& config);

// Fits on the scenario's training days and forecasts every test step after
// the warmup, k steps ahead. Throws on failure.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ingest::CleanDataset& clean,
                                const EvalOptions& options = {});

// Results in spec order; failures are recorded per row. jobs = 0 uses every core.
std::vector<ExperimentResult> run_grid(const std::vector<ExperimentSpec>& specs,
                                       const ingest::CleanDataset& clean,
                                       const EvalOptions& options = {}, std::size_t jobs = 1);

// Long format, one row per experiment.
void write_grid_csv(std::ostream& out, const std::vector<ExperimentResult>& results);

// Per-timestamp forecasts of one experiment.
void write_forecast_csv(std::ostream& out, const std::vector<ForecastPoint>& points);

// A JSON array of spec objects; specs without a seed get `default_seed`.
std::vector<ExperimentSpec> parse_grid_json(std::string_view text, std::uint64_t default_seed = 7);

enum class SynthProfile { seasonal, trend_break, random_walk };
SynthProfile parse_profile(std::string_view name);

struct SynthOptions {
    SynthProfile profile = SynthProfile::seasonal;
    std::size_t days = 7;
    double amplitude = 1000.0;  // vehicles/hour
    double noise_sd = 0.0;
    std::uint64_t seed = 7;
    std::size_t break_day = 0;  // trend_break: first reduced day; 0 means half way
    Timestamp start = 0;        // 0: 2020-01-28T00:00Z
};

inline constexpr double kBreakResidual = 0.42;

// seasonal: amplitude * (1 - cos(2 pi t / 288)) / 2 plus noise, clamped at 0.
// trend_break: seasonal scaled by 0.42 from break_day on.
// random_walk: cumulative noise from `amplitude`, clamped at 0.
ingest::TrafficSeries synth_series(const SynthOptions& options);

}  // namespace v2n::evaluation
