#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace v2n::smoothing {

enum class Model { des, tes };

struct Config {
    double alpha = 0.5;    // level
    double beta = 0.001;   // trend
    double gamma = 0.001;  // seasonality, TES only
    std::size_t season_len = 864;  // steps; 3 days of 5-minute samples

    // Throws ConfigError when a factor leaves [0, 1] or season_len < 2.
    void validate(Model model) const;
};

// Level/trend/seasonal state after consuming observation `cursor`.
// The seasonal ring holds S_{t-s+1} .. S_t, oldest at `head`.
struct State {
    double level = 0.0;
    double trend = 0.0;
    std::vector<double> seasonal;
    std::size_t head = 0;
    std::int64_t cursor = -1;
    std::size_t negative_inputs = 0;  // observations clamped to zero

    bool has_season() const { return !seasonal.empty(); }
    // S_{t-s+j} for j in 1..s (wraps modulo s beyond that).
    double season_at(std::size_t k) const;
};

State des_update(const State& state, double flow, const Config& cfg);
// L_t + k T_t clamped at zero. Throws PreconditionError for k < 1.
double des_predict(const State& state, std::size_t k);

// Throws PreconditionError when the seasonal ring is uninitialized.
State tes_update(const State& state, double flow, const Config& cfg);
// L_t + k T_t + S_{t+k-s}, clamped at zero.
double tes_predict(const State& state, std::size_t k);

State update(Model model, const State& state, double flow, const Config& cfg);
double predict(Model model, const State& state, std::size_t k);

// Warm start from a training segment, replayed through the update step.
// Returns the state after the last training value (cursor = size - 1).
// Throws PreconditionError when the segment is too short.
State fit_offline(std::span<const double> series, const Config& cfg, Model model);

// Feeds values newer than the state's cursor. `first_index` is the series
// index of window[0]. Throws PreconditionError when the window leaves a gap.
State update_online(const State& state, std::span<const double> window, std::int64_t first_index,
                    const Config& cfg, Model model);

inline double sample_hold_predict(double last_value, std::size_t /*k*/) { return last_value; }

}  // namespace v2n::smoothing
