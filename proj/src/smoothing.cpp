#include "v2n/smoothing.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "v2n/error.hpp"

namespace v2n::smoothing {

namespace {

void check_factor(const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError(std::string(name) + " out of [0,1]");
    }
}

void check_k(std::size_t k) {
    if (k < 1) {
        throw PreconditionError("look-ahead k must be at least 1");
    }
}

double clamp_input(double flow, State& next) {
    if (flow < 0) {
        ++next.negative_inputs;
        return 0.0;
    }
    return flow;
}

}  // namespace

void Config::validate(Model model) const {
    check_factor("alpha", alpha);
    check_factor("beta", beta);
    if (model == Model::tes) {
        check_factor("gamma", gamma);
        if (season_len < 2) {
            throw ConfigError("season_len must be at least 2");
        }
    }
}

double State::season_at(std::size_t k) const {
    const std::size_t s = seasonal.size();
    return seasonal[(head + (k - 1) % s) % s];
}

State des_update(const State& state, double flow, const Config& cfg) {
    State next = state;
    const double f = clamp_input(flow, next);
    next.level = cfg.alpha * f + (1.0 - cfg.alpha) * (state.level + state.trend);
    next.trend = cfg.beta * (next.level - state.level) + (1.0 - cfg.beta) * state.trend;
    ++next.cursor;
    return next;
}

double des_predict(const State& state, std::size_t k) {
    check_k(k);
    return std::max(0.0, state.level + static_cast<double>(k) * state.trend);
}

State tes_update(const State& state, double flow, const Config& cfg) {
    if (!state.has_season()) {
        throw PreconditionError("TES state has no seasonal indices; call fit_offline first");
    }
    State next = state;
    const double y = clamp_input(flow, next);
    const std::size_t s = state.seasonal.size();
    const double s_old = state.seasonal[state.head];  // S_{t-s}
    next.level = cfg.alpha * (y - s_old) + (1.0 - cfg.alpha) * (state.level + state.trend);
    next.trend = cfg.beta * (next.level - state.level) + (1.0 - cfg.beta) * state.trend;
    next.seasonal[state.head] = cfg.gamma * (y - next.level) + (1.0 - cfg.gamma) * s_old;
    next.head = (state.head + 1) % s;
    ++next.cursor;
    return next;
}

double tes_predict(const State& state, std::size_t k) {
    check_k(k);
    if (!state.has_season()) {
        throw PreconditionError("TES state has no seasonal indices");
    }
    return std::max(0.0, state.level + static_cast<double>(k) * state.trend + state.season_at(k));
}

State update(Model model, const State& state, double flow, const Config& cfg) {
    return model == Model::des ? des_update(state, flow, cfg) : tes_update(state, flow, cfg);
}

double predict(Model model, const State& state, std::size_t k) {
    return model == Model::des ? des_predict(state, k) : tes_predict(state, k);
}

State fit_offline(std::span<const double> series, const Config& cfg, Model model) {
    cfg.validate(model);
    State st;
    if (model == Model::des) {
        if (series.size() < 2) {
            throw PreconditionError("DES needs at least 2 training points, got " +
                                    std::to_string(series.size()));
        }
        st.trend = series[1] - series[0];
        st.level = series[0] - st.trend;
    } else {
        const std::size_t s = cfg.season_len;
        if (series.size() < 2 * s) {
            throw PreconditionError("TES needs at least 2 seasons (" + std::to_string(2 * s) +
                                    " points), got " + std::to_string(series.size()));
        }
        const auto first = series.first(s);
        const double mean = std::accumulate(first.begin(), first.end(), 0.0) / static_cast<double>(s);
        st.trend = (first[s - 1] - first[0]) / static_cast<double>(s - 1);
        // Seasonal indices are first-season deviations from the fitted line.
        const double centre = static_cast<double>(s - 1) / 2.0;
        st.seasonal.resize(s);
        for (std::size_t i = 0; i < s; ++i) {
            st.seasonal[i] = first[i] - (mean + st.trend * (static_cast<double>(i) - centre));
        }
        // One step before the first observation, so replaying series[0]
        // lands on its deseasonalized value.
        st.level = mean - st.trend * centre - st.trend;
    }
    st.cursor = -1;
    for (double v : series) {
        st = update(model, st, v, cfg);
    }
    return st;
}

State update_online(const State& state, std::span<const double> window, std::int64_t first_index,
                    const Config& cfg, Model model) {
    if (window.empty()) {
        throw PreconditionError("online window is empty");
    }
    if (first_index > state.cursor + 1) {
        throw PreconditionError("online window starts at " + std::to_string(first_index) +
                                " but the state stops at " + std::to_string(state.cursor));
    }
    State st = state;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const std::int64_t idx = first_index + static_cast<std::int64_t>(i);
        if (idx <= st.cursor) {
            continue;
        }
        st = update(model, st, window[i], cfg);
    }
    return st;
}

}  // namespace v2n::smoothing
