#include "v2n/forecaster.hpp"

#include <algorithm>
#include <limits>

#include "v2n/error.hpp"

namespace v2n::forecast {

Mode parse_mode(std::string_view name) {
    if (name == "offline") return Mode::offline;
    if (name == "online") return Mode::online;
    throw ConfigError("unknown mode '" + std::string(name) + "' (expected offline or online)");
}

std::string_view mode_name(Mode mode) { return mode == Mode::offline ? "offline" : "online"; }

TechniqueConfig TechniqueConfig::defaults() {
    TechniqueConfig c;
    for (auto kind : {neural::ModelKind::lstm, neural::ModelKind::gru, neural::ModelKind::tcn,
                      neural::ModelKind::tcnlstm}) {
        c.nets[kind] = neural::NetConfig::defaults(kind);
    }
    return c;
}

const neural::NetConfig& TechniqueConfig::net(neural::ModelKind kind) const {
    const auto it = nets.find(kind);
    if (it == nets.end()) {
        throw ConfigError("no configuration for model " + std::string(neural::model_name(kind)));
    }
    return it->second;
}

SeriesView make_view(const ingest::CleanDataset& clean, const std::string& target,
                     std::optional<double> radius_km) {
    SeriesView v;
    v.clean = &clean;
    v.target = clean.index_of(target);
    v.members = radius_km ? features::build_neighborhood(clean, target, *radius_km)
                          : features::full_neighborhood(clean, target);
    return v;
}

bool is_neural(std::string_view technique) {
    return technique == "lstm" || technique == "gru" || technique == "tcn" ||
           technique == "tcnlstm";
}

std::size_t history_needed(std::string_view technique, const TechniqueConfig& config) {
    if (is_neural(technique)) {
        return config.net(neural::parse_model(technique)).history;
    }
    if (technique == "tes") {
        return config.smoothing.season_len;
    }
    return 1;
}

TechniqueId parse_technique_id(std::string_view text) {
    TechniqueId id;
    const auto dash = text.rfind('-');
    if (dash != std::string_view::npos &&
        (text.substr(dash + 1) == "online" || text.substr(dash + 1) == "offline")) {
        id.technique = std::string(text.substr(0, dash));
        id.mode = parse_mode(text.substr(dash + 1));
    } else {
        id.technique = std::string(text);
    }
    return id;
}

namespace {

void check_fit_range(const SeriesView& view, std::size_t begin, std::size_t end) {
    if (view.clean == nullptr) {
        throw PreconditionError("forecaster has no data");
    }
    if (begin >= end || end > view.clean->size()) {
        throw PreconditionError("training range is empty or outside the grid");
    }
}

void check_k(std::size_t k) {
    if (k < 1) {
        throw PreconditionError("look-ahead k must be at least 1");
    }
}

class HoldForecaster final : public Forecaster {
public:
    std::string name() const override { return "hold"; }

    void fit(const SeriesView& view, std::size_t begin, std::size_t end) override {
        check_fit_range(view, begin, end);
        view_ = view;
    }

    double forecast(std::size_t origin, std::size_t k) override {
        check_k(k);
        return smoothing::sample_hold_predict(view_.flow().at(origin), k);
    }

private:
    SeriesView view_;
};

class PerfectForecaster final : public Forecaster {
public:
    std::string name() const override { return "perfect"; }

    void fit(const SeriesView& view, std::size_t begin, std::size_t end) override {
        check_fit_range(view, begin, end);
        view_ = view;
    }

    double forecast(std::size_t origin, std::size_t k) override {
        check_k(k);
        const auto& f = view_.flow();
        if (origin + k >= f.size()) {
            throw PreconditionError("perfect forecast beyond the end of the data");
        }
        return std::max(0.0, f[origin + k]);
    }

private:
    SeriesView view_;
};

class SmoothingForecaster final : public Forecaster {
public:
    SmoothingForecaster(smoothing::Model model, Mode mode, smoothing::Config cfg)
        : model_(model), mode_(mode), cfg_(cfg) {
        cfg_.validate(model_);
    }

    std::string name() const override {
        return std::string(model_ == smoothing::Model::des ? "des" : "tes") + "-" +
               std::string(mode_name(mode_));
    }

    void fit(const SeriesView& view, std::size_t begin, std::size_t end) override {
        check_fit_range(view, begin, end);
        view_ = view;
        const auto& f = view.flow();
        const std::span<const double> train(f.data() + begin, end - begin);
        state_ = smoothing::fit_offline(train, cfg_, model_);
        // The cursor counts grid indices from here on.
        state_.cursor = static_cast<std::int64_t>(end) - 1;
    }

    double forecast(std::size_t origin, std::size_t k) override {
        check_k(k);
        const auto o = static_cast<std::int64_t>(origin);
        if (mode_ == Mode::online) {
            if (o > state_.cursor) {
                const auto& f = view_.flow();
                const auto first = static_cast<std::size_t>(state_.cursor + 1);
                state_ = smoothing::update_online(
                    state_, std::span<const double>(f.data() + first, origin + 1 - first),
                    state_.cursor + 1, cfg_, model_);
            }
            if (o != state_.cursor) {
                throw PreconditionError("forecast origin lies before the fitted state");
            }
            return smoothing::predict(model_, state_, k);
        }
        // Frozen state: reach the target from the end of training.
        const std::int64_t target = o + static_cast<std::int64_t>(k);
        if (target <= state_.cursor) {
            throw PreconditionError("forecast target lies inside the training range");
        }
        return smoothing::predict(model_, state_, static_cast<std::size_t>(target - state_.cursor));
    }

private:
    smoothing::Model model_;
    Mode mode_;
    smoothing::Config cfg_;
    SeriesView view_;
    smoothing::State state_;
};

class NeuralForecaster final : public Forecaster {
public:
    NeuralForecaster(neural::NetConfig cfg, Mode mode, std::uint64_t seed) : cfg_(cfg), mode_(mode) {
        cfg_.seed = seed;
        cfg_.validate();
    }

    std::string name() const override {
        return std::string(neural::model_name(cfg_.model)) + "-" + std::string(mode_name(mode_));
    }

    void fit(const SeriesView& view, std::size_t begin, std::size_t end) override {
        check_fit_range(view, begin, end);
        if (end - begin <= cfg_.history) {
            throw PreconditionError("training range of " + std::to_string(end - begin) +
                                    " steps is not longer than the history of " +
                                    std::to_string(cfg_.history));
        }
        view_ = view;
        begin_ = begin;
        end_ = end;
        // Same statistics as the per-horizon models are trained with.
        scaler_ = features::FeatureScaler::fit(*view.clean, view.members, begin, end);
        models_.clear();
        cache_.clear();
    }

    double forecast(std::size_t origin, std::size_t k) override {
        check_k(k);
        if (view_.clean == nullptr) {
            throw PreconditionError("forecaster used before fit");
        }
        if (origin + 1 < cfg_.history) {
            throw PreconditionError("not enough history before origin " + std::to_string(origin));
        }
        neural::TrainedModel& m = model_for(k);
        if (mode_ == Mode::online && cfg_.online_window > 0 && origin >= k) {
            // Samples whose targets are already observed at `origin`.
            const std::size_t last = origin - k;
            const std::size_t lowest = begin_ + cfg_.history - 1;
            const std::size_t first =
                std::max(lowest, last + 1 >= cfg_.online_window ? last + 1 - cfg_.online_window : 0);
            if (last >= first) {
                std::vector<neural::Sample> window;
                for (std::size_t o = first; o <= last; ++o) {
                    window.push_back({sequence(o), m.scale_target(view_.flow()[o + k])});
                }
                m.net = neural::train(m.config, window, neural::TrainMode::online, &m.net);
            }
            evict(origin > cfg_.online_window + k ? origin - cfg_.online_window - k : 0);
        }
        const double out = m.net.forward(sequence(origin));
        return std::max(0.0, m.unscale_target(out));
    }

private:
    // Input window whose newest row is grid index `origin`.
    const neural::Mat& sequence(std::size_t origin) {
        auto it = cache_.find(origin);
        if (it == cache_.end()) {
            const auto fm = features::build_feature_matrix(*view_.clean, view_.target_id(),
                                                           origin + 1, cfg_.history,
                                                           view_.members, scaler_);
            it = cache_.emplace(origin, neural::to_sequence(fm, cfg_.inputs)).first;
        }
        return it->second;
    }

    void evict(std::size_t below) {
        cache_.erase(cache_.begin(), cache_.lower_bound(below));
    }

    neural::TrainedModel& model_for(std::size_t k) {
        auto it = models_.find(k);
        if (it != models_.end()) {
            return it->second;
        }
        return models_.emplace(k, train_direct_model(view_, begin_, end_, cfg_, k)).first->second;
    }

    neural::NetConfig cfg_;
    Mode mode_;
    SeriesView view_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    features::FeatureScaler scaler_;
    std::map<std::size_t, neural::TrainedModel> models_;
    std::map<std::size_t, neural::Mat> cache_;
};

}  // namespace

neural::TrainedModel train_direct_model(const SeriesView& view, std::size_t begin, std::size_t end,
                                        const neural::NetConfig& config, std::size_t k) {
    check_fit_range(view, begin, end);
    check_k(k);
    neural::TrainedModel m;
    m.config = config;
    m.horizon = k;
    m.members = view.members;
    m.scaler = features::FeatureScaler::fit(*view.clean, view.members, begin, end);
    const auto& f = view.flow();
    const auto [lo, hi] = std::minmax_element(f.begin() + static_cast<std::ptrdiff_t>(begin),
                                              f.begin() + static_cast<std::ptrdiff_t>(end));
    m.target_min = *lo;
    m.target_max = *hi;
    const std::size_t first = begin + config.history - 1;
    if (end < first + k + 1) {
        throw PreconditionError("training range of " + std::to_string(end - begin) +
                                " steps is too short for history " + std::to_string(config.history) +
                                " and look-ahead " + std::to_string(k));
    }
    std::vector<neural::Sample> data;
    data.reserve(end - k - first);
    for (std::size_t o = first; o + k < end; ++o) {
        const auto fm = features::build_feature_matrix(*view.clean, view.target_id(), o + 1,
                                                       config.history, view.members, m.scaler);
        data.push_back({neural::to_sequence(fm, config.inputs), m.scale_target(f[o + k])});
    }
    m.net = neural::train(config, data, neural::TrainMode::offline);
    return m;
}

std::unique_ptr<Forecaster> make_forecaster(std::string_view technique, Mode mode,
                                            const TechniqueConfig& config, std::uint64_t seed) {
    if (technique == "hold") return std::make_unique<HoldForecaster>();
    if (technique == "perfect") return std::make_unique<PerfectForecaster>();
    if (technique == "des") {
        return std::make_unique<SmoothingForecaster>(smoothing::Model::des, mode, config.smoothing);
    }
    if (technique == "tes") {
        return std::make_unique<SmoothingForecaster>(smoothing::Model::tes, mode, config.smoothing);
    }
    if (is_neural(technique)) {
        return std::make_unique<NeuralForecaster>(config.net(neural::parse_model(technique)), mode,
                                                  seed);
    }
    throw ConfigError("unknown technique '" + std::string(technique) + "'");
}

}  // namespace v2n::forecast
