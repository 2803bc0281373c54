#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "v2n/features.hpp"
#include "v2n/ingest.hpp"
#include "v2n/neural.hpp"
#include "v2n/smoothing.hpp"

namespace v2n::forecast {

enum class Mode { offline, online };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);

// Settings shared by every technique of a run.
struct TechniqueConfig {
    smoothing::Config smoothing;
    std::map<neural::ModelKind, neural::NetConfig> nets;

    // Default settings for every neural model.
    static TechniqueConfig defaults();
    const neural::NetConfig& net(neural::ModelKind kind) const;
};

// The series a forecaster works on: one target probe of a clean dataset plus
// the neighbor probes whose features the neural models read.
struct SeriesView {
    const ingest::CleanDataset* clean = nullptr;
    std::size_t target = 0;  // probe index
    features::Neighborhood members;

    const std::vector<double>& flow() const { return clean->columns(target).flow; }
    const std::string& target_id() const { return clean->probes()[target].id; }
};

SeriesView make_view(const ingest::CleanDataset& clean, const std::string& target,
                     std::optional<double> radius_km);

class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual std::string name() const = 0;

    // Learns from grid rows [begin, end) of the view.
    virtual void fit(const SeriesView& view, std::size_t begin, std::size_t end) = 0;

    // Forecast of the flow at grid index origin + k from observations up to
    // and including `origin`. Origins never move backwards between calls.
    virtual double forecast(std::size_t origin, std::size_t k) = 0;
};

// Technique names: hold, des, tes, lstm, gru, tcn, tcnlstm, perfect.
// "perfect" reads the realized value and only serves as a reference.
std::unique_ptr<Forecaster> make_forecaster(std::string_view technique, Mode mode,
                                            const TechniqueConfig& config, std::uint64_t seed);

// "tes-online" -> (tes, online); a bare name means offline.
struct TechniqueId {
    std::string technique;
    Mode mode = Mode::offline;
};
TechniqueId parse_technique_id(std::string_view text);

bool is_neural(std::string_view technique);

// Offline training of one direct model for look-ahead k on grid rows
// [begin, end). Scaling statistics come from the same rows.
neural::TrainedModel train_direct_model(const SeriesView& view, std::size_t begin, std::size_t end,
                                        const neural::NetConfig& config, std::size_t k);

// Steps a model needs before it can forecast: the network history for neural
// techniques, the season length for TES, 1 otherwise.
std::size_t history_needed(std::string_view technique, const TechniqueConfig& config);

}  // namespace v2n::forecast
