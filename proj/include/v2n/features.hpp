#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "v2n/ingest.hpp"

namespace v2n::features {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
    double latitude = 0.0;   // degrees
    double longitude = 0.0;  // degrees
};

// Great-circle distance. Throws PreconditionError on out-of-range coordinates.
double haversine_km(GeoPoint a, GeoPoint b);

// Feature order within one matrix row.
enum Feature : std::size_t {
    kFlow = 0,
    kAccuracy,
    kSpeed,
    kDistanceKm,
    kDayOfWeek,  // Monday = 1 .. Sunday = 7
    kMonth,
    kDay,
    kYear,
    kHourMinute,  // hour + minute / 60
    kFeatureCount
};

using FeatureRow = std::array<double, kFeatureCount>;

struct Neighborhood {
    std::string target_probe;
    double radius_km = 0.0;
    std::vector<std::string> members;  // sorted by distance, then id
    std::vector<double> distances_km;  // parallel to members
};

// Probes within `radius_km` of the target, target included.
Neighborhood build_neighborhood(const ingest::CleanDataset& clean, const std::string& target,
                                double radius_km);

// Every probe of the dataset, ordered the same way.
Neighborhood full_neighborhood(const ingest::CleanDataset& clean, const std::string& target);

struct DistanceQuantiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double w2 = 0.0;  // largest distance not beyond the upper whisker q3 + 1.5 (q3 - q1)

    std::vector<double> radii() const { return {q1, median, q3, w2}; }
};

// Quantiles by linear interpolation between order statistics.
// Throws PreconditionError on an empty sample.
DistanceQuantiles distance_quantiles(std::vector<double> distances);

// Quantiles of the distances from every other probe to the target.
DistanceQuantiles neighborhood_quantiles(const ingest::CleanDataset& clean,
                                         const std::string& target);

// Per-feature min-max scaling learned on a training range.
class FeatureScaler {
public:
    // Identity transform; nothing is clipped.
    static FeatureScaler identity();

    static FeatureScaler from_ranges(const std::array<double, kFeatureCount>& min,
                                     const std::array<double, kFeatureCount>& max);

    // Statistics of the members' features over grid rows [begin, end).
    static FeatureScaler fit(const ingest::CleanDataset& clean, const Neighborhood& members,
                             std::size_t begin, std::size_t end);

    bool enabled() const { return enabled_; }
    double min(std::size_t f) const { return min_[f]; }
    double max(std::size_t f) const { return max_[f]; }

    // Maps into [0, 1], clipping values outside the training range.
    double scale(std::size_t f, double value, bool* clipped = nullptr) const;
    double unscale(std::size_t f, double scaled) const;

private:
    bool enabled_ = false;
    std::array<double, kFeatureCount> min_{};
    std::array<double, kFeatureCount> max_{};
};

// X_{t,h}: rows ordered lag 1 first; within a lag, probes in neighborhood order.
struct FeatureMatrix {
    std::string target_probe;
    std::size_t history = 0;
    std::vector<std::string> probes;
    std::vector<FeatureRow> rows;  // history * probes.size()
    std::size_t clipped = 0;       // scaled values that fell outside [0, 1]

    const FeatureRow& at(std::size_t lag, std::size_t probe) const {
        return rows[(lag - 1) * probes.size() + probe];
    }
};

// Unscaled feature row of one probe at one grid index.
FeatureRow raw_features(const ingest::CleanDataset& clean, std::size_t probe, std::size_t index,
                        double distance_km);

// Window of the `history` grid rows strictly before grid index `t`.
// Throws PreconditionError when t < history.
FeatureMatrix build_feature_matrix(const ingest::CleanDataset& clean, const std::string& target,
                                   std::size_t t, std::size_t history,
                                   const Neighborhood& members, const FeatureScaler& scaler);

FeatureMatrix build_feature_matrix_at(const ingest::CleanDataset& clean, const std::string& target,
                                      Timestamp t, std::size_t history, const Neighborhood& members,
                                      const FeatureScaler& scaler);

}  // namespace v2n::features
