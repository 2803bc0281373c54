#include "v2n/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "v2n/error.hpp"

namespace v2n::features {

namespace {

double to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void check_point(GeoPoint p) {
    if (!(p.latitude >= -90.0 && p.latitude <= 90.0) ||
        !(p.longitude >= -180.0 && p.longitude <= 180.0)) {
        throw PreconditionError("coordinates out of range");
    }
}

GeoPoint location(const ingest::ProbeInfo& p) { return {p.latitude, p.longitude}; }

std::vector<std::pair<double, std::string>> sorted_distances(const ingest::CleanDataset& clean,
                                                             const std::string& target) {
    const auto& probes = clean.probes();
    const GeoPoint origin = location(probes[clean.index_of(target)]);
    std::vector<std::pair<double, std::string>> out;
    out.reserve(probes.size());
    for (const auto& p : probes) {
        out.emplace_back(p.id == target ? 0.0 : haversine_km(origin, location(p)), p.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double quantile_sorted(const std::vector<double>& v, double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double haversine_km(GeoPoint a, GeoPoint b) {
    check_point(a);
    check_point(b);
    const double dlat = to_rad(b.latitude - a.latitude);
    const double dlon = to_rad(b.longitude - a.longitude);
    const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(to_rad(a.latitude)) * std::cos(to_rad(b.latitude)) *
                         std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

Neighborhood build_neighborhood(const ingest::CleanDataset& clean, const std::string& target,
                                double radius_km) {
    Neighborhood n;
    n.target_probe = target;
    n.radius_km = radius_km;
    for (auto& [d, id] : sorted_distances(clean, target)) {
        if (d <= radius_km || id == target) {
            n.members.push_back(id);
            n.distances_km.push_back(d);
        }
    }
    return n;
}

Neighborhood full_neighborhood(const ingest::CleanDataset& clean, const std::string& target) {
    return build_neighborhood(clean, target, std::numeric_limits<double>::infinity());
}

DistanceQuantiles distance_quantiles(std::vector<double> distances) {
    if (distances.empty()) {
        throw PreconditionError("quantiles need at least one distance");
    }
    std::sort(distances.begin(), distances.end());
    DistanceQuantiles q;
    q.q1 = quantile_sorted(distances, 0.25);
    q.median = quantile_sorted(distances, 0.5);
    q.q3 = quantile_sorted(distances, 0.75);
    const double whisker = q.q3 + 1.5 * (q.q3 - q.q1);
    q.w2 = distances.front();
    for (double d : distances) {
        if (d <= whisker) {
            q.w2 = d;
        }
    }
    return q;
}

DistanceQuantiles neighborhood_quantiles(const ingest::CleanDataset& clean,
                                         const std::string& target) {
    if (clean.probe_count() < 2) {
        throw PreconditionError("neighborhood quantiles need at least 2 probes");
    }
    std::vector<double> distances;
    for (auto& [d, id] : sorted_distances(clean, target)) {
        if (id != target) {
            distances.push_back(d);
        }
    }
    return distance_quantiles(std::move(distances));
}

FeatureRow raw_features(const ingest::CleanDataset& clean, std::size_t probe, std::size_t index,
                        double distance_km) {
    const auto& cols = clean.columns(probe);
    const CivilTime c = to_civil(clean.grid()[index]);
    FeatureRow row{};
    row[kFlow] = cols.flow[index];
    row[kAccuracy] = cols.accuracy[index];
    row[kSpeed] = cols.speed[index];
    row[kDistanceKm] = distance_km;
    row[kDayOfWeek] = c.weekday;
    row[kMonth] = c.month;
    row[kDay] = c.day;
    row[kYear] = c.year;
    row[kHourMinute] = c.hour + c.minute / 60.0;
    return row;
}

FeatureScaler FeatureScaler::identity() { return FeatureScaler{}; }

FeatureScaler FeatureScaler::from_ranges(const std::array<double, kFeatureCount>& min,
                                         const std::array<double, kFeatureCount>& max) {
    FeatureScaler s;
    s.enabled_ = true;
    s.min_ = min;
    s.max_ = max;
    return s;
}

FeatureScaler FeatureScaler::fit(const ingest::CleanDataset& clean, const Neighborhood& members,
                                 std::size_t begin, std::size_t end) {
    if (begin >= end || end > clean.size()) {
        throw PreconditionError("scaler fit range is empty or outside the grid");
    }
    FeatureScaler s;
    s.enabled_ = true;
    s.min_.fill(std::numeric_limits<double>::infinity());
    s.max_.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t m = 0; m < members.members.size(); ++m) {
        const std::size_t p = clean.index_of(members.members[m]);
        for (std::size_t i = begin; i < end; ++i) {
            const FeatureRow row = raw_features(clean, p, i, members.distances_km[m]);
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                s.min_[f] = std::min(s.min_[f], row[f]);
                s.max_[f] = std::max(s.max_[f], row[f]);
            }
        }
    }
    return s;
}

double FeatureScaler::scale(std::size_t f, double value, bool* clipped) const {
    if (!enabled_) {
        return value;
    }
    const double range = max_[f] - min_[f];
    double scaled = range > 0 ? (value - min_[f]) / range : 0.0;
    const bool out_of_range = value < min_[f] || value > max_[f];
    if (out_of_range) {
        scaled = value < min_[f] ? 0.0 : 1.0;
    }
    if (clipped != nullptr) {
        *clipped = out_of_range;
    }
    return scaled;
}

double FeatureScaler::unscale(std::size_t f, double scaled) const {
    if (!enabled_) {
        return scaled;
    }
    return min_[f] + scaled * (max_[f] - min_[f]);
}

FeatureMatrix build_feature_matrix(const ingest::CleanDataset& clean, const std::string& target,
                                   std::size_t t, std::size_t history,
                                   const Neighborhood& members, const FeatureScaler& scaler) {
    if (history == 0) {
        throw PreconditionError("history must be at least 1");
    }
    if (t < history || t > clean.size()) {
        throw PreconditionError("insufficient history: need " + std::to_string(history) +
                                " steps before index " + std::to_string(t) + ", have " +
                                std::to_string(std::min(t, clean.size())));
    }
    FeatureMatrix m;
    m.target_probe = target;
    m.history = history;
    m.probes = members.members;
    std::vector<std::size_t> probe_index;
    probe_index.reserve(members.members.size());
    for (const auto& id : members.members) {
        probe_index.push_back(clean.index_of(id));
    }
    m.rows.reserve(history * probe_index.size());
    for (std::size_t lag = 1; lag <= history; ++lag) {
        const std::size_t index = t - lag;
        for (std::size_t j = 0; j < probe_index.size(); ++j) {
            FeatureRow row = raw_features(clean, probe_index[j], index, members.distances_km[j]);
            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                bool clipped = false;
                row[f] = scaler.scale(f, row[f], &clipped);
                m.clipped += clipped ? 1 : 0;
            }
            m.rows.push_back(row);
        }
    }
    return m;
}

FeatureMatrix build_feature_matrix_at(const ingest::CleanDataset& clean, const std::string& target,
                                      Timestamp t, std::size_t history, const Neighborhood& members,
                                      const FeatureScaler& scaler) {
    const auto& grid = clean.grid();
    // `t` may sit one step past the last grid point.
    const std::size_t index = (!grid.empty() && t == grid.back() + clean.step())
                                  ? grid.size()
                                  : clean.index_at(t);
    return build_feature_matrix(clean, target, index, history, members, scaler);
}

}  // namespace v2n::features
