#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "v2n/time.hpp"

namespace v2n::ingest {

// One 5-minute aggregated measurement from one road probe.
struct ProbeRecord {
    std::string probe_id;
    double latitude = 0.0;
    double longitude = 0.0;
    double offset_m = 0.0;
    std::string road_name;
    std::int64_t flow = 0;  // vehicles/hour
    double speed = 0.0;     // km/hour
    int accuracy = 0;       // percent
    Timestamp timestamp = 0;
};

struct RowError {
    std::size_t line = 0;  // 1-based; header is line 1 for CSV, element ordinal for XML
    std::string message;
};

struct RawDataset {
    std::vector<ProbeRecord> records;
    Timestamp interval = kStepSeconds;
    std::vector<RowError> errors;

    // Uniform grid from the earliest to the latest record timestamp.
    std::vector<Timestamp> grid() const;
};

enum class Format { csv, xml };

Format parse_format(std::string_view name);

inline constexpr std::string_view kCsvHeader =
    "probe_id,timestamp,latitude,longitude,offset_m,road_name,flow,speed,accuracy";

// Malformed rows are collected in RawDataset::errors. A bad header or an
// unreadable document throws FormatError. Timestamps are snapped onto the
// `interval` grid; a snap further than `interval / 2` is a row error.
RawDataset parse_records(std::istream& in, Format format, Timestamp interval = kStepSeconds);
RawDataset parse_records(std::string_view text, Format format, Timestamp interval = kStepSeconds);

struct FilterResult {
    RawDataset kept;
    std::vector<std::string> removed;  // sorted by probe id
};

// Drops probes that report fewer than `min_coverage * |grid|` distinct grid
// timestamps. Throws PreconditionError on an empty dataset.
FilterResult filter_spurious(const RawDataset& raw, double min_coverage = 0.8);

struct ProbeInfo {
    std::string id;
    double latitude = 0.0;
    double longitude = 0.0;
    double offset_m = 0.0;
    std::string road_name;
};

// Flow series for one probe on a gap-free 5-minute grid.
struct TrafficSeries {
    std::string probe_id;
    Timestamp start = 0;
    Timestamp step = kStepSeconds;
    std::vector<double> values;  // vehicles/hour

    std::size_t size() const { return values.size(); }
    Timestamp time_at(std::size_t i) const { return start + static_cast<Timestamp>(i) * step; }
};

// Gap-free probe data. Every probe has one value per grid timestamp.
class CleanDataset {
public:
    struct Columns {
        std::vector<double> flow;
        std::vector<double> speed;
        std::vector<double> accuracy;
    };

    CleanDataset() = default;
    CleanDataset(std::vector<Timestamp> grid, std::vector<ProbeInfo> probes,
                 std::vector<Columns> columns);

    const std::vector<Timestamp>& grid() const { return grid_; }
    const std::vector<ProbeInfo>& probes() const { return probes_; }
    std::size_t probe_count() const { return probes_.size(); }
    std::size_t size() const { return grid_.size(); }
    Timestamp step() const { return step_; }

    std::optional<std::size_t> find(std::string_view probe_id) const;
    std::size_t index_of(std::string_view probe_id) const;  // throws PreconditionError
    const Columns& columns(std::size_t probe) const { return columns_[probe]; }

    TrafficSeries series(std::string_view probe_id) const;

    // Grid index of `ts`; throws PreconditionError if it is not on the grid.
    std::size_t index_at(Timestamp ts) const;

    // Back to raw records, one per probe per grid point.
    RawDataset to_raw() const;

private:
    std::vector<Timestamp> grid_;
    std::vector<ProbeInfo> probes_;
    std::vector<Columns> columns_;
    Timestamp step_ = kStepSeconds;
};

// Builds a one-probe dataset around a flow series (speed/accuracy constant).
CleanDataset single_probe_dataset(const TrafficSeries& series, ProbeInfo info = {});

struct SanitationReport {
    std::size_t records_in = 0;
    std::size_t row_errors = 0;
    std::size_t duplicates_collapsed = 0;
    std::size_t probes_removed = 0;
    std::size_t sweep1_filled = 0;     // gaps at timestamps some other probe reported
    std::size_t sweep2_filled = 0;     // grid timestamps no probe reported
    std::size_t leading_backfilled = 0;
    std::size_t grid_points = 0;
    std::size_t probes_kept = 0;
    std::vector<std::string> removed;
};

struct SanitizeResult {
    CleanDataset clean;
    SanitationReport report;
};

// Two-sweep last-value gap filling. Leading gaps take the probe's first value.
SanitizeResult sanitize(const RawDataset& raw);

// filter_spurious followed by sanitize, with one combined report.
SanitizeResult clean_pipeline(const RawDataset& raw, double min_coverage = 0.8);

std::string report_json(const SanitationReport& report);

void write_csv(std::ostream& out, const CleanDataset& clean);
// parse_records + sanitize; sanitize is the identity on a clean file.
CleanDataset read_clean_csv(std::istream& in);
CleanDataset read_clean_csv_file(const std::string& path);

// Inclusive calendar-day ranges.
struct DateRange {
    Timestamp first_day = 0;  // midnight UTC
    Timestamp last_day = 0;   // midnight UTC of the last included day

    Timestamp end_exclusive() const { return last_day + kDaySeconds; }
};

struct ScenarioSplit {
    std::string name;  // "non-covid" or "covid" for the built-in splits
    DateRange train;
    DateRange test;
};

std::vector<ScenarioSplit> default_scenarios();

// Validates the splits against the dataset grid. Without overrides the two
// built-in scenarios are returned; overrides are returned as given.
std::vector<ScenarioSplit> split_scenarios(const CleanDataset& clean,
                                           const std::vector<ScenarioSplit>& overrides = {});

const ScenarioSplit& find_scenario(const std::vector<ScenarioSplit>& splits, std::string_view name);

// Half-open grid index range covered by a date range.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

IndexRange index_range(const std::vector<Timestamp>& grid, const DateRange& range);

struct Snapshot {
    std::string bytes;
    Timestamp retrieved_at = 0;
};

// Plain HTTP GET. Throws TransportError on connection failure, timeout or a
// non-2xx status.
Snapshot fetch_snapshot(const std::string& url,
                        std::chrono::milliseconds timeout = std::chrono::seconds(10));

}  // namespace v2n::ingest
