#include "v2n/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include "json.hpp"

#include "v2n/error.hpp"

namespace v2n::ingest {

namespace {

constexpr std::size_t kColumnCount = 9;

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty()) {
        return false;
    }
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Field values by CSV column name. Returns an error message or empty on success.
std::string build_record(const std::map<std::string, std::string>& f, Timestamp interval,
                         ProbeRecord& rec) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = f.find(key);
        return it == f.end() ? nullptr : &it->second;
    };
    const std::string* id = get("probe_id");
    if (id == nullptr || id->empty()) {
        return "missing probe_id";
    }
    rec.probe_id = *id;
    const std::string* ts = get("timestamp");
    if (ts == nullptr) {
        return "missing timestamp";
    }
    Timestamp raw_ts = 0;
    try {
        raw_ts = parse_timestamp(*ts);
    } catch (const FormatError& e) {
        return e.what();
    }
    const Timestamp snapped =
        static_cast<Timestamp>(std::llround(static_cast<double>(raw_ts) / interval)) * interval;
    if (std::llabs(snapped - raw_ts) * 2 > interval) {
        return "timestamp too far from the grid";
    }
    rec.timestamp = snapped;

    auto number = [&](const char* key, double& out, bool required) -> std::string {
        const std::string* v = get(key);
        if (v == nullptr || v->empty()) {
            if (required) {
                return std::string("missing ") + key;
            }
            out = 0.0;
            return {};
        }
        if (!parse_double(*v, out)) {
            return std::string("unparseable ") + key + " '" + *v + "'";
        }
        return {};
    };

    double flow = 0.0, accuracy = 0.0;
    for (auto [key, dst, required] :
         {std::tuple<const char*, double*, bool>{"latitude", &rec.latitude, true},
          {"longitude", &rec.longitude, true},
          {"offset_m", &rec.offset_m, false},
          {"flow", &flow, true},
          {"speed", &rec.speed, false},
          {"accuracy", &accuracy, false}}) {
        if (auto err = number(key, *dst, required); !err.empty()) {
            return err;
        }
    }
    if (const std::string* road = get("road_name")) {
        rec.road_name = *road;
    }
    if (flow < 0) {
        return "negative flow";
    }
    if (flow != std::floor(flow)) {
        return "non-integer flow";
    }
    rec.flow = static_cast<std::int64_t>(flow);
    if (rec.speed < 0) {
        return "negative speed";
    }
    if (accuracy < 0 || accuracy > 100) {
        return "accuracy outside 0..100";
    }
    rec.accuracy = static_cast<int>(std::lround(accuracy));
    if (rec.latitude < -90 || rec.latitude > 90) {
        return "latitude outside [-90, 90]";
    }
    if (rec.longitude < -180 || rec.longitude > 180) {
        return "longitude outside [-180, 180]";
    }
    return {};
}

RawDataset parse_csv(std::istream& in, Timestamp interval) {
    RawDataset out;
    out.interval = interval;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty CSV input: header required");
    }
    const auto header = split_csv_line(line);
    const auto expected = split_csv_line(kCsvHeader);
    if (header != expected) {
        throw FormatError("unexpected CSV header; expected '" + std::string(kCsvHeader) + "'");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != kColumnCount) {
            out.errors.push_back({line_no, "expected 9 columns, got " + std::to_string(fields.size())});
            continue;
        }
        std::map<std::string, std::string> named;
        for (std::size_t i = 0; i < kColumnCount; ++i) {
            named.emplace(expected[i], fields[i]);
        }
        ProbeRecord rec;
        if (auto err = build_record(named, interval, rec); !err.empty()) {
            out.errors.push_back({line_no, std::move(err)});
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

// Attribute aliases used by the 5T Torino feed.
const std::map<std::string, std::string>& xml_aliases() {
    static const std::map<std::string, std::string> aliases{
        {"lcd1", "probe_id"},     {"lat", "latitude"},   {"lng", "longitude"},
        {"offset", "offset_m"},   {"Road_name", "road_name"},
        {"start_time", "timestamp"}};
    return aliases;
}

void collect_fdt(const boost::property_tree::ptree& node, std::size_t& ordinal, Timestamp interval,
                 RawDataset& out) {
    for (const auto& [name, child] : node) {
        if (name == "FDT_data") {
            ++ordinal;
            std::map<std::string, std::string> fields;
            auto absorb = [&](const boost::property_tree::ptree& attrs, bool allow_alias) {
                for (const auto& [key, value] : attrs) {
                    std::string k = key;
                    if (allow_alias) {
                        if (auto it = xml_aliases().find(k); it != xml_aliases().end()) {
                            if (fields.count(it->second) != 0) {
                                continue;
                            }
                            k = it->second;
                        }
                    }
                    fields[k] = value.data();
                }
            };
            if (auto attrs = child.get_child_optional("<xmlattr>")) {
                absorb(*attrs, true);
            }
            // Torino nests flow and speed in <speedflow flow=".." speed=".."/>.
            if (auto sf = child.get_child_optional("speedflow.<xmlattr>")) {
                for (const auto& [key, value] : *sf) {
                    if ((key == "flow" || key == "speed") && fields.count(key) == 0) {
                        fields[key] = value.data();
                    }
                }
            }
            ProbeRecord rec;
            if (auto err = build_record(fields, interval, rec); !err.empty()) {
                out.errors.push_back({ordinal, std::move(err)});
            } else {
                out.records.push_back(std::move(rec));
            }
        } else if (name != "<xmlattr>" && name != "<xmlcomment>") {
            collect_fdt(child, ordinal, interval, out);
        }
    }
}

RawDataset parse_xml(std::istream& in, Timestamp interval) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_xml(in, tree);
    } catch (const boost::property_tree::xml_parser_error& e) {
        throw FormatError(std::string("malformed XML: ") + e.what());
    }
    RawDataset out;
    out.interval = interval;
    std::size_t ordinal = 0;
    collect_fdt(tree, ordinal, interval, out);
    return out;
}

}  // namespace

std::vector<Timestamp> RawDataset::grid() const {
    std::vector<Timestamp> g;
    if (records.empty()) {
        return g;
    }
    auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                        [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    for (Timestamp t = lo->timestamp; t <= hi->timestamp; t += interval) {
        g.push_back(t);
    }
    return g;
}

Format parse_format(std::string_view name) {
    if (name == "csv") return Format::csv;
    if (name == "xml") return Format::xml;
    throw FormatError("unknown format '" + std::string(name) + "' (expected csv or xml)");
}

RawDataset parse_records(std::istream& in, Format format, Timestamp interval) {
    if (interval <= 0) {
        throw PreconditionError("interval must be positive");
    }
    return format == Format::csv ? parse_csv(in, interval) : parse_xml(in, interval);
}

RawDataset parse_records(std::string_view text, Format format, Timestamp interval) {
    std::istringstream in{std::string(text)};
    return parse_records(in, format, interval);
}

FilterResult filter_spurious(const RawDataset& raw, double min_coverage) {
    const auto grid = raw.grid();
    if (grid.empty()) {
        throw PreconditionError("cannot filter an empty dataset: grid is empty");
    }
    std::map<std::string, std::set<Timestamp>> seen;
    for (const auto& r : raw.records) {
        seen[r.probe_id].insert(r.timestamp);
    }
    const double needed = min_coverage * static_cast<double>(grid.size());
    FilterResult out;
    out.kept.interval = raw.interval;
    out.kept.errors = raw.errors;
    std::set<std::string> removed;
    for (const auto& [id, stamps] : seen) {
        // Small slack so that an exact boundary (e.g. 80 of 100) is kept.
        if (static_cast<double>(stamps.size()) + 1e-9 < needed) {
            removed.insert(id);
        }
    }
    for (const auto& r : raw.records) {
        if (removed.count(r.probe_id) == 0) {
            out.kept.records.push_back(r);
        }
    }
    out.removed.assign(removed.begin(), removed.end());
    return out;
}

CleanDataset::CleanDataset(std::vector<Timestamp> grid, std::vector<ProbeInfo> probes,
                           std::vector<Columns> columns)
    : grid_(std::move(grid)), probes_(std::move(probes)), columns_(std::move(columns)) {
    if (probes_.size() != columns_.size()) {
        throw PreconditionError("probe and column counts differ");
    }
    for (const auto& c : columns_) {
        if (c.flow.size() != grid_.size() || c.speed.size() != grid_.size() ||
            c.accuracy.size() != grid_.size()) {
            throw PreconditionError("probe column length differs from the grid");
        }
    }
    if (grid_.size() >= 2) {
        step_ = grid_[1] - grid_[0];
    }
}

std::optional<std::size_t> CleanDataset::find(std::string_view probe_id) const {
    for (std::size_t i = 0; i < probes_.size(); ++i) {
        if (probes_[i].id == probe_id) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t CleanDataset::index_of(std::string_view probe_id) const {
    if (auto i = find(probe_id)) {
        return *i;
    }
    throw PreconditionError("unknown probe '" + std::string(probe_id) + "'");
}

TrafficSeries CleanDataset::series(std::string_view probe_id) const {
    const std::size_t p = index_of(probe_id);
    TrafficSeries s;
    s.probe_id = probes_[p].id;
    s.start = grid_.empty() ? 0 : grid_.front();
    s.step = step_;
    s.values = columns_[p].flow;
    return s;
}

std::size_t CleanDataset::index_at(Timestamp ts) const {
    auto it = std::lower_bound(grid_.begin(), grid_.end(), ts);
    if (it == grid_.end() || *it != ts) {
        throw PreconditionError("timestamp " + format_timestamp(ts) + " is not on the grid");
    }
    return static_cast<std::size_t>(it - grid_.begin());
}

RawDataset CleanDataset::to_raw() const {
    RawDataset raw;
    raw.interval = step_;
    for (std::size_t p = 0; p < probes_.size(); ++p) {
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            ProbeRecord r;
            r.probe_id = probes_[p].id;
            r.latitude = probes_[p].latitude;
            r.longitude = probes_[p].longitude;
            r.offset_m = probes_[p].offset_m;
            r.road_name = probes_[p].road_name;
            r.flow = static_cast<std::int64_t>(std::llround(columns_[p].flow[i]));
            r.speed = columns_[p].speed[i];
            r.accuracy = static_cast<int>(std::lround(columns_[p].accuracy[i]));
            r.timestamp = grid_[i];
            raw.records.push_back(std::move(r));
        }
    }
    return raw;
}

CleanDataset single_probe_dataset(const TrafficSeries& series, ProbeInfo info) {
    if (info.id.empty()) {
        info.id = series.probe_id.empty() ? "synthetic" : series.probe_id;
    }
    std::vector<Timestamp> grid(series.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid[i] = series.time_at(i);
    }
    CleanDataset::Columns cols;
    cols.flow = series.values;
    cols.speed.assign(series.size(), 50.0);
    cols.accuracy.assign(series.size(), 100.0);
    return CleanDataset(std::move(grid), {std::move(info)}, {std::move(cols)});
}

SanitizeResult sanitize(const RawDataset& raw) {
    SanitizeResult out;
    SanitationReport& rep = out.report;
    rep.records_in = raw.records.size();
    rep.row_errors = raw.errors.size();
    const auto grid = raw.grid();
    if (grid.empty()) {
        throw PreconditionError("cannot sanitize an empty dataset");
    }

    // Last record by ingestion order wins at a (probe, timestamp).
    std::map<std::string, std::map<Timestamp, const ProbeRecord*>> by_probe;
    std::set<Timestamp> reported;
    for (const auto& r : raw.records) {
        auto& slot = by_probe[r.probe_id][r.timestamp];
        if (slot != nullptr) {
            ++rep.duplicates_collapsed;
        }
        slot = &r;
        reported.insert(r.timestamp);
    }

    std::vector<ProbeInfo> probes;
    std::vector<CleanDataset::Columns> columns;
    for (const auto& [id, series] : by_probe) {
        if (series.empty()) {
            throw PreconditionError("probe '" + id + "' has no records");
        }
        const ProbeRecord& meta = *series.rbegin()->second;
        probes.push_back({id, meta.latitude, meta.longitude, meta.offset_m, meta.road_name});

        CleanDataset::Columns cols;
        cols.flow.reserve(grid.size());
        cols.speed.reserve(grid.size());
        cols.accuracy.reserve(grid.size());
        const ProbeRecord* held = nullptr;
        std::size_t leading = 0;
        auto it = series.begin();
        for (Timestamp ts : grid) {
            if (it != series.end() && it->first == ts) {
                held = it->second;
                ++it;
            } else if (held == nullptr) {
                ++leading;
                cols.flow.push_back(0);
                cols.speed.push_back(0);
                cols.accuracy.push_back(0);
                continue;
            } else if (reported.count(ts) != 0) {
                ++rep.sweep1_filled;
            } else {
                ++rep.sweep2_filled;
            }
            cols.flow.push_back(static_cast<double>(held->flow));
            cols.speed.push_back(held->speed);
            cols.accuracy.push_back(held->accuracy);
        }
        const ProbeRecord& first = *series.begin()->second;
        for (std::size_t i = 0; i < leading; ++i) {
            cols.flow[i] = static_cast<double>(first.flow);
            cols.speed[i] = first.speed;
            cols.accuracy[i] = first.accuracy;
        }
        rep.leading_backfilled += leading;
        columns.push_back(std::move(cols));
    }
    rep.grid_points = grid.size();
    rep.probes_kept = probes.size();
    out.clean = CleanDataset(grid, std::move(probes), std::move(columns));
    return out;
}

SanitizeResult clean_pipeline(const RawDataset& raw, double min_coverage) {
    FilterResult filtered = filter_spurious(raw, min_coverage);
    SanitizeResult out = sanitize(filtered.kept);
    out.report.records_in = raw.records.size();
    out.report.probes_removed = filtered.removed.size();
    out.report.removed = std::move(filtered.removed);
    return out;
}

std::string report_json(const SanitationReport& r) {
    nlohmann::ordered_json j;
    j["records_in"] = r.records_in;
    j["row_errors"] = r.row_errors;
    j["duplicates_collapsed"] = r.duplicates_collapsed;
    j["probes_removed"] = r.probes_removed;
    j["removed"] = r.removed;
    j["probes_kept"] = r.probes_kept;
    j["grid_points"] = r.grid_points;
    j["sweep1_filled"] = r.sweep1_filled;
    j["sweep2_filled"] = r.sweep2_filled;
    j["leading_backfilled"] = r.leading_backfilled;
    return j.dump(2) + "\n";
}

void write_csv(std::ostream& out, const CleanDataset& clean) {
    out << kCsvHeader << '\n';
    for (std::size_t p = 0; p < clean.probe_count(); ++p) {
        const ProbeInfo& info = clean.probes()[p];
        const auto& cols = clean.columns(p);
        const std::string prefix_probe = csv_escape(info.id);
        const std::string location = format_double(info.latitude) + ',' +
                                     format_double(info.longitude) + ',' +
                                     format_double(info.offset_m) + ',' + csv_escape(info.road_name);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            out << prefix_probe << ',' << format_timestamp(clean.grid()[i]) << ',' << location << ','
                << std::llround(cols.flow[i]) << ',' << format_double(cols.speed[i]) << ','
                << std::lround(cols.accuracy[i]) << '\n';
        }
    }
}

CleanDataset read_clean_csv(std::istream& in) {
    RawDataset raw = parse_records(in, Format::csv);
    if (!raw.errors.empty()) {
        const auto& e = raw.errors.front();
        throw FormatError("dataset line " + std::to_string(e.line) + ": " + e.message);
    }
    return sanitize(raw).clean;
}

CleanDataset read_clean_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    return read_clean_csv(in);
}

std::vector<ScenarioSplit> default_scenarios() {
    auto day = [](unsigned m, unsigned d) { return from_civil(2020, m, d); };
    return {
        {"non-covid", {day(1, 28), day(2, 28)}, {day(2, 29), day(3, 7)}},
        {"covid", {day(2, 6), day(3, 7)}, {day(3, 8), day(3, 15)}},
    };
}

namespace {

std::string scenario_label(const std::string& name) {
    if (name == "non-covid") return "non-COVID";
    if (name == "covid") return "COVID";
    return name;
}

}  // namespace

std::vector<ScenarioSplit> split_scenarios(const CleanDataset& clean,
                                           const std::vector<ScenarioSplit>& overrides) {
    std::vector<ScenarioSplit> splits = overrides.empty() ? default_scenarios() : overrides;
    const auto& grid = clean.grid();
    if (grid.empty()) {
        throw PreconditionError("dataset is empty");
    }
    std::vector<std::string> problems;
    for (const auto& s : splits) {
        if (s.train.last_day < s.train.first_day || s.test.last_day < s.test.first_day) {
            problems.push_back(scenario_label(s.name) + " range is reversed");
            continue;
        }
        if (s.train.last_day >= s.test.first_day) {
            problems.push_back(scenario_label(s.name) + " training must end before testing starts");
        }
        for (auto [part, range] : {std::pair<const char*, const DateRange*>{"train", &s.train},
                                   {"test", &s.test}}) {
            const bool covered = grid.front() <= range->first_day &&
                                 grid.back() >= range->end_exclusive() - clean.step();
            if (!covered) {
                problems.push_back(scenario_label(s.name) + " " + part + " range missing (" +
                                   format_date(range->first_day) + ".." +
                                   format_date(range->last_day) + ")");
            }
        }
    }
    if (!problems.empty()) {
        std::string msg;
        for (const auto& p : problems) {
            if (!msg.empty()) msg += "; ";
            msg += p;
        }
        throw PreconditionError(msg);
    }
    return splits;
}

const ScenarioSplit& find_scenario(const std::vector<ScenarioSplit>& splits, std::string_view name) {
    for (const auto& s : splits) {
        if (s.name == name) {
            return s;
        }
    }
    throw PreconditionError("unknown scenario '" + std::string(name) + "'");
}

IndexRange index_range(const std::vector<Timestamp>& grid, const DateRange& range) {
    auto lo = std::lower_bound(grid.begin(), grid.end(), range.first_day);
    auto hi = std::lower_bound(grid.begin(), grid.end(), range.end_exclusive());
    return {static_cast<std::size_t>(lo - grid.begin()), static_cast<std::size_t>(hi - grid.begin())};
}

}  // namespace v2n::ingest
