#include "v2n/scaling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "v2n/error.hpp"
#include "v2n/queueing.hpp"
#include "v2n/text.hpp"
#include "v2n/time.hpp"

namespace v2n::scaling {

const std::vector<ServiceProfile>& service_profiles() {
    static const std::vector<ServiceProfile> profiles = {
        {"remote_driving", kMuEvs, 0.005},
        {"cooperative_awareness", kMuEvs / 20.0, 0.1},
        {"hazard_warning", kMuEvs / 2.0, 0.01},
    };
    return profiles;
}

const ServiceProfile& service_profile(std::string_view name) {
    for (const auto& p : service_profiles()) {
        if (p.name == name) {
            return p;
        }
    }
    throw ConfigError("unknown service '" + std::string(name) +
                      "' (expected remote_driving, cooperative_awareness or hazard_warning)");
}

std::string Policy::name() const {
    switch (kind) {
        case PolicyKind::n_min: return "n_min_" + std::to_string(n_minutes);
        case PolicyKind::avg: return "avg";
        case PolicyKind::max: return "max";
    }
    return "?";
}

Policy Policy::n_min(std::size_t minutes, std::string forecaster) {
    if (minutes == 0 || minutes % 5 != 0) {
        throw ConfigError("n must be a positive multiple of 5 minutes, got " +
                          std::to_string(minutes));
    }
    Policy p;
    p.kind = PolicyKind::n_min;
    p.n_minutes = minutes;
    p.forecaster = std::move(forecaster);
    return p;
}

Policy Policy::avg() {
    Policy p;
    p.kind = PolicyKind::avg;
    return p;
}

Policy Policy::max() { return Policy{}; }

Policy parse_policy(std::string_view text) {
    if (text == "max") return Policy::max();
    if (text == "avg") return Policy::avg();
    if (text.starts_with("n_min")) {
        std::string rest(text.substr(5));
        if (rest.empty()) {
            return Policy::n_min(30);
        }
        if (rest[0] != ':' && rest[0] != '_') {
            throw ConfigError("bad policy '" + std::string(text) + "'");
        }
        rest.erase(0, 1);
        const auto colon = rest.find(':');
        const std::string minutes = rest.substr(0, colon);
        std::size_t n = 0;
        try {
            std::size_t used = 0;
            n = std::stoul(minutes, &used);
            if (used != minutes.size()) throw std::invalid_argument(minutes);
        } catch (const std::exception&) {
            throw ConfigError("bad n in policy '" + std::string(text) + "'");
        }
        return colon == std::string::npos ? Policy::n_min(n)
                                          : Policy::n_min(n, rest.substr(colon + 1));
    }
    throw ConfigError("unknown policy '" + std::string(text) + "' (expected max, avg or n_min:<n>)");
}

namespace {

struct EpochPeak {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::optional<double> peak;  // unset when the forecaster failed
    std::string failure;
};

std::size_t steps_per_epoch(std::size_t n_minutes) {
    if (n_minutes == 0 || n_minutes % 5 != 0) {
        throw PreconditionError("n must be a positive multiple of 5 minutes");
    }
    return n_minutes / 5;
}

std::vector<EpochPeak> epoch_peaks(const forecast::SeriesView& view, std::size_t begin,
                                   std::size_t end, forecast::Forecaster& forecaster,
                                   std::size_t n_minutes) {
    const std::size_t m = steps_per_epoch(n_minutes);
    const auto& flow = view.flow();
    if (begin >= end || end > flow.size()) {
        throw PreconditionError("scaling range is empty or outside the series");
    }
    std::vector<EpochPeak> out;
    for (std::size_t t = begin; t < end; t += m) {
        EpochPeak e;
        e.begin = t;
        e.end = std::min(end, t + m);
        try {
            double peak = std::max(0.0, flow[t]);
            for (std::size_t k = 1; k < m; ++k) {
                peak = std::max(peak, std::max(0.0, forecaster.forecast(t, k)));
            }
            e.peak = peak;
        } catch (const std::exception& ex) {
            e.failure = ex.what();
        }
        out.push_back(std::move(e));
    }
    return out;
}

void check_feasible(const ServiceProfile& profile) {
    // Throws InfeasibleError for T0 <= 1/mu.
    queueing::min_servers(0.0, profile.mu, profile.T0);
}

ScalingTrace size_epochs(const std::vector<EpochPeak>& epochs, const std::vector<Timestamp>& grid,
                         std::size_t begin, std::size_t end, const ServiceProfile& profile,
                         std::string policy) {
    check_feasible(profile);
    ScalingTrace trace;
    trace.policy = std::move(policy);
    trace.profile = profile;
    trace.first_index = begin;
    trace.grid.assign(grid.begin() + static_cast<std::ptrdiff_t>(begin),
                      grid.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t c = 1;
    double peak = 0.0;
    for (const auto& e : epochs) {
        if (e.peak) {
            peak = *e.peak;
            c = queueing::min_servers(per_second(peak), profile.mu, profile.T0);
        } else {
            trace.incidents.push_back(format_timestamp(grid[e.begin]) + ": " + e.failure +
                                      "; holding c=" + std::to_string(c));
        }
        trace.intervals.push_back({e.begin, e.end, c, peak});
    }
    return trace;
}

}  // namespace

ScalingTrace n_min_schedule(const forecast::SeriesView& view, std::size_t begin, std::size_t end,
                            forecast::Forecaster& forecaster, std::size_t n_minutes,
                            const ServiceProfile& profile) {
    check_feasible(profile);
    const auto epochs = epoch_peaks(view, begin, end, forecaster, n_minutes);
    return size_epochs(epochs, view.clean->grid(), begin, end, profile,
                       Policy::n_min(n_minutes).name());
}

ScalingTrace static_schedule(std::span<const double> train_flows, PolicyKind kind,
                             const std::vector<Timestamp>& grid, std::size_t test_begin,
                             std::size_t test_end, const ServiceProfile& profile) {
    if (train_flows.empty()) {
        throw PreconditionError("static scaling needs a non-empty training segment");
    }
    if (kind == PolicyKind::n_min) {
        throw PreconditionError("static_schedule takes avg or max");
    }
    if (test_begin >= test_end || test_end > grid.size()) {
        throw PreconditionError("scaling range is empty or outside the grid");
    }
    double flow = 0.0;
    if (kind == PolicyKind::max) {
        flow = *std::max_element(train_flows.begin(), train_flows.end());
    } else {
        flow = std::accumulate(train_flows.begin(), train_flows.end(), 0.0) /
               static_cast<double>(train_flows.size());
    }
    flow = std::max(0.0, flow);
    EpochPeak all{test_begin, test_end, flow, {}};
    Policy p;
    p.kind = kind;
    return size_epochs({all}, grid, test_begin, test_end, profile, p.name());
}

ScalingReport replay(const ScalingTrace& trace, const ingest::TrafficSeries& realized,
                     double reference_cost) {
    ScalingReport r;
    r.policy = trace.policy;
    r.profile = trace.profile.name;
    if (realized.step <= 0) {
        throw PreconditionError("realized series has no step");
    }
    std::size_t expected = trace.first_index;
    for (const auto& iv : trace.intervals) {
        if (iv.begin != expected || iv.end <= iv.begin) {
            throw PreconditionError("trace intervals are not contiguous");
        }
        expected = iv.end;
        for (std::size_t i = iv.begin; i < iv.end; ++i) {
            const std::size_t local = i - trace.first_index;
            if (local >= trace.grid.size()) {
                throw PreconditionError("trace interval runs past its timestamps");
            }
            const Timestamp ts = trace.grid[local];
            const Timestamp offset = ts - realized.start;
            if (offset < 0 || offset % realized.step != 0 ||
                static_cast<std::size_t>(offset / realized.step) >= realized.values.size()) {
                throw PreconditionError("realized flows are not aligned with the trace at " +
                                        format_timestamp(ts));
            }
            const double lambda =
                per_second(std::max(0.0, realized.values[static_cast<std::size_t>(offset / realized.step)]));
            const double cap = static_cast<double>(iv.c) * trace.profile.mu;
            const bool violated =
                lambda >= cap ||
                queueing::mean_system_time(lambda, trace.profile.mu, iv.c) > trace.profile.T0;
            r.violations += violated ? 1 : 0;
            r.cost += static_cast<double>(iv.c);
            ++r.steps;
        }
    }
    if (r.steps > 0) {
        r.violation_ratio = static_cast<double>(r.violations) / static_cast<double>(r.steps);
    }
    if (reference_cost > 0.0) {
        r.cost_ratio = r.cost / reference_cost;
    }
    return r;
}

std::vector<PolicyOutcome> compare_policies(const std::vector<Policy>& policies,
                                            const ingest::CleanDataset& clean,
                                            const std::string& target,
                                            const ingest::ScenarioSplit& scenario,
                                            const std::vector<ServiceProfile>& profiles,
                                            const CompareOptions& options) {
    if (policies.empty() || profiles.empty()) {
        throw PreconditionError("policy comparison needs at least one policy and one service");
    }
    const auto train = ingest::index_range(clean.grid(), scenario.train);
    const auto test = ingest::index_range(clean.grid(), scenario.test);
    const auto view = forecast::make_view(clean, target, options.radius_km);
    const auto& flow = view.flow();
    const std::span<const double> train_flows(flow.data() + train.begin, train.size());
    const ingest::TrafficSeries realized = clean.series(target);

    // Forecast peaks do not depend on the service, so each n_min policy is
    // forecast once.
    std::vector<std::vector<EpochPeak>> peaks(policies.size());
    std::vector<std::string> failures(policies.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < policies.size(); i = next++) {
            const Policy& p = policies[i];
            if (p.kind != PolicyKind::n_min) continue;
            try {
                const auto id = forecast::parse_technique_id(p.forecaster);
                auto f = forecast::make_forecaster(id.technique, id.mode, options.techniques,
                                                   options.seed);
                f->fit(view, train.begin, train.end);
                peaks[i] = epoch_peaks(view, test.begin, test.end, *f, p.n_minutes);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };
    const std::size_t jobs = std::min(
        policies.size(),
        options.jobs == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency())
                          : options.jobs);
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }

    std::vector<PolicyOutcome> out;
    for (const auto& profile : profiles) {
        double reference = 0.0;
        std::string reference_error;
        try {
            const auto max_trace = static_schedule(train_flows, PolicyKind::max, clean.grid(),
                                                   test.begin, test.end, profile);
            reference = replay(max_trace, realized).cost;
        } catch (const std::exception& e) {
            reference_error = e.what();
        }
        for (std::size_t i = 0; i < policies.size(); ++i) {
            const Policy& p = policies[i];
            PolicyOutcome o;
            o.report.policy = p.name();
            o.report.profile = profile.name;
            try {
                if (!reference_error.empty()) {
                    throw Error(reference_error);
                }
                if (p.kind == PolicyKind::n_min) {
                    if (!failures[i].empty()) {
                        throw Error(failures[i]);
                    }
                    o.trace = size_epochs(peaks[i], clean.grid(), test.begin, test.end, profile,
                                          p.name());
                } else {
                    o.trace = static_schedule(train_flows, p.kind, clean.grid(), test.begin,
                                              test.end, profile);
                }
                o.report = replay(o.trace, realized, reference);
            } catch (const std::exception& e) {
                o.error = e.what();
            }
            out.push_back(std::move(o));
        }
    }
    return out;
}

void write_report_csv(std::ostream& out, const std::vector<ScalingReport>& reports) {
    out << "policy,service,steps,cost,cost_ratio,violations,violation_ratio\n";
    for (const auto& r : reports) {
        out << csv_field(r.policy) << ',' << csv_field(r.profile) << ',' << r.steps << ','
            << format_double(r.cost) << ',' << format_double(r.cost_ratio) << ',' << r.violations
            << ',' << format_double(r.violation_ratio) << '\n';
    }
}

namespace {

constexpr const char* kTraceHeader =
    "policy,service,timestamp,c,peak_flow,realized_flow,T_s,violation";

}  // namespace

void write_trace_csv(std::ostream& out, const ScalingTrace& trace,
                     const ingest::TrafficSeries& realized, bool header) {
    if (header) {
        out << kTraceHeader << '\n';
    }
    for (const auto& iv : trace.intervals) {
        for (std::size_t i = iv.begin; i < iv.end; ++i) {
            const Timestamp ts = trace.grid.at(i - trace.first_index);
            const Timestamp offset = ts - realized.start;
            if (offset < 0 || offset % realized.step != 0 ||
                static_cast<std::size_t>(offset / realized.step) >= realized.values.size()) {
                throw PreconditionError("realized flows are not aligned with the trace");
            }
            const double f = realized.values[static_cast<std::size_t>(offset / realized.step)];
            const double lambda = per_second(std::max(0.0, f));
            const bool unstable = lambda >= static_cast<double>(iv.c) * trace.profile.mu;
            const double T = unstable ? std::numeric_limits<double>::infinity()
                                      : queueing::mean_system_time(lambda, trace.profile.mu, iv.c);
            const bool violated = unstable || T > trace.profile.T0;
            out << csv_field(trace.policy) << ',' << trace.profile.name << ','
                << format_timestamp(ts) << ',' << iv.c << ',' << format_double(iv.peak_flow)
                << ',' << format_double(f) << ',' << (unstable ? "inf" : format_double(T)) << ','
                << (violated ? 1 : 0) << '\n';
        }
    }
}

std::vector<TraceFile> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) {
        throw FormatError(std::string("trace header must be '") + kTraceHeader + "'");
    }
    std::vector<TraceFile> files;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) {
            throw FormatError("trace row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " fields, expected 8");
        }
        try {
            const Timestamp ts = parse_timestamp(cells[2]);
            if (files.empty() || cells[0] != files.back().trace.policy ||
                cells[1] != files.back().trace.profile.name) {
                TraceFile tf;
                tf.trace.policy = cells[0];
                tf.trace.profile = service_profile(cells[1]);
                tf.realized.start = ts;
                tf.realized.step = kStepSeconds;
                files.push_back(std::move(tf));
            }
            TraceFile& tf = files.back();
            const std::size_t local = tf.trace.grid.size();
            if (ts != tf.realized.start + static_cast<Timestamp>(local) * kStepSeconds) {
                throw FormatError("timestamps are not on a contiguous 5-minute grid");
            }
            tf.trace.grid.push_back(ts);
            tf.trace.intervals.push_back(
                {local, local + 1, std::stoul(cells[3]), std::stod(cells[4])});
            tf.realized.values.push_back(std::stod(cells[5]));
        } catch (const FormatError& e) {
            throw FormatError("trace row " + std::to_string(row) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw FormatError("trace row " + std::to_string(row) + ": " + e.what());
        } catch (const std::logic_error&) {
            throw FormatError("trace row " + std::to_string(row) + ": bad number");
        }
    }
    if (files.empty()) {
        throw FormatError("trace has no rows");
    }
    return files;
}

}  // namespace v2n::scaling
