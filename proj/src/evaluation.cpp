#include "v2n/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "v2n/error.hpp"
#include "v2n/random.hpp"
#include "v2n/text.hpp"
#include "v2n/time.hpp"

namespace v2n::evaluation {

double rmse(std::span<const double> actual, std::span<const double> forecast) {
    if (actual.size() != forecast.size()) {
        throw PreconditionError("rmse: " + std::to_string(actual.size()) + " actual values vs " +
                                std::to_string(forecast.size()) + " forecasts");
    }
    if (actual.empty()) {
        throw PreconditionError("rmse of an empty series");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double d = actual[i] - forecast[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(actual.size()));
}

std::size_t uniform_warmup(const forecast::TechniqueConfig& config) {
    std::size_t w = config.smoothing.season_len;
    for (const auto& [kind, net] : config.nets) {
        w = std::max(w, net.history);
    }
    return w;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ingest::CleanDataset& clean,
                                const EvalOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    if (spec.lookahead < 1) {
        throw PreconditionError("look-ahead must be at least 1");
    }
    if (clean.probe_count() == 0) {
        throw PreconditionError("dataset has no probes");
    }
    const auto splits = ingest::split_scenarios(clean, options.scenarios);
    const auto& scenario = ingest::find_scenario(splits, spec.scenario);
    const auto train = ingest::index_range(clean.grid(), scenario.train);
    const auto test = ingest::index_range(clean.grid(), scenario.test);

    const std::string target = !spec.target.empty()    ? spec.target
                               : !options.target.empty() ? options.target
                                                         : clean.probes().front().id;
    const auto view = forecast::make_view(clean, target, spec.radius_km);
    auto model = forecast::make_forecaster(spec.technique, spec.mode, options.techniques, spec.seed);
    model->fit(view, train.begin, train.end);

    const std::size_t warmup = options.warmup.value_or(uniform_warmup(options.techniques));
    const std::size_t k = spec.lookahead;
    const std::size_t first = test.begin + warmup;
    if (first >= test.end) {
        throw PreconditionError("test range of " + std::to_string(test.size()) +
                                " steps leaves nothing after a warmup of " + std::to_string(warmup));
    }
    if (first < k || first - k + 1 < train.end) {
        throw PreconditionError("look-ahead " + std::to_string(k) +
                                " reaches back into the training range; raise the warmup");
    }

    ExperimentResult r;
    r.spec = spec;
    r.spec.target = target;
    const auto& flow = view.flow();
    std::vector<double> actual, predicted;
    for (std::size_t j = first; j < test.end; ++j) {
        const double f = model->forecast(j - k, k);
        r.forecasts.push_back({clean.grid()[j], flow[j], f});
        actual.push_back(flow[j]);
        predicted.push_back(f);
    }
    r.rmse = rmse(actual, predicted);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<ExperimentResult> run_grid(const std::vector<ExperimentSpec>& specs,
                                       const ingest::CleanDataset& clean,
                                       const EvalOptions& options, std::size_t jobs) {
    if (specs.empty()) {
        throw PreconditionError("experiment grid is empty");
    }
    std::vector<ExperimentResult> results(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            try {
                results[i] = run_experiment(specs[i], clean, options);
            } catch (const std::exception& e) {
                results[i].spec = specs[i];
                results[i].error = e.what();
            }
        }
    };
    if (jobs == 0) {
        jobs = std::max(1u, std::thread::hardware_concurrency());
    }
    jobs = std::min(jobs, specs.size());
    if (jobs <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back(worker);
    }
    pool.clear();
    return results;
}

void write_grid_csv(std::ostream& out, const std::vector<ExperimentResult>& results) {
    out << "technique,mode,scenario,lookahead,radius_km,seed,target,forecasts,rmse,error\n";
    for (const auto& r : results) {
        const auto& s = r.spec;
        out << csv_field(s.technique) << ',' << forecast::mode_name(s.mode) << ','
            << csv_field(s.scenario) << ',' << s.lookahead << ','
            << (s.radius_km ? format_double(*s.radius_km) : "all") << ',' << s.seed << ','
            << csv_field(s.target) << ',' << r.forecasts.size() << ','
            << (r.ok() ? format_double(r.rmse) : "") << ',' << csv_field(r.error) << '\n';
    }
}

void write_forecast_csv(std::ostream& out, const std::vector<ForecastPoint>& points) {
    out << "timestamp,actual,forecast\n";
    for (const auto& p : points) {
        out << format_timestamp(p.timestamp) << ',' << format_double(p.actual) << ','
            << format_double(p.forecast) << '\n';
    }
}

std::vector<ExperimentSpec> parse_grid_json(std::string_view text, std::uint64_t default_seed) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grid is not valid JSON: ") + e.what());
    }
    if (!j.is_array()) {
        throw ConfigError("grid must be a JSON array of experiments");
    }
    std::vector<ExperimentSpec> specs;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& e = j[i];
        const std::string at = "grid[" + std::to_string(i) + "]";
        if (!e.is_object()) {
            throw ConfigError(at + ": expected an object");
        }
        ExperimentSpec s;
        s.seed = default_seed;
        try {
            for (const auto& [key, value] : e.items()) {
                if (key == "technique") {
                    const auto id = forecast::parse_technique_id(value.get<std::string>());
                    s.technique = id.technique;
                    if (!e.contains("mode")) s.mode = id.mode;
                } else if (key == "mode") {
                    s.mode = forecast::parse_mode(value.get<std::string>());
                } else if (key == "scenario") {
                    s.scenario = value.get<std::string>();
                } else if (key == "lookahead") {
                    s.lookahead = value.get<std::size_t>();
                } else if (key == "radius_km") {
                    if (!value.is_null()) s.radius_km = value.get<double>();
                } else if (key == "seed") {
                    s.seed = value.get<std::uint64_t>();
                } else if (key == "target") {
                    s.target = value.get<std::string>();
                } else {
                    throw ConfigError(at + "." + key + ": unknown key");
                }
            }
        } catch (const json::exception& ex) {
            throw ConfigError(at + ": " + ex.what());
        }
        if (s.technique.empty() || s.scenario.empty()) {
            throw ConfigError(at + ": technique and scenario are required");
        }
        if (s.lookahead < 1) {
            throw ConfigError(at + ".lookahead: must be at least 1");
        }
        specs.push_back(std::move(s));
    }
    return specs;
}

SynthProfile parse_profile(std::string_view name) {
    if (name == "seasonal") return SynthProfile::seasonal;
    if (name == "trend_break") return SynthProfile::trend_break;
    if (name == "random_walk") return SynthProfile::random_walk;
    throw ConfigError("unknown profile '" + std::string(name) +
                      "' (expected seasonal, trend_break or random_walk)");
}

ingest::TrafficSeries synth_series(const SynthOptions& o) {
    if (o.days < 1) {
        throw PreconditionError("synthetic series needs at least one day");
    }
    if (!(o.amplitude >= 0.0)) {
        throw PreconditionError("amplitude must be non-negative");
    }
    if (!(o.noise_sd >= 0.0)) {
        throw PreconditionError("noise_sd must be non-negative");
    }
    constexpr std::size_t kPerDay = kDaySeconds / kStepSeconds;
    ingest::TrafficSeries s;
    s.probe_id = "synthetic";
    s.start = o.start != 0 ? o.start : from_civil(2020, 1, 28);
    s.step = kStepSeconds;
    const std::size_t n = o.days * kPerDay;
    const std::size_t break_day = o.break_day != 0 ? o.break_day : o.days / 2;
    Rng rng(o.seed);
    double walk = o.amplitude;
    s.values.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        double v = 0.0;
        if (o.profile == SynthProfile::random_walk) {
            walk = std::max(0.0, walk + o.noise_sd * rng.normal());
            v = walk;
        } else {
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(t % kPerDay) /
                                 static_cast<double>(kPerDay);
            v = o.amplitude * 0.5 * (1.0 - std::cos(phase));
            if (o.profile == SynthProfile::trend_break && t / kPerDay >= break_day) {
                v *= kBreakResidual;
            }
            if (o.noise_sd > 0.0) {
                v += o.noise_sd * rng.normal();
            }
            v = std::max(0.0, v);
        }
        s.values.push_back(v);
    }
    return s;
}

}  // namespace v2n::evaluation
