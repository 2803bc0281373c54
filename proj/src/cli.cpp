#include "v2n/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "v2n/config.hpp"
#include "v2n/error.hpp"
#include "v2n/evaluation.hpp"
#include "v2n/features.hpp"
#include "v2n/forecaster.hpp"
#include "v2n/ingest.hpp"
#include "v2n/queueing.hpp"
#include "v2n/report.hpp"
#include "v2n/scaling.hpp"
#include "v2n/time.hpp"

namespace v2n::cli {

namespace {

using nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Writes the whole payload at once; "-" or empty means standard output.
void write_output(const std::string& path, const std::string& bytes, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << bytes;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error("cannot write '" + path + "'");
    }
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw Error("failed writing '" + path + "'");
    }
}

std::uint64_t env_seed() {
    const char* s = std::getenv("V2N_SEED");
    if (s == nullptr || *s == '\0') {
        return 7;
    }
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used != std::string_view(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("V2N_SEED is not an integer: '") + s + "'");
    }
}

// Options shared by the commands that work on a scenario of a clean dataset.
struct DataOptions {
    std::string data;
    std::string format = "csv";
    std::string target;
    std::string scenario;
    std::string train;
    std::string test;
    std::string config;

    void add(CLI::App* app, bool need_scenario) {
        app->add_option("--data", data, "Clean CSV (or raw XML with --format xml)")->required();
        app->add_option("--format", format, "csv or xml")->check(CLI::IsMember({"csv", "xml"}));
        app->add_option("--target", target, "Target probe id (default: first probe)");
        if (need_scenario) {
            app->add_option("--scenario", scenario, "Scenario name (non-covid, covid, or custom)");
            app->add_option("--train", train, "Custom training days FIRST:LAST");
            app->add_option("--test", test, "Custom test days FIRST:LAST");
        }
        app->add_option("--config", config, "Run config JSON for technique settings");
    }

    config::RunConfig run_config(std::uint64_t seed) const {
        config::RunConfig c = config.empty() ? config::parse_config("{}", "", seed)
                                             : config::load_config(config, seed);
        if (!train.empty() || !test.empty()) {
            if (train.empty() || test.empty()) {
                throw ConfigError("--train and --test go together");
            }
            ingest::ScenarioSplit s;
            s.name = scenario.empty() ? "custom" : scenario;
            s.train = config::parse_date_range(train);
            s.test = config::parse_date_range(test);
            c.scenarios = {s};
        }
        return c;
    }

    std::string scenario_name(const config::RunConfig& c) const {
        if (!scenario.empty()) return scenario;
        if (!train.empty()) return "custom";
        if (c.scenarios.size() == 1) return c.scenarios.front().name;
        throw ConfigError("--scenario is required");
    }

    ingest::CleanDataset load() const {
        return report::load_dataset(data, ingest::parse_format(format));
    }

    std::string target_of(const ingest::CleanDataset& clean, const config::RunConfig& c) const {
        if (!target.empty()) return target;
        if (!c.target.empty()) return c.target;
        if (clean.probe_count() == 0) throw PreconditionError("dataset has no probes");
        return clean.probes().front().id;
    }
};

ordered_json sizing_json(const queueing::QueueSizing& q) {
    ordered_json j;
    j["lambda"] = q.lambda;
    j["mu"] = q.mu;
    j["c"] = q.c;
    j["rho"] = q.rho;
    j["p0"] = q.p0;
    j["P_Q"] = q.pq;
    j["T"] = q.T;
    return j;
}

}  // namespace

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Road-traffic forecasting and forecast-driven V2N service scaling", "v2n"};
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t jobs = 1;
    app.add_option("--jobs", jobs, "Worker threads for grids and policy comparisons (0: all cores)");
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--seed", seed_flag, "Seed (default: $V2N_SEED, else 7)");

    // fetch
    auto* fetch = app.add_subcommand("fetch", "Download an XML snapshot over HTTP");
    std::string fetch_url, fetch_out;
    int fetch_timeout_ms = 10000;
    fetch->add_option("--url", fetch_url, "http:// endpoint")->required();
    fetch->add_option("--out", fetch_out, "Output file")->required();
    fetch->add_option("--timeout-ms", fetch_timeout_ms, "Connect/read timeout")->check(CLI::PositiveNumber);

    // sanitize
    auto* sanitize = app.add_subcommand("sanitize", "Filter spurious probes and fill gaps");
    std::string san_input, san_format = "csv", san_output, san_report;
    double san_coverage = 0.8;
    Timestamp san_interval = kStepSeconds;
    sanitize->add_option("--input", san_input, "Raw CSV or XML")->required();
    sanitize->add_option("--format", san_format, "csv or xml")->check(CLI::IsMember({"csv", "xml"}));
    sanitize->add_option("--output", san_output, "Clean CSV")->required();
    sanitize->add_option("--min-coverage", san_coverage, "Minimum grid coverage")->check(CLI::Range(0.0, 1.0));
    sanitize->add_option("--interval", san_interval, "Grid step in seconds")->check(CLI::PositiveNumber);
    sanitize->add_option("--report", san_report, "Sanitation report JSON");

    // features
    auto* feats = app.add_subcommand("features", "Print the neighborhood of a probe as JSON");
    DataOptions feat_data;
    std::optional<double> feat_radius;
    bool feat_quantiles = false;
    feat_data.add(feats, false);
    feats->add_option("--radius", feat_radius, "Radius in km (default: every probe)");
    feats->add_flag("--quantiles", feat_quantiles, "Include distance quantiles");

    // forecast
    auto* fc = app.add_subcommand("forecast", "Forecast the test days of a scenario");
    DataOptions fc_data;
    std::string fc_model = "tes";
    std::optional<double> fc_alpha, fc_beta, fc_gamma, fc_radius;
    std::optional<std::size_t> fc_season, fc_warmup;
    std::size_t fc_k = 1;
    bool fc_online = false;
    std::string fc_out;
    fc_data.add(fc, true);
    fc->add_option("--model", fc_model, "hold, des, tes, lstm, gru, tcn, tcnlstm");
    fc->add_option("--alpha", fc_alpha);
    fc->add_option("--beta", fc_beta);
    fc->add_option("--gamma", fc_gamma);
    fc->add_option("--season-steps", fc_season);
    fc->add_option("--lookahead", fc_k, "Steps ahead")->check(CLI::PositiveNumber);
    fc->add_flag("--online", fc_online, "Update with every observed test step");
    fc->add_option("--radius", fc_radius, "Neighborhood radius in km for neural models");
    fc->add_option("--warmup", fc_warmup, "Test steps skipped before scoring");
    fc->add_option("--out", fc_out, "Output CSV (default: standard output)");

    // train
    auto* tr = app.add_subcommand("train", "Train one neural model and save its parameters");
    DataOptions tr_data;
    std::string tr_model = "lstm", tr_out;
    std::size_t tr_k = 1;
    std::optional<double> tr_radius;
    tr_data.add(tr, true);
    tr->add_option("--model", tr_model, "lstm, gru, tcn, tcnlstm");
    tr->add_option("--lookahead", tr_k)->check(CLI::PositiveNumber);
    tr->add_option("--radius", tr_radius, "Neighborhood radius in km");
    tr->add_option("--out", tr_out, "Parameter bundle (.bin, or .json)")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Run an experiment grid");
    DataOptions ev_data;
    std::string ev_grid, ev_out, ev_forecasts;
    ev_data.add(ev, false);
    ev->add_option("--grid", ev_grid, "JSON list of experiments")->required();
    ev->add_option("--out", ev_out, "Long-format results CSV")->required();
    ev->add_option("--forecasts", ev_forecasts, "Directory for per-experiment forecast CSVs");

    // size
    auto* sz = app.add_subcommand("size", "Size an M/M/c service");
    double sz_lambda = 0.0, sz_mu = 0.0;
    std::optional<double> sz_t0;
    std::optional<std::size_t> sz_c;
    sz->add_option("--lambda", sz_lambda, "Arrival rate, vehicles/second")->required();
    sz->add_option("--mu", sz_mu, "Service rate per server, vehicles/second")->required();
    auto* t0_opt = sz->add_option("--t0", sz_t0, "Target mean time in system, seconds");
    auto* c_opt = sz->add_option("--servers", sz_c, "Evaluate a fixed server count");
    t0_opt->excludes(c_opt);
    c_opt->excludes(t0_opt);

    // scale
    auto* sc = app.add_subcommand("scale", "Run one scaling policy over a scenario's test days");
    DataOptions sc_data;
    std::string sc_policy = "n_min", sc_service = "remote_driving", sc_forecaster = "tes-online";
    std::string sc_out, sc_report;
    std::size_t sc_n = 30;
    std::optional<double> sc_radius;
    sc_data.add(sc, true);
    sc->add_option("--policy", sc_policy)->check(CLI::IsMember({"n_min", "avg", "max"}));
    sc->add_option("--n", sc_n, "Minutes per decision (n_min)");
    sc->add_option("--service", sc_service, "remote_driving, cooperative_awareness, hazard_warning");
    sc->add_option("--forecaster", sc_forecaster, "Technique for n_min, e.g. tes-online");
    sc->add_option("--radius", sc_radius, "Neighborhood radius in km for neural forecasters");
    sc->add_option("--out", sc_out, "Trace CSV")->required();
    sc->add_option("--report", sc_report, "Also write the replay report CSV here");

    // report
    auto* rep = app.add_subcommand("report", "Replay trace files into a cost/violation report");
    std::string rep_traces, rep_out;
    rep->add_option("--traces", rep_traces, "Directory of trace_*.csv files")->required();
    rep->add_option("--out", rep_out, "Report CSV")->required();

    // run
    auto* run = app.add_subcommand("run", "Run the configured experiments and scaling comparison");
    std::string run_config, run_out;
    run->add_option("--config", run_config, "Run config JSON")->required();
    run->add_option("--out", run_out, "Output directory (overrides the config)");

    // synth
    auto* syn = app.add_subcommand("synth", "Write a synthetic single-probe clean CSV");
    std::string syn_profile = "seasonal", syn_out, syn_probe = "synthetic", syn_start;
    evaluation::SynthOptions syn_opts;
    syn->add_option("--profile", syn_profile)->check(CLI::IsMember({"seasonal", "trend_break", "random_walk"}));
    syn->add_option("--days", syn_opts.days)->check(CLI::PositiveNumber);
    syn->add_option("--amplitude", syn_opts.amplitude, "vehicles/hour");
    syn->add_option("--noise", syn_opts.noise_sd, "Noise standard deviation, vehicles/hour");
    syn->add_option("--break-day", syn_opts.break_day, "trend_break: first reduced day");
    syn->add_option("--start", syn_start, "First day (default 2020-01-28)");
    syn->add_option("--probe", syn_probe, "Probe id");
    syn->add_option("--out", syn_out, "Output CSV (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        const auto used = app.get_subcommands();
        err << (used.empty() ? app.help() : used.front()->help());
        return kExitUsage;
    }

    try {
        const std::uint64_t seed = seed_flag ? *seed_flag : env_seed();

        if (fetch->parsed()) {
            const auto snap = ingest::fetch_snapshot(fetch_url, std::chrono::milliseconds(fetch_timeout_ms));
            write_output(fetch_out, snap.bytes, out);
            err << "fetched " << snap.bytes.size() << " bytes at " << format_timestamp(snap.retrieved_at) << '\n';
        } else if (sanitize->parsed()) {
            std::ifstream in(san_input, std::ios::binary);
            if (!in) throw Error("cannot read '" + san_input + "'");
            const auto raw = ingest::parse_records(in, ingest::parse_format(san_format), san_interval);
            const auto result = ingest::clean_pipeline(raw, san_coverage);
            std::ostringstream csv;
            ingest::write_csv(csv, result.clean);
            write_output(san_output, csv.str(), out);
            if (!san_report.empty()) {
                write_output(san_report, ingest::report_json(result.report) + "\n", out);
            }
            for (const auto& e : raw.errors) {
                err << "row " << e.line << ": " << e.message << '\n';
            }
        } else if (feats->parsed()) {
            const auto cfg = feat_data.run_config(seed);
            const auto clean = feat_data.load();
            const std::string target = feat_data.target_of(clean, cfg);
            const auto hood = feat_radius ? features::build_neighborhood(clean, target, *feat_radius)
                                          : features::full_neighborhood(clean, target);
            ordered_json j;
            j["target"] = target;
            j["radius_km"] = feat_radius ? ordered_json(*feat_radius) : ordered_json(nullptr);
            ordered_json members = ordered_json::array();
            for (std::size_t i = 0; i < hood.members.size(); ++i) {
                members.push_back({{"probe_id", hood.members[i]}, {"distance_km", hood.distances_km[i]}});
            }
            j["members"] = members;
            if (feat_quantiles) {
                const auto q = features::neighborhood_quantiles(clean, target);
                j["quantiles"] = {{"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"w2", q.w2}};
            }
            out << j.dump(2) << '\n';
        } else if (fc->parsed()) {
            auto cfg = fc_data.run_config(seed);
            auto& sm = cfg.techniques.smoothing;
            if (fc_alpha) sm.alpha = *fc_alpha;
            if (fc_beta) sm.beta = *fc_beta;
            if (fc_gamma) sm.gamma = *fc_gamma;
            if (fc_season) sm.season_len = *fc_season;
            sm.validate(smoothing::Model::tes);
            const auto clean = fc_data.load();
            evaluation::ExperimentSpec spec;
            spec.technique = fc_model;
            spec.mode = fc_online ? forecast::Mode::online : forecast::Mode::offline;
            spec.scenario = fc_data.scenario_name(cfg);
            spec.lookahead = fc_k;
            spec.radius_km = fc_radius;
            spec.seed = seed;
            spec.target = fc_data.target_of(clean, cfg);
            evaluation::EvalOptions opts;
            opts.techniques = cfg.techniques;
            opts.scenarios = cfg.scenarios;
            opts.warmup = fc_warmup ? fc_warmup : cfg.warmup;
            const auto r = evaluation::run_experiment(spec, clean, opts);
            std::ostringstream csv;
            evaluation::write_forecast_csv(csv, r.forecasts);
            write_output(fc_out, csv.str(), out);
            err << "rmse " << r.rmse << " over " << r.forecasts.size() << " forecasts\n";
        } else if (tr->parsed()) {
            const auto cfg = tr_data.run_config(seed);
            const auto clean = tr_data.load();
            const auto splits = ingest::split_scenarios(clean, cfg.scenarios);
            const auto& scenario = ingest::find_scenario(splits, tr_data.scenario_name(cfg));
            const auto train = ingest::index_range(clean.grid(), scenario.train);
            const auto view = forecast::make_view(clean, tr_data.target_of(clean, cfg), tr_radius);
            auto net = cfg.techniques.net(neural::parse_model(tr_model));
            net.seed = seed;
            const auto model = forecast::train_direct_model(view, train.begin, train.end, net, tr_k);
            neural::save_model(model, tr_out);
            err << "saved " << model.net.param_count() << " parameters to " << tr_out << '\n';
        } else if (ev->parsed()) {
            const auto cfg = ev_data.run_config(seed);
            const auto specs = evaluation::parse_grid_json(read_file(ev_grid), seed);
            const auto clean = ev_data.load();
            evaluation::EvalOptions opts;
            opts.techniques = cfg.techniques;
            opts.scenarios = cfg.scenarios;
            opts.target = ev_data.target_of(clean, cfg);
            opts.warmup = cfg.warmup;
            const auto results = evaluation::run_grid(specs, clean, opts, jobs);
            std::ostringstream csv;
            evaluation::write_grid_csv(csv, results);
            write_output(ev_out, csv.str(), out);
            if (!ev_forecasts.empty()) {
                std::filesystem::create_directories(ev_forecasts);
                for (std::size_t i = 0; i < results.size(); ++i) {
                    if (!results[i].ok()) continue;
                    std::ostringstream f;
                    evaluation::write_forecast_csv(f, results[i].forecasts);
                    write_output((std::filesystem::path(ev_forecasts) /
                                  ("experiment_" + std::to_string(i) + ".csv")).string(),
                                 f.str(), out);
                }
            }
            std::size_t failed = 0;
            for (const auto& r : results) {
                if (!r.ok()) {
                    ++failed;
                    err << r.spec.technique << '/' << r.spec.scenario << "/k=" << r.spec.lookahead
                        << ": " << r.error << '\n';
                }
            }
            if (failed == results.size()) {
                throw Error("every experiment failed");
            }
        } else if (sz->parsed()) {
            const std::size_t c = sz_c ? *sz_c : queueing::min_servers(sz_lambda, sz_mu, sz_t0.value_or(0.0));
            if (!sz_c && !sz_t0) throw ConfigError("give --t0 or --servers");
            auto j = sizing_json(queueing::size(sz_lambda, sz_mu, c));
            if (sz_t0) j["T0"] = *sz_t0;
            out << j.dump(2) << '\n';
        } else if (sc->parsed()) {
            auto cfg = sc_data.run_config(seed);
            const auto clean = sc_data.load();
            const auto splits = ingest::split_scenarios(clean, cfg.scenarios);
            const auto& scenario = ingest::find_scenario(
                splits, sc_data.scenario.empty() && sc_data.train.empty() ? cfg.scaling_scenario
                                                                          : sc_data.scenario_name(cfg));
            scaling::Policy policy = sc_policy == "n_min" ? scaling::Policy::n_min(sc_n, sc_forecaster)
                                     : sc_policy == "avg" ? scaling::Policy::avg()
                                                          : scaling::Policy::max();
            scaling::CompareOptions opts;
            opts.techniques = cfg.techniques;
            opts.seed = seed;
            opts.radius_km = sc_radius;
            const std::string target = sc_data.target_of(clean, cfg);
            const auto outcome = scaling::compare_policies({policy}, clean, target, scenario,
                                                           {scaling::service_profile(sc_service)}, opts);
            const auto& o = outcome.front();
            if (!o.ok()) throw Error(o.error);
            const auto realized = clean.series(target);
            std::ostringstream csv;
            scaling::write_trace_csv(csv, o.trace, realized);
            write_output(sc_out, csv.str(), out);
            if (!sc_report.empty()) {
                std::ostringstream r;
                scaling::write_report_csv(r, {o.report});
                write_output(sc_report, r.str(), out);
            }
            for (const auto& inc : o.trace.incidents) err << "incident: " << inc << '\n';
            err << o.report.policy << '/' << o.report.profile << ": cost_ratio " << o.report.cost_ratio
                << ", violation_ratio " << o.report.violation_ratio << '\n';
        } else if (rep->parsed()) {
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::directory_iterator(rep_traces)) {
                const std::string name = entry.path().filename().string();
                if (entry.is_regular_file() && name.starts_with("trace_") && name.ends_with(".csv")) {
                    files.push_back(entry.path());
                }
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) throw PreconditionError("no trace_*.csv files in '" + rep_traces + "'");
            std::vector<scaling::TraceFile> traces;
            for (const auto& f : files) {
                std::ifstream in(f, std::ios::binary);
                for (auto& t : scaling::read_trace_csv(in)) traces.push_back(std::move(t));
            }
            std::map<std::string, double> max_cost;
            for (const auto& t : traces) {
                if (t.trace.policy == "max") {
                    max_cost[t.trace.profile.name] = scaling::replay(t.trace, t.realized).cost;
                }
            }
            // Same order as a run: services as listed, then max, avg, n_min by n.
            const auto rank = [](const scaling::TraceFile& t) {
                std::size_t service = 0;
                const auto all = scaling::service_profiles();
                while (service < all.size() && all[service].name != t.trace.profile.name) ++service;
                const auto p = scaling::parse_policy(t.trace.policy == "max" || t.trace.policy == "avg"
                                                         ? t.trace.policy
                                                         : "n_min:" + t.trace.policy.substr(6));
                const std::size_t policy = p.kind == scaling::PolicyKind::max   ? 0
                                           : p.kind == scaling::PolicyKind::avg ? 1
                                                                                : 2 + p.n_minutes;
                return std::pair{service, policy};
            };
            std::stable_sort(traces.begin(), traces.end(),
                             [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
            std::vector<scaling::ScalingReport> reports;
            for (const auto& t : traces) {
                const auto it = max_cost.find(t.trace.profile.name);
                reports.push_back(scaling::replay(t.trace, t.realized, it == max_cost.end() ? 0.0 : it->second));
            }
            std::ostringstream csv;
            scaling::write_report_csv(csv, reports);
            write_output(rep_out, csv.str(), out);
        } else if (run->parsed()) {
            auto cfg = config::load_config(run_config, seed);
            if (seed_flag) cfg.seed = *seed_flag;
            if (app.count("--jobs") > 0) cfg.jobs = jobs;
            if (!run_out.empty()) cfg.output_dir = run_out;
            const auto data = report::run_pipeline(cfg);
            for (const auto& path : report::emit_report(data, cfg.output_dir)) {
                err << "wrote " << path << '\n';
            }
            for (const auto& r : data.experiments) {
                if (!r.ok()) err << r.spec.technique << '/' << r.spec.scenario << ": " << r.error << '\n';
            }
            for (const auto& o : data.scaling) {
                if (!o.ok()) err << o.report.policy << '/' << o.report.profile << ": " << o.error << '\n';
            }
        } else if (syn->parsed()) {
            syn_opts.profile = evaluation::parse_profile(syn_profile);
            syn_opts.seed = seed;
            if (!syn_start.empty()) syn_opts.start = parse_timestamp(syn_start);
            auto series = evaluation::synth_series(syn_opts);
            series.probe_id = syn_probe;
            std::ostringstream csv;
            ingest::write_csv(csv, ingest::single_probe_dataset(series));
            write_output(syn_out, csv.str(), out);
        }
    } catch (const v2n::Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }
    return kExitOk;
}

}  // namespace v2n::cli
