#include "v2n/report.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "v2n/error.hpp"
#include "v2n/text.hpp"

namespace v2n::report {

namespace {

using nlohmann::ordered_json;

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

std::string summary_json(const ReportData& data) {
    ordered_json j;
    ordered_json ex = ordered_json::array();
    for (const auto& r : data.experiments) {
        ordered_json row;
        row["technique"] = r.spec.technique;
        row["mode"] = std::string(forecast::mode_name(r.spec.mode));
        row["scenario"] = r.spec.scenario;
        row["lookahead"] = r.spec.lookahead;
        if (r.ok()) {
            row["rmse"] = r.rmse;
        } else {
            row["error"] = r.error;
        }
        ex.push_back(row);
    }
    j["experiments"] = ex;
    ordered_json sc = ordered_json::array();
    for (const auto& o : data.scaling) {
        ordered_json row;
        row["policy"] = o.report.policy;
        row["service"] = o.report.profile;
        if (o.ok()) {
            row["cost_ratio"] = o.report.cost_ratio;
            row["violation_ratio"] = o.report.violation_ratio;
            row["incidents"] = o.trace.incidents;
        } else {
            row["error"] = o.error;
        }
        sc.push_back(row);
    }
    j["scaling"] = sc;
    return j.dump(2) + "\n";
}

}  // namespace

std::vector<std::string> emit_report(const ReportData& data, const std::string& out_dir) {
    if (data.experiments.empty() && data.scaling.empty()) {
        throw PreconditionError("nothing to report: no experiments and no scaling results");
    }
    // Everything is rendered first so a failure leaves the directory alone.
    std::vector<std::pair<std::string, std::string>> files;
    if (!data.experiments.empty()) {
        std::ostringstream grid;
        evaluation::write_grid_csv(grid, data.experiments);
        files.emplace_back("rmse_grid.csv", grid.str());
    }
    if (!data.scaling.empty()) {
        std::vector<scaling::ScalingReport> reports;
        std::vector<std::string> order;
        std::map<std::string, std::ostringstream> traces;
        for (const auto& o : data.scaling) {
            reports.push_back(o.report);
            if (!o.ok()) continue;
            auto [it, fresh] = traces.try_emplace(o.report.policy);
            if (fresh) order.push_back(o.report.policy);
            scaling::write_trace_csv(it->second, o.trace, data.realized, fresh);
        }
        std::ostringstream rep;
        scaling::write_report_csv(rep, reports);
        files.emplace_back("scaling_report.csv", rep.str());
        for (const auto& policy : order) {
            files.emplace_back("trace_" + policy + ".csv", traces[policy].str());
        }
    }
    files.emplace_back("summary.json", summary_json(data));

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error("cannot create '" + out_dir + "': " + ec.message());
    }
    std::vector<std::string> written;
    for (const auto& [name, bytes] : files) {
        const auto path = std::filesystem::path(out_dir) / name;
        write_file(path, bytes);
        written.push_back(path.string());
    }
    return written;
}

ingest::CleanDataset load_dataset(const std::string& path, ingest::Format format,
                                  double min_coverage) {
    if (format == ingest::Format::csv) {
        return ingest::read_clean_csv_file(path);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read '" + path + "'");
    }
    const auto raw = ingest::parse_records(in, format);
    return ingest::clean_pipeline(raw, min_coverage).clean;
}

ReportData run_pipeline(const config::RunConfig& cfg) {
    if (cfg.dataset.empty()) {
        throw ConfigError("dataset: no dataset configured");
    }
    const auto clean = load_dataset(cfg.dataset, cfg.format, cfg.min_coverage);
    if (clean.probe_count() == 0) {
        throw PreconditionError("dataset has no probes after sanitation");
    }
    const std::string target = cfg.target.empty() ? clean.probes().front().id : cfg.target;

    ReportData data;
    if (!cfg.experiments.empty()) {
        evaluation::EvalOptions opts;
        opts.techniques = cfg.techniques;
        opts.scenarios = cfg.scenarios;
        opts.target = target;
        opts.warmup = cfg.warmup;
        data.experiments = evaluation::run_grid(cfg.experiments, clean, opts, cfg.jobs);
    }
    if (!cfg.policies.empty() && !cfg.services.empty()) {
        const auto splits = ingest::split_scenarios(clean, cfg.scenarios);
        const auto& scenario = ingest::find_scenario(splits, cfg.scaling_scenario);
        scaling::CompareOptions opts;
        opts.techniques = cfg.techniques;
        opts.seed = cfg.seed;
        opts.radius_km = cfg.radius_km;
        opts.jobs = cfg.jobs;
        data.scaling = scaling::compare_policies(cfg.policies, clean, target, scenario,
                                                 cfg.services, opts);
        data.realized = clean.series(target);
    }
    return data;
}

}  // namespace v2n::report
