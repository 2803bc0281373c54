#pragma once

#include <string>
#include <vector>

#include "v2n/config.hpp"
#include "v2n/evaluation.hpp"
#include "v2n/scaling.hpp"

namespace v2n::report {

struct ReportData {
    std::vector<evaluation::ExperimentResult> experiments;
    std::vector<scaling::PolicyOutcome> scaling;
    ingest::TrafficSeries realized;  // flows the scaling traces were replayed on
};

// Writes rmse_grid.csv, scaling_report.csv, trace_<policy>.csv (one block per
// service) and summary.json into `out_dir`, creating it when missing. Returns
// the paths written. Throws PreconditionError on empty results, before any
// file is touched.
std::vector<std::string> emit_report(const ReportData& data, const std::string& out_dir);

// Loads the dataset, runs the experiment grid and the policy comparison.
ReportData run_pipeline(const config::RunConfig& config);

// Reads a clean CSV, or sanitizes raw XML.
ingest::CleanDataset load_dataset(const std::string& path, ingest::Format format,
                                  double min_coverage = 0.8);

}  // namespace v2n::report
