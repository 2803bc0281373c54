#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "v2n/evaluation.hpp"
#include "v2n/forecaster.hpp"
#include "v2n/ingest.hpp"
#include "v2n/scaling.hpp"

namespace v2n::config {

// Everything one pipeline run needs. See README for the JSON layout.
struct RunConfig {
    std::string dataset;  // clean CSV, or raw input when format is xml
    ingest::Format format = ingest::Format::csv;
    double min_coverage = 0.8;
    std::string target;  // empty: first probe
    std::vector<ingest::ScenarioSplit> scenarios;  // empty: built-in splits
    forecast::TechniqueConfig techniques = forecast::TechniqueConfig::defaults();
    std::optional<std::size_t> warmup;
    std::vector<evaluation::ExperimentSpec> experiments;
    std::vector<scaling::Policy> policies;
    std::vector<scaling::ServiceProfile> services;
    std::string scaling_scenario = "covid";
    std::optional<double> radius_km;
    std::string output_dir = "v2n-out";
    std::uint64_t seed = 7;
    std::size_t jobs = 1;
};

// Unknown keys and bad values throw ConfigError naming the field path.
// Relative paths are resolved against `base_dir`; `default_seed` applies
// when the document has no "seed".
RunConfig parse_config(std::string_view json_text, const std::string& base_dir = "",
                       std::uint64_t default_seed = 7);

// Reads the file and checks that the dataset it names exists.
RunConfig load_config(const std::string& path, std::uint64_t default_seed = 7);

// "2020-01-28:2020-02-28" -> inclusive day range.
ingest::DateRange parse_date_range(std::string_view text);

}  // namespace v2n::config
