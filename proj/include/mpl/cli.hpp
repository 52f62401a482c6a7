#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpl/fitting.hpp"

namespace mpl {

/// Curves listed under `key` of a dataset config. Each entry is
/// {name, file, schedule?}; without a schedule the LR samples of the file are
/// joined into a polyline starting at the top-level peak_lr. Relative paths
/// resolve against base_dir.
std::vector<FitCurve> load_dataset(const nlohmann::json& cfg, const std::string& key,
                                   const std::filesystem::path& base_dir);

struct AblationRow {
    LawVariant variant;
    FitReport report;
    Metrics test;  // pooled over test curves, or over training curves when none are given
};

std::vector<AblationRow> run_ablation(const std::vector<VariantTag>& variants, const std::vector<FitCurve>& train,
                                      const std::vector<FitCurve>& test, const FitConfig& cfg);

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);

/// Entry point shared by the mplctl tool and tests. Returns the exit status;
/// diagnostics go to stderr.
int run_cli(int argc, const char* const* argv);
/// Same, with args excluding the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace mpl
