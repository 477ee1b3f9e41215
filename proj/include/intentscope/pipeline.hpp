#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "intentscope/common.hpp"
#include "intentscope/synthetic.hpp"

namespace intentscope {

inline constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// One structured config file with a section per module.
struct PipelineConfig {
    nlohmann::json json;
    std::string sha256;
    /// Relative input paths resolve against this directory.
    std::filesystem::path base_dir;
    uint64_t seed = 1;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path, std::optional<uint64_t> seed_override = {});
PipelineConfig pipeline_config_from_json(nlohmann::json j, std::optional<uint64_t> seed_override = {});

/// --out, then INTENTSCOPE_OUT_DIR, then the config's out_dir.
std::filesystem::path resolve_out_dir(const PipelineConfig& cfg, const std::optional<std::string>& cli_out);

const std::vector<std::string>& stage_names();
bool is_stage(std::string_view name);

/// Stage seed derivation: derive_seed(master, stage name).
uint64_t stage_seed(uint64_t master, std::string_view stage);

/// Analysis window from the "window" section ({"start": "YYYY-MM", "months": n}).
MonthWindow window_from_json(const nlohmann::json& root);
/// Synthetic world described by the "world" section.
SyntheticWorldConfig world_from_json(const nlohmann::json& root, uint64_t seed);

/// Runs one stage and updates manifest.json in `out_dir`. Returns the exit
/// status: nonzero only when the report finds a failing criterion.
int run_stage(const std::string& stage, const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// Every stage in order; stops at the first nonzero status.
int run_all(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace intentscope
