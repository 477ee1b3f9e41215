#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace intentscope {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

struct ArtifactDigest {
    /// Relative to the run directory for run artifacts; absolute for external inputs.
    std::string path;
    std::string sha256;
};

struct StageRecord {
    std::string stage;
    uint64_t seed = 0;
    std::string config_sha256;
    std::vector<ArtifactDigest> inputs;
    std::vector<ArtifactDigest> outputs;
};

struct RunManifest {
    std::string tool_version;
    std::string config_sha256;
    uint64_t master_seed = 0;
    std::map<std::string, StageRecord> stages;

    /// Stage that last wrote `path`, or nullptr.
    const StageRecord* producer(const std::string& path) const;
};

struct DigestMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
/// Empty manifest when the file does not exist.
RunManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

/// Checks a run artifact against the digest its producing stage recorded.
/// Throws MissingArtifact or DigestMismatch with an explanation.
ArtifactDigest verify_artifact(const RunManifest& m, const std::filesystem::path& root, const std::string& rel);

}  // namespace intentscope
