#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "intentscope/manifest.hpp"
#include "intentscope/lexicon.hpp"
#include "intentscope/pipeline.hpp"

using namespace intentscope;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("intentscope-unit-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("manifest round trip") {
    RunManifest m;
    m.tool_version = "x";
    m.config_sha256 = "c";
    m.master_seed = 42;
    m.stages["graph"] = StageRecord{"graph", 7, "c", {{"raw/events.tsv", "aa"}}, {{"graph/all.tsv", "bb"}}};
    const auto back = manifest_from_json(to_json(m));
    CHECK(back.master_seed == 42);
    REQUIRE(back.producer("graph/all.tsv") != nullptr);
    CHECK(back.producer("graph/all.tsv")->seed == 7);
    CHECK(back.producer("nothing") == nullptr);
    CHECK(to_json(back) == to_json(m));

    const auto dir = scratch("manifest");
    write_manifest(dir / "manifest.json", m);
    CHECK(to_json(read_manifest(dir / "manifest.json")) == to_json(m));
    CHECK(read_manifest(dir / "absent.json").stages.empty());
}

TEST_CASE("artifact verification detects tampering and absence") {
    const auto dir = scratch("verify");
    fs::create_directories(dir / "graph");
    write(dir / "graph" / "all.tsv", "edges\n");
    RunManifest m;
    m.stages["graph"] = StageRecord{"graph", 1, "c", {}, {{"graph/all.tsv", sha256_file(dir / "graph" / "all.tsv")}}};
    CHECK(verify_artifact(m, dir, "graph/all.tsv").sha256 == sha256_hex("edges\n"));
    write(dir / "graph" / "all.tsv", "edges!\n");
    CHECK_THROWS_AS(verify_artifact(m, dir, "graph/all.tsv"), DigestMismatch);
    fs::remove(dir / "graph" / "all.tsv");
    CHECK_THROWS_AS(verify_artifact(m, dir, "graph/all.tsv"), MissingArtifact);
    CHECK_THROWS_AS(verify_artifact(m, dir, "ppr/x.csv"), MissingArtifact);
}

TEST_CASE("output directory precedence") {
    const auto dir = scratch("config");
    write(dir / "c.json", R"({"out_dir": "runs/a", "seed": 3})");
    const auto cfg = load_pipeline_config(dir / "c.json");
    CHECK(cfg.seed == 3);
    CHECK(load_pipeline_config(dir / "c.json", 9).seed == 9);
    unsetenv("INTENTSCOPE_OUT_DIR");
    CHECK(resolve_out_dir(cfg, std::nullopt) == fs::absolute(dir) / "runs/a");
    setenv("INTENTSCOPE_OUT_DIR", "/tmp/from-env", 1);
    CHECK(resolve_out_dir(cfg, std::nullopt) == fs::path("/tmp/from-env"));
    CHECK(resolve_out_dir(cfg, std::string("cli")) == fs::path("cli"));
    unsetenv("INTENTSCOPE_OUT_DIR");
    CHECK_THROWS_AS(resolve_out_dir(pipeline_config_from_json(nlohmann::json::object()), std::nullopt), UsageError);
}

TEST_CASE("config errors") {
    const auto dir = scratch("badconfig");
    write(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_pipeline_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("stage names and seeds") {
    const auto& n = stage_names();
    REQUIRE(n.size() == 12);
    CHECK(n.front() == "generate");
    CHECK(n.back() == "report");
    CHECK(is_stage("gnn"));
    CHECK_FALSE(is_stage("train"));
    CHECK(stage_seed(1, "gnn") == derive_seed(1, "gnn"));
    CHECK(stage_seed(1, "gnn") != stage_seed(1, "ppr"));
    const auto cfg = pipeline_config_from_json(nlohmann::json::object());
    CHECK_THROWS_AS(run_stage("train", cfg, scratch("unknown")), UsageError);
}

TEST_CASE("dependent stage refuses a missing upstream artifact") {
    const auto cfg = pipeline_config_from_json(nlohmann::json::object());
    CHECK_THROWS_AS(run_stage("graph", cfg, scratch("nodeps")), MissingArtifact);
}

}
