#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "intentscope/lexicon.hpp"
#include "intentscope/manifest.hpp"
#include "intentscope/pipeline.hpp"

int main(int argc, char** argv) {
    using namespace intentscope;

    CLI::App app{"Vaccine-intent estimation pipeline over search logs"};
    app.set_version_flag("--version", std::string(kToolVersion));
    std::string stage, config;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::string stages;
    for (const auto& n : stage_names()) stages += (stages.empty() ? "" : " | ") + n;
    app.add_option("stage", stage, "Stage to run: " + stages + " | all")->required();
    app.add_option("--config,-c", config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Master seed; overrides the config");
    app.add_option("--out,-o", out, "Output directory; overrides INTENTSCOPE_OUT_DIR and the config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and --version exit 0; every other parse failure is a usage error.
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (stage != "all" && !is_stage(stage)) throw UsageError("unknown stage '" + stage + "'; expected " + stages + " | all");
        const PipelineConfig cfg = load_pipeline_config(config, seed);
        const auto dir = resolve_out_dir(cfg, out);
        return stage == "all" ? run_all(cfg, dir) : run_stage(stage, cfg, dir);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n' << app.help();
        return 2;
    } catch (const DigestMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
