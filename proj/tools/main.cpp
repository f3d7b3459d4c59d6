#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "stopsafe/pipeline.hpp"
#include "stopsafe/synth.hpp"

namespace {

struct RunArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> stages;
};

void add_run_options(CLI::App* cmd, RunArgs& args, bool with_stages) {
    cmd->add_option("--config", args.config_path, "pipeline configuration file (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides the config)");
    if (with_stages) {
        cmd->add_option("--stage", args.stages, "stage to run (repeatable; overrides the config)");
    }
}

int execute(const RunArgs& args, const std::vector<std::string>& forced_stages) {
    stopsafe::pipeline::PipelineConfig cfg =
        stopsafe::pipeline::PipelineConfig::from_file(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!forced_stages.empty()) cfg.stages = forced_stages;
    else if (!args.stages.empty()) cfg.stages = args.stages;

    const stopsafe::report::RunReport rep = stopsafe::pipeline::run_pipeline(cfg);
    for (const auto& [stage, ms] : rep.timings_ms) {
        std::fprintf(stderr, "[timing] %-13s %10.1f ms\n", stage.c_str(), ms);
    }
    for (const auto& w : rep.warnings) std::fprintf(stderr, "[warning] %s\n", w.c_str());
    std::fprintf(stderr, "report written under %s\n", cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stop-intersection safety analytics pipeline"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "run the configured stages end to end");
    add_run_options(run, run_args, true);

    std::map<std::string, RunArgs> stage_args;
    std::map<std::string, CLI::App*> stage_cmds;
    for (const auto& stage : stopsafe::pipeline::stage_order()) {
        CLI::App* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
        add_run_options(cmd, stage_args[stage], false);
        stage_cmds[stage] = cmd;
    }

    std::string synth_out = "synth_corpus";
    uint64_t seed = 7;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic input corpus");
    synth->add_option("--out", synth_out, "directory for the generated corpus");
    synth->add_option("--seed", seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return execute(run_args, {});
        for (const auto& [stage, cmd] : stage_cmds) {
            if (cmd->parsed()) return execute(stage_args[stage], {stage});
        }
        if (synth->parsed()) {
            stopsafe::synth::generate_corpus(synth_out, seed);
            std::fprintf(stderr, "synthetic corpus written under %s\n", synth_out.c_str());
            return 0;
        }
    } catch (const stopsafe::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
