// Command-line driver for the infrared-patch toolkit.
//
// Subcommands:
//   optimize          run one patch optimization and write all artifacts
//   ablate-placement  learned patch vs. moved/canonical/no-patch arms
//   ablate-losses     attack-only vs. attack+binary vs. full loss
//   defend            median-filter defense evaluation
//   eval-ap           average precision on a mixed positive/negative set
//
// Exit codes: 0 success (optimize: converged), 1 bad configuration or I/O,
// 2 optimize finished without meeting the stop rule.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include <irpatch/irpatch.hpp>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    int scenes = 0;    // 0 = keep config value
    long long seed = -1; // <0 = keep config value
    int snapshots = -1;  // <0 = keep config value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key = value configuration file");
    cmd->add_option("--out", args.out_dir, "output directory (default: out)");
    cmd->add_option("--scenes", args.scenes, "override n_scenes");
    cmd->add_option("--seed", args.seed, "override the optimizer seed");
    cmd->add_option("--snapshots", args.snapshots, "override snapshot_every");
}

irpatch::RunSetup make_setup(const CommonArgs& args) {
    irpatch::ConfigReader cfg = args.config_path.empty()
                                    ? irpatch::ConfigReader::from_values({})
                                    : irpatch::ConfigReader::from_file(args.config_path);
    if (args.scenes > 0) cfg.override_value("n_scenes", std::to_string(args.scenes));
    if (args.seed >= 0) cfg.override_value("seed", std::to_string(args.seed));
    if (args.snapshots >= 0) cfg.override_value("snapshot_every", std::to_string(args.snapshots));
    irpatch::RunSetup setup = irpatch::load_run_setup(cfg);
    for (const std::string& note : cfg.notes()) std::fprintf(stderr, "note: %s\n", note.c_str());
    return setup;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"learnable-shape infrared patch toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* optimize = app.add_subcommand("optimize", "optimize one patch");
    CLI::App* placement = app.add_subcommand("ablate-placement", "placement/shape ablation");
    CLI::App* losses = app.add_subcommand("ablate-losses", "loss-term ablation");
    CLI::App* defend = app.add_subcommand("defend", "median-filter defense");
    CLI::App* evalap = app.add_subcommand("eval-ap", "average precision evaluation");
    for (CLI::App* cmd : {optimize, placement, losses, defend, evalap}) add_common(cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        irpatch::RunSetup setup = make_setup(args);
        if (optimize->parsed()) return irpatch::cmd_optimize(setup, args.out_dir);
        if (placement->parsed()) return irpatch::cmd_ablate_placement(setup, args.out_dir);
        if (losses->parsed()) return irpatch::cmd_ablate_losses(setup, args.out_dir);
        if (defend->parsed()) return irpatch::cmd_defend_smooth(setup, args.out_dir);
        if (evalap->parsed()) return irpatch::cmd_eval_ap(setup, args.out_dir);
        std::fprintf(stderr, "error: no subcommand\n");
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
