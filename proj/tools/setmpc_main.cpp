// Command-line entry point: synthesize path bundles, run closed-loop
// scenarios, verify certificates, emit built-in scenario configs.
#include <CLI11.hpp>
#include <cstdlib>

#include "setmpc/cli.hpp"

namespace {

const char* log_level_env() {
    const char* v = std::getenv("SETMPC_LOG");
    return v ? v : "info";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"set-theoretic ellipsoidal receding-horizon control toolkit"};
    app.require_subcommand(1);
    (void)log_level_env();

    std::string scenario_path, bundle_path, out_dir = ".";
    uint64_t seed = 0;
    int samples = 1000;
    int scenario_id = 1;
    bool noise = false, no_plots = false, plot_only = false;

    auto* synth = app.add_subcommand("synthesize", "compute a path bundle for a scenario");
    synth->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    synth->add_option("--out", bundle_path, "output bundle path")->required();

    auto* run = app.add_subcommand("run", "closed-loop simulation");
    run->add_option("--scenario", scenario_path, "scenario JSON file");
    run->add_option("--bundle", bundle_path, "path bundle JSON");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "random seed");
    run->add_flag("--noise", noise, "enable bounded radar noise");
    run->add_flag("--no-plots", no_plots, "skip SVG plots");
    run->add_flag("--plot-only", plot_only, "regenerate plots from an existing trace");

    auto* verify = app.add_subcommand("verify", "audit bundle certificates");
    verify->add_option("--bundle", bundle_path, "path bundle JSON")->required();
    verify->add_option("--samples", samples, "samples per ellipsoid");
    verify->add_option("--seed", seed, "random seed");

    auto* emit = app.add_subcommand("scenario", "emit a built-in scenario config");
    emit->add_option("--id", scenario_id, "scenario id (1 or 2)")->required();
    emit->add_option("--out", scenario_path, "output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return setmpc::kExitUsage;
    }

    if (synth->parsed()) return setmpc::cmd_synthesize(scenario_path, bundle_path);
    if (run->parsed()) {
        setmpc::RunFlags flags;
        flags.seed = seed;
        flags.noise = noise;
        flags.plots = !no_plots;
        flags.plot_only = plot_only;
        if (!plot_only && (scenario_path.empty() || bundle_path.empty())) {
            std::fprintf(stderr, "run: --scenario and --bundle are required\n");
            return setmpc::kExitUsage;
        }
        return setmpc::cmd_run(scenario_path, bundle_path, out_dir, flags);
    }
    if (verify->parsed()) return setmpc::cmd_verify(bundle_path, samples, seed);
    if (emit->parsed()) return setmpc::cmd_emit_scenario(scenario_id, scenario_path);
    return setmpc::kExitUsage;
}
