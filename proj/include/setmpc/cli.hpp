#pragma once

#include <string>

namespace setmpc {

// Stable exit codes (documented contract).
inline constexpr int kExitOk = 0;
inline constexpr int kExitInfeasible = 2;   // synthesis: infeasible segment
inline constexpr int kExitViolation = 3;    // run aborted / constraint violated
inline constexpr int kExitVerifyFail = 4;   // certificate check failed
inline constexpr int kExitUsage = 64;       // bad arguments or malformed config
inline constexpr int kExitHashMismatch = 65;

// Offline synthesis: scenario file -> path-bundle JSON.
int cmd_synthesize(const std::string& scenario_path, const std::string& bundle_path);

struct RunFlags {
    uint64_t seed = 0;
    bool noise = false;
    bool plots = true;
    bool plot_only = false;  // regenerate SVGs from an existing trace CSV
};

// Closed-loop run: writes trace CSV, summary JSON and (optionally) SVG plots
// into out_dir.
int cmd_run(const std::string& scenario_path, const std::string& bundle_path,
            const std::string& out_dir, const RunFlags& flags = {});

// Certificate audit over a bundle: nesting, constraint admissibility, terminal
// invariance, and sampled one-step feasibility via the input-grid oracle.
int cmd_verify(const std::string& bundle_path, int samples, uint64_t seed = 0);

// Emit a built-in scenario definition (1 or 2) to a config file.
int cmd_emit_scenario(int id, const std::string& out_path);

}  // namespace setmpc
