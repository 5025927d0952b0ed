#pragma once

#include <memory>
#include <string>
#include <vector>

#include "setmpc/controller.hpp"
#include "setmpc/scenario.hpp"

namespace setmpc {

struct RadarReading {
    double x_rel = 0.0;  // ego minus lead
    double y_rel = 0.0;
    double v_rel = 0.0;  // ego speed minus lead speed
    bool detected = false;
};

struct TraceRecord {
    double t = 0.0;
    ControllerMode mode = ControllerMode::Cruise;
    int s = -1;
    int i = -1;
    Vec2 u = Vec2::Zero();
    double worst_membership = 0.0;
    double solve_ms = 0.0;  // excluded from the CSV (kept for timing_report)
    SixDofState plant;
    ControlState x = ControlState::Zero();
    double ego_speed = 0.0;  // derived channel v_nominal + x1
    std::vector<RadarReading> radar;
    // signed margins for the scenario constraint rows (negative = violated):
    // u1, u2, x1, x3, x4, x5, gated separation (|x_rel| - floor when overlapping)
    double m_u1 = 0, m_u2 = 0, m_x1 = 0, m_x3 = 0, m_x4 = 0, m_x5 = 0, m_sep = 0;
    bool sep_gate_active = false;
    int replan_count = 0;
};

struct RunOptions {
    uint64_t seed = 0;
    bool noise = false;       // radar noise toggle (overrides the scenario flag when set)
    bool use_noise_flag = false;
    bool allow_replan = true;
};

struct RunSummary {
    bool completed = false;        // ran to the full duration without aborts
    bool constraint_violation = false;
    std::string first_violation;   // row name and time
    double min_gated_separation = std::numeric_limits<double>::infinity();
    ControlState final_state = ControlState::Zero();
    int replan_count = 0;
    double mean_solve_ms = 0.0;
    double p99_solve_ms = 0.0;
    double median_solve_ms = 0.0;
    std::vector<double> rmse_vs_equilibrium;  // per-state, tracking steps only
    double replan_ms = 0.0;       // synthesis time spent in replans (off the step clock)
};

struct RunResult {
    std::vector<TraceRecord> trace;
    RunSummary summary;
};

// Closed-loop run: 6-DOF plant, radar, flow-chart mode logic, re-planning.
RunResult run_scenario(const Scenario& scn, std::shared_ptr<const FullPath> bundle,
                       const RunOptions& opts = {});

// Per-state root-mean-square error between two equal-length trajectories.
std::vector<double> rmse(const std::vector<ControlState>& a, const std::vector<ControlState>& b);

struct TimingReport {
    double mean_ms = 0.0;
    double median_ms = 0.0;
    double p99_ms = 0.0;
    double fraction_of_period = 0.0;
};

TimingReport timing_report(const std::vector<TraceRecord>& trace, double ts);

// Trace CSV: fixed column order, header row, 9 significant digits, no timing
// fields (byte-identical across identical runs).
void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path);

// Summary JSON (includes timing; not byte-stable by design).
void write_summary_json(const RunSummary& summary, const std::string& path);

}  // namespace setmpc
