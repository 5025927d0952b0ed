#pragma once

#include <memory>
#include <optional>
#include <string>

#include "setmpc/planner.hpp"

namespace setmpc {

enum class ControllerMode { Cruise, SafeFollow, TrackPath, TerminalHold };

std::string mode_to_string(ControllerMode m);

struct Located {
    int s = -1;
    int i = -1;
};

// Lexicographically smallest (s, i) whose ellipsoid contains x; s counts from
// the goal outward, so the minimum encodes maximal maneuver progress.
std::optional<Located> locate(const ControlState& x, const FullPath& fp);

// Terminal feedback u = u_eq + K (x - x_eq); saturation never activates inside
// E_0 by the synthesis input certificate (asserted).
Vec2 terminal_law(const ControlState& x, const SegmentFamily& family, const BoxSet& input_box);

struct OneStepSolution {
    Vec2 input = Vec2::Zero();      // absolute input (u_eq included)
    double cost = 0.0;              // worst-vertex shape-norm cost at the optimum
    double worst_membership = 0.0;  // worst-vertex membership in the certified target
};

// Algorithm-3 step (4): min over u of the worst-vertex P_{i-1}-norm of the
// predicted deviation, subject to all vertex images inside the ring's
// certified target and u in the input box.  Smoothed min-max with a
// log-barrier, Newton in 2 variables; the recorded gain warm-starts it.
OneStepSolution one_step_control(const ControlState& x, const SegmentFamily& family, int ring,
                                 const BoxSet& input_box, double replay_tol = 1e-8);

// Grid-oracle counterpart over an n x n input lattice (independent route used
// by tests and certificate audits).  Returns the best feasible cost or nullopt
// when no lattice point is feasible.
struct GridOptimum {
    Vec2 input = Vec2::Zero();
    double cost = 0.0;
    bool feasible = false;
};
GridOptimum one_step_grid_oracle(const ControlState& x, const SegmentFamily& family, int ring,
                                 const BoxSet& input_box, int grid_n = 201);

struct SafeFollowSettings {
    double gap_gain = 0.1;     // 1/s^2, on the distance error
    double rate_gain = 0.6;    // 1/s, on the gap closing rate
    double safe_distance = 12.0;
    double accel_limit = 2.0;
};

// Longitudinal command: k_d (|x_rel| - d_safe) + k_v * gap_rate, clipped.
double safe_follow(double x_rel, double gap_rate, const SafeFollowSettings& s);

struct ControlDecision {
    Vec2 input = Vec2::Zero();
    ControllerMode mode = ControllerMode::Cruise;
    int s = -1;
    int i = -1;
    double solve_ms = 0.0;
    double worst_membership = 0.0;
    bool wants_replan = false;
};

struct LeadObservation {
    double x_rel = 0.0;     // ego minus lead, m
    double gap_rate = 0.0;  // d|x_rel|/dt, negative when closing
    bool detected = false;
};

struct Controller {
    BoxSet input_box{Vec::Zero(2), Vec::Zero(2)};
    SafeFollowSettings follow;
    double cruise_speed_gain = 0.8;
    double lane_hold_y = 0.0;  // lateral station for cruise/safe-follow steering

    std::shared_ptr<const FullPath> path;  // swapped atomically between steps

    ControlDecision step(const ControlState& x, const LeadObservation& lead);
};

}  // namespace setmpc
