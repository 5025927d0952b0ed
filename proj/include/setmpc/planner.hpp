#pragma once

#include <map>
#include <string>
#include <vector>

#include "setmpc/synthesis.hpp"

namespace setmpc {

enum class PassSide { None, Left, Right, Behind, Ahead };

PassSide pass_side_from_string(const std::string& s);
std::string pass_side_to_string(PassSide s);

// Rectangular keep-out region around a lead vehicle, in (x5, x6) coordinates.
struct ObstacleBox {
    std::string id;
    double y_center = 0.0;      // lateral center relative to the road centerline
    double frame_offset = 0.0;  // x6 value at which the ego sits on the obstacle center
    // conservative future offsets in the same frame (moving obstacles drift):
    // behind-rows use the minimum, ahead-rows the maximum
    double offset_behind = 0.0;
    double offset_ahead = 0.0;
    double l_ego = 4.5, l_lead = 4.5, eps_x = 1.5;  // longitudinal margin components
    double w_ego = 1.8, w_lead = 1.8, eps_y = 0.2;  // lateral margin components
    double behind_margin = 0.0;  // extra keep-out beyond half_length (e.g. up to 12 m)

    double half_length() const { return 0.5 * (l_ego + l_lead) + eps_x; }
    double half_width() const { return 0.5 * (w_ego + w_lead) + eps_y; }
    // true lateral overlap (no eps margin) used by the separation gate
    double overlap_half_width() const { return 0.5 * (w_ego + w_lead); }
};

struct Waypoint {
    ControlState state = ControlState::Zero();
    std::map<std::string, PassSide> sides;
};

struct EnvelopePreset {
    double g1 = 0.12;
    double g2 = 0.20;
    double x2_row = 1.2;
    double x1_row = 8.0;
};

std::vector<EnvelopePreset> default_envelope_presets();

struct PlannerConfig {
    std::vector<EnvelopePreset> presets = default_envelope_presets();
    BoxSet input_box{Vec::Zero(2), Vec::Zero(2)};  // U (absolute)
    double x5_limit = 3.0;                          // |x5| bound of the scenario
    Vec2 d_box{0.5, 1.5};                           // declared disturbance half-widths
    double synthesis_d1 = 0.1;                      // lateral synthesis allowance (m/s)
    double ts = 0.1;
    VehicleParams vehicle;
    SynthesisOptions synth;
    double stall_tol = 1e-3;
    double eq_residual_tol = 1e-6;
    double center_margin = 0.05;  // strict-interior margin for re-centred equilibria
    double accept_d_level = 0.6;  // envelope ladder stops at this robustness level
};

struct SegmentFamily {
    int index = 0;  // global s; smaller is closer to the goal
    ControlState x_eq = ControlState::Zero();
    Vec2 u_eq = Vec2::Zero();
    std::vector<Ellipsoid> rings;      // E_0 .. E_N, centered at x_eq
    std::vector<Mat> gains;            // K_i per ring; [0] is the terminal gain
    std::vector<Mat> targets;          // [0]: invariance target; [i>=1]: step target into E_{i-1}
    double d_level = 1.0;
    EnvelopePreset envelope;
    VertexModel model;                 // per-family vertex model
    int segment = 0;                   // waypoint segment that produced this family
    double rho_scalar = 0.0;           // scalar shrink diagnostic of the terminal set
    std::vector<Halfspace> rows;       // equilibrium-relative admissibility rows
};

struct FullPath {
    std::vector<SegmentFamily> families;  // ordered: index 0 anchors the goal
    std::vector<Waypoint> waypoints;      // start-to-goal
    std::vector<ObstacleBox> obstacles;   // snapshot used at synthesis time
    BoxSet input_box{Vec::Zero(2), Vec::Zero(2)};  // U (absolute)
};

// Equilibrium input for a target state via least squares on the nominal vertex
// combination; throws EquilibriumResidualError beyond the tolerance.
std::pair<Vec2, double> compute_equilibrium(const ControlState& target,
                                            const VehicleParams& p, double ts,
                                            double residual_tol = 1e-6);

// Convex restriction of the obstacle-free set for one obstacle and side.
std::vector<Halfspace> obstacle_free_halfspaces(const ObstacleBox& ob, PassSide side);

// Algorithm 1: families from the x2-anchored chain toward x1.
std::vector<SegmentFamily> one_step_sequence(const ControlState& x1, const Waypoint& x2,
                                             int s_start, const PlannerConfig& cfg,
                                             const std::vector<ObstacleBox>& obstacles,
                                             int segment_index,
                                             double containment_threshold = 1.0);

// Algorithm 2: full path over the waypoint list (start-to-goal order in W).
FullPath full_path(const std::vector<Waypoint>& waypoints, const PlannerConfig& cfg,
                   const std::vector<ObstacleBox>& obstacles);

// Fresh path from (a flattened copy of) x_now through the alternative waypoints.
// Throws NoContainingEllipsoidError when the new path does not contain x_now.
FullPath replan(const ControlState& x_now, const std::vector<Waypoint>& w_alt,
                const PlannerConfig& cfg, const std::vector<ObstacleBox>& obstacles);

// Exact minimizer of |y - g| over the zero-rate slice of an ellipsoid
// (projection onto the (x5, x6) plane section through the center).
ControlState slice_argmin(const Ellipsoid& e, const ControlState& g);

}  // namespace setmpc
