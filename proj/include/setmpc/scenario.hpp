#pragma once

#include <optional>
#include <string>
#include <vector>

#include "setmpc/planner.hpp"

namespace setmpc {

// World-frame motion of one lead vehicle.  Speeds are piecewise linear: the
// initial speed holds until the trigger fires, then ramps to the final speed
// over ramp_duration seconds.
struct ObstacleMotion {
    std::string id;
    double lane_y = 0.0;   // lateral center, road coordinates
    double x0 = 0.0;       // initial world X (ego starts at 0)
    double speed = 20.0;   // m/s
    double speed_final = 20.0;
    double ramp_duration = 0.0;
    // "none" | "ego_crosses_y" | "gap_below" (arms when this lead's gap to
    // trigger_ref drops to trigger_gap)
    std::string ramp_trigger = "none";
    double trigger_y = 0.0;   // ego x5 threshold (ego_crosses_y)
    double trigger_gap = 0.0; // longitudinal gap threshold (gap_below)
    std::string trigger_ref;  // reference obstacle id (gap_below)

    // box margin components
    double l_ego = 4.5, l_lead = 4.5, eps_x = 1.5;
    double w_ego = 1.8, w_lead = 1.8, eps_y = 0.2;
};

struct Road {
    int lanes = 2;
    double lane_width = 4.0;
};

struct ConstraintSet {
    BoxSet input{Vec::Zero(2), Vec::Zero(2)};  // |u1|, |u2| bounds
    double x1_limit = 10.0;
    double x3_limit = M_PI / 2.0;
    double x4_limit = 2.0;
    double x5_limit = 3.0;
    double separation_floor = 12.0;  // |x6| keep-out radius
    double tracking_radius = 50.0;   // activation distance for path tracking
};

struct Scenario {
    std::string name;
    Road road;
    double ego_y0 = -2.0;
    double ego_v0 = 20.0;
    ControlState goal = ControlState::Zero();
    std::string goal_reference;  // obstacle id anchoring x6
    std::vector<ObstacleMotion> obstacles;
    ConstraintSet constraints;
    Vec2 disturbance{0.5, 1.5};   // declared D box half-widths
    double synthesis_d1 = 0.1;    // lateral synthesis allowance
    GammaBounds gamma;            // declared envelope (embedding tests)
    double ts = 0.1;
    double duration = 60.0;
    double detection_range = 100.0;
    bool radar_noise = false;
    double noise_scale = 1.0;
    std::vector<Waypoint> initial_waypoints;
    double contingency_lane_y = 0.0;  // replan route lateral station
    double waypoint_buffer = 6.0;     // longitudinal buffer beyond the keep-out

    PlannerConfig planner_config() const;
    std::vector<ObstacleBox> obstacle_boxes_at(double t, const std::string& reference,
                                               const std::vector<double>& world_x) const;
};

// Pinned scenario definitions from the validation study.
Scenario build_scenario_1();
Scenario build_scenario_2();

// Strict JSON serialization: unknown keys are errors.
std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario_file(const std::string& path);

// Stable content hash used to pair bundles with scenarios.
std::string scenario_hash(const Scenario& s);

}  // namespace setmpc
