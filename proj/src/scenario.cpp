#include "setmpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace setmpc {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

json vec_to_json(const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vec_from_json(const json& j, int expect = -1) {
    auto a = j.get<std::vector<double>>();
    if (expect >= 0 && static_cast<int>(a.size()) != expect) {
        throw ConfigError("vector length mismatch in scenario file");
    }
    return Eigen::Map<Vec>(a.data(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace

PlannerConfig Scenario::planner_config() const {
    PlannerConfig cfg;
    cfg.input_box = constraints.input;
    cfg.x5_limit = constraints.x5_limit;
    cfg.d_box = disturbance;
    cfg.synthesis_d1 = synthesis_d1;
    cfg.ts = ts;
    return cfg;
}

std::vector<ObstacleBox> Scenario::obstacle_boxes_at(double, const std::string& reference,
                                                     const std::vector<double>& world_x) const {
    std::vector<ObstacleBox> out;
    double ref_x = 0.0;
    bool found = false;
    for (size_t k = 0; k < obstacles.size(); ++k) {
        if (obstacles[k].id == reference) {
            ref_x = world_x.at(k);
            found = true;
        }
    }
    if (!found) throw ConfigError("obstacle_boxes_at: unknown reference " + reference);
    for (size_t k = 0; k < obstacles.size(); ++k) {
        const auto& m = obstacles[k];
        ObstacleBox b;
        b.id = m.id;
        b.y_center = m.lane_y;
        b.frame_offset = world_x.at(k) - ref_x;
        b.offset_behind = b.frame_offset;
        b.offset_ahead = b.frame_offset;
        b.l_ego = m.l_ego;
        b.l_lead = m.l_lead;
        b.eps_x = m.eps_x;
        b.w_ego = m.w_ego;
        b.w_lead = m.w_lead;
        b.eps_y = m.eps_y;
        b.behind_margin = std::max(0.0, constraints.separation_floor - b.half_length());
        out.push_back(b);
    }
    return out;
}

Scenario build_scenario_1() {
    Scenario s;
    s.name = "scenario1";
    s.road = Road{2, 4.0};
    s.ego_y0 = -2.0;
    s.ego_v0 = 20.0;
    s.goal << 0, 0, 0, 0, -2.0, 50.0;
    s.goal_reference = "lead1";

    ObstacleMotion lead;
    lead.id = "lead1";
    lead.lane_y = -2.0;
    lead.x0 = 50.0;
    lead.speed = 20.0;
    lead.speed_final = 20.0;
    s.obstacles = {lead};

    Vec ulo(2), uhi(2);
    ulo << -0.5, -2.0;
    uhi << 0.5, 2.0;
    s.constraints.input = BoxSet(ulo, uhi);
    s.constraints.x5_limit = 3.0;

    s.duration = 60.0;
    s.detection_range = 100.0;

    auto wp = [](double y, double xr) {
        Waypoint w;
        w.state << 0, 0, 0, 0, y, xr;
        return w;
    };
    Waypoint w1 = wp(-2.0, -50.0);
    Waypoint w2 = wp(2.0, -18.0);
    w2.sides["lead1"] = PassSide::Behind;
    Waypoint w3 = wp(2.0, 18.0);
    w3.sides["lead1"] = PassSide::Left;
    Waypoint w4 = wp(-2.0, 30.0);
    w4.sides["lead1"] = PassSide::Ahead;
    Waypoint w5 = wp(-2.0, 50.0);
    w5.sides["lead1"] = PassSide::Ahead;
    s.initial_waypoints = {w1, w2, w3, w4, w5};
    s.contingency_lane_y = 2.0;
    return s;
}

Scenario build_scenario_2() {
    Scenario s;
    s.name = "scenario2";
    s.road = Road{3, 4.0};
    s.ego_y0 = -4.0;
    s.ego_v0 = 20.0;
    s.goal << 0, 0, 0, 0, -4.0, 50.0;
    s.goal_reference = "lead1";

    ObstacleMotion lead1;
    lead1.id = "lead1";
    lead1.lane_y = -4.0;
    lead1.x0 = 40.0;
    lead1.speed = 20.0;
    lead1.speed_final = 20.0;

    ObstacleMotion lead2;
    lead2.id = "lead2";
    lead2.lane_y = 0.0;
    lead2.x0 = 80.0;
    lead2.speed = 19.0;
    lead2.speed_final = 20.0;
    lead2.ramp_duration = 5.0;
    lead2.ramp_trigger = "gap_below";
    lead2.trigger_gap = 10.0;  // accelerates as it aligns with the first lead
    lead2.trigger_ref = "lead1";
    s.obstacles = {lead1, lead2};

    Vec ulo(2), uhi(2);
    ulo << -0.5, -2.0;
    uhi << 0.5, 2.0;
    s.constraints.input = BoxSet(ulo, uhi);
    s.constraints.x5_limit = 5.0;

    s.duration = 70.0;
    s.detection_range = 60.0;

    auto wp = [](double y, double xr) {
        Waypoint w;
        w.state << 0, 0, 0, 0, y, xr;
        return w;
    };
    Waypoint w1 = wp(-4.0, -40.0);
    Waypoint w2 = wp(0.0, -18.0);
    w2.sides["lead1"] = PassSide::Behind;
    Waypoint w3 = wp(0.0, 18.0);
    w3.sides["lead1"] = PassSide::Left;
    Waypoint w4 = wp(-4.0, 30.0);
    w4.sides["lead1"] = PassSide::Ahead;
    Waypoint w5 = wp(-4.0, 50.0);
    w5.sides["lead1"] = PassSide::Ahead;
    s.initial_waypoints = {w1, w2, w3, w4, w5};
    s.contingency_lane_y = 4.0;
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["road"] = {{"lanes", s.road.lanes}, {"lane_width", s.road.lane_width}};
    j["ego"] = {{"y0", s.ego_y0}, {"v0", s.ego_v0}};
    j["goal"] = vec_to_json(s.goal);
    j["goal_reference"] = s.goal_reference;
    json obs = json::array();
    for (const auto& m : s.obstacles) {
        obs.push_back({{"id", m.id},
                       {"lane_y", m.lane_y},
                       {"x0", m.x0},
                       {"speed", m.speed},
                       {"speed_final", m.speed_final},
                       {"ramp_duration", m.ramp_duration},
                       {"ramp_trigger", m.ramp_trigger},
                       {"trigger_y", m.trigger_y},
                       {"trigger_gap", m.trigger_gap},
                       {"trigger_ref", m.trigger_ref},
                       {"l_ego", m.l_ego},
                       {"l_lead", m.l_lead},
                       {"eps_x", m.eps_x},
                       {"w_ego", m.w_ego},
                       {"w_lead", m.w_lead},
                       {"eps_y", m.eps_y}});
    }
    j["obstacles"] = obs;
    j["constraints"] = {{"u1_limit", s.constraints.input.upper[0]},
                        {"u2_limit", s.constraints.input.upper[1]},
                        {"x1_limit", s.constraints.x1_limit},
                        {"x3_limit", s.constraints.x3_limit},
                        {"x4_limit", s.constraints.x4_limit},
                        {"x5_limit", s.constraints.x5_limit},
                        {"separation_floor", s.constraints.separation_floor},
                        {"tracking_radius", s.constraints.tracking_radius}};
    j["disturbance"] = {{"d1", s.disturbance[0]}, {"d2", s.disturbance[1]},
                        {"synthesis_d1", s.synthesis_d1}};
    j["gamma_bounds"] = {{"g1", {s.gamma.g1_min, s.gamma.g1_max}},
                         {"g2", {s.gamma.g2_min, s.gamma.g2_max}},
                         {"g3", {s.gamma.g3_min, s.gamma.g3_max}}};
    j["timing"] = {{"ts", s.ts}, {"duration", s.duration}};
    j["radar"] = {{"detection_range", s.detection_range},
                  {"noise", s.radar_noise},
                  {"noise_scale", s.noise_scale}};
    json wps = json::array();
    for (const auto& w : s.initial_waypoints) {
        json sides = json::object();
        for (const auto& [id, side] : w.sides) sides[id] = pass_side_to_string(side);
        wps.push_back({{"state", vec_to_json(w.state)}, {"sides", sides}});
    }
    j["waypoints"] = {{"initial", wps},
                      {"contingency_lane_y", s.contingency_lane_y},
                      {"buffer", s.waypoint_buffer}};
    return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
    json j = json::parse(text);
    check_keys(j, {"name", "road", "ego", "goal", "goal_reference", "obstacles", "constraints",
                   "disturbance", "gamma_bounds", "timing", "radar", "waypoints"},
               "scenario");
    Scenario s;
    s.name = j.at("name").get<std::string>();
    check_keys(j.at("road"), {"lanes", "lane_width"}, "road");
    s.road.lanes = j.at("road").at("lanes").get<int>();
    s.road.lane_width = j.at("road").at("lane_width").get<double>();
    check_keys(j.at("ego"), {"y0", "v0"}, "ego");
    s.ego_y0 = j.at("ego").at("y0").get<double>();
    s.ego_v0 = j.at("ego").at("v0").get<double>();
    s.goal = vec_from_json(j.at("goal"), 6);
    s.goal_reference = j.at("goal_reference").get<std::string>();
    for (const auto& o : j.at("obstacles")) {
        check_keys(o, {"id", "lane_y", "x0", "speed", "speed_final", "ramp_duration",
                       "ramp_trigger", "trigger_y", "trigger_gap", "trigger_ref", "l_ego",
                       "l_lead", "eps_x", "w_ego", "w_lead", "eps_y"},
                   "obstacle");
        ObstacleMotion m;
        m.id = o.at("id").get<std::string>();
        m.lane_y = o.at("lane_y").get<double>();
        m.x0 = o.at("x0").get<double>();
        m.speed = o.at("speed").get<double>();
        m.speed_final = o.at("speed_final").get<double>();
        m.ramp_duration = o.at("ramp_duration").get<double>();
        m.ramp_trigger = o.at("ramp_trigger").get<std::string>();
        m.trigger_y = o.at("trigger_y").get<double>();
        m.trigger_gap = o.at("trigger_gap").get<double>();
        m.trigger_ref = o.at("trigger_ref").get<std::string>();
        m.l_ego = o.at("l_ego").get<double>();
        m.l_lead = o.at("l_lead").get<double>();
        m.eps_x = o.at("eps_x").get<double>();
        m.w_ego = o.at("w_ego").get<double>();
        m.w_lead = o.at("w_lead").get<double>();
        m.eps_y = o.at("eps_y").get<double>();
        s.obstacles.push_back(m);
    }
    const auto& c = j.at("constraints");
    check_keys(c, {"u1_limit", "u2_limit", "x1_limit", "x3_limit", "x4_limit", "x5_limit",
                   "separation_floor", "tracking_radius"},
               "constraints");
    Vec ulo(2), uhi(2);
    uhi << c.at("u1_limit").get<double>(), c.at("u2_limit").get<double>();
    ulo = -uhi;
    s.constraints.input = BoxSet(ulo, uhi);
    s.constraints.x1_limit = c.at("x1_limit").get<double>();
    s.constraints.x3_limit = c.at("x3_limit").get<double>();
    s.constraints.x4_limit = c.at("x4_limit").get<double>();
    s.constraints.x5_limit = c.at("x5_limit").get<double>();
    s.constraints.separation_floor = c.at("separation_floor").get<double>();
    s.constraints.tracking_radius = c.at("tracking_radius").get<double>();
    const auto& d = j.at("disturbance");
    check_keys(d, {"d1", "d2", "synthesis_d1"}, "disturbance");
    s.disturbance << d.at("d1").get<double>(), d.at("d2").get<double>();
    s.synthesis_d1 = d.at("synthesis_d1").get<double>();
    const auto& g = j.at("gamma_bounds");
    check_keys(g, {"g1", "g2", "g3"}, "gamma_bounds");
    s.gamma.g1_min = g.at("g1").at(0).get<double>();
    s.gamma.g1_max = g.at("g1").at(1).get<double>();
    s.gamma.g2_min = g.at("g2").at(0).get<double>();
    s.gamma.g2_max = g.at("g2").at(1).get<double>();
    s.gamma.g3_min = g.at("g3").at(0).get<double>();
    s.gamma.g3_max = g.at("g3").at(1).get<double>();
    check_keys(j.at("timing"), {"ts", "duration"}, "timing");
    s.ts = j.at("timing").at("ts").get<double>();
    s.duration = j.at("timing").at("duration").get<double>();
    check_keys(j.at("radar"), {"detection_range", "noise", "noise_scale"}, "radar");
    s.detection_range = j.at("radar").at("detection_range").get<double>();
    s.radar_noise = j.at("radar").at("noise").get<bool>();
    s.noise_scale = j.at("radar").at("noise_scale").get<double>();
    const auto& w = j.at("waypoints");
    check_keys(w, {"initial", "contingency_lane_y", "buffer"}, "waypoints");
    for (const auto& e : w.at("initial")) {
        check_keys(e, {"state", "sides"}, "waypoint");
        Waypoint wp;
        wp.state = vec_from_json(e.at("state"), 6);
        for (auto it = e.at("sides").begin(); it != e.at("sides").end(); ++it) {
            wp.sides[it.key()] = pass_side_from_string(it.value().get<std::string>());
        }
        s.initial_waypoints.push_back(wp);
    }
    s.contingency_lane_y = w.at("contingency_lane_y").get<double>();
    s.waypoint_buffer = w.at("buffer").get<double>();
    return s;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

std::string scenario_hash(const Scenario& s) {
    const std::string text = scenario_to_json(s);
    // FNV-1a 64-bit
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace setmpc
