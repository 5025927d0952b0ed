#include "setmpc/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

namespace setmpc {

namespace {

// World-frame lead simulation with latched ramp triggers.
struct LeadState {
    ObstacleMotion motion;
    double x = 0.0;
    double v = 0.0;
    bool ramp_armed = false;
    double ramp_t0 = 0.0;

    void init() {
        x = motion.x0;
        v = motion.speed;
    }
    void maybe_trigger(double t, double ego_y, const std::vector<LeadState>& all) {
        if (ramp_armed || motion.ramp_trigger == "none") return;
        if (motion.ramp_trigger == "ego_crosses_y") {
            if (ego_y >= motion.trigger_y) {
                ramp_armed = true;
                ramp_t0 = t;
            }
            return;
        }
        if (motion.ramp_trigger == "gap_below") {
            for (const auto& other : all) {
                if (other.motion.id == motion.trigger_ref &&
                    x - other.x <= motion.trigger_gap) {
                    ramp_armed = true;
                    ramp_t0 = t;
                }
            }
        }
    }
    void advance(double t, double dt) {
        // piecewise-linear speed profile
        auto speed_at = [&](double tau) {
            if (!ramp_armed) return motion.speed;
            if (motion.ramp_duration <= 0.0) return motion.speed_final;
            const double f = std::clamp((tau - ramp_t0) / motion.ramp_duration, 0.0, 1.0);
            return motion.speed + f * (motion.speed_final - motion.speed);
        };
        // trapezoidal update is exact for piecewise-linear speeds
        const double v0 = speed_at(t), v1 = speed_at(t + dt);
        x += 0.5 * (v0 + v1) * dt;
        v = v1;
    }
    // remaining in-frame drift relative to a reference lead until speeds settle;
    // a pending (unarmed) ramp is treated as arming immediately
    double final_offset_against(const LeadState& ref, double t) const {
        auto settle = [](const LeadState& l) {
            return l.motion.ramp_trigger == "none" ? l.v : l.motion.speed_final;
        };
        auto drift_to_settle = [&](const LeadState& l) {
            if (l.motion.ramp_trigger == "none" || l.motion.ramp_duration <= 0.0) return 0.0;
            const double done =
                l.ramp_armed ? std::clamp((t - l.ramp_t0) / l.motion.ramp_duration, 0.0, 1.0)
                             : 0.0;
            const double rem = (1.0 - done) * l.motion.ramp_duration;
            return 0.5 * (l.v - l.motion.speed_final) * rem;
        };
        const double vf_self = settle(*this), vf_ref = settle(ref);
        if (std::abs(vf_self - vf_ref) > 1e-9) return x - ref.x;
        return (x + drift_to_settle(*this)) - (ref.x + drift_to_settle(ref));
    }
};

// forward-simulate the lead fleet (ego-dependent triggers pessimistically
// armed now) and report the offset range of lead k against reference r
std::pair<double, double> future_offsets(std::vector<LeadState> leads, size_t k, size_t r,
                                         double t, double horizon) {
    for (auto& l : leads) {
        if (l.motion.ramp_trigger == "ego_crosses_y" && !l.ramp_armed) {
            l.ramp_armed = true;
            l.ramp_t0 = t;
        }
    }
    double off = leads[k].x - leads[r].x;
    double lo = off, hi = off;
    const double dt = 0.1;
    for (double tau = t; tau < t + horizon; tau += dt) {
        for (auto& l : leads) l.maybe_trigger(tau, 1e9, leads);
        for (auto& l : leads) l.advance(tau, dt);
        off = leads[k].x - leads[r].x;
        lo = std::min(lo, off);
        hi = std::max(hi, off);
    }
    return {lo, hi};
}

// exact-enough minimum of the (x5,x6) ellipse quadratic over a box
bool ellipse_box_intersect(const Eigen::Matrix2d& shape, const Eigen::Vector2d& center,
                           const Eigen::Vector2d& box_center, const Eigen::Vector2d& box_half) {
    Eigen::Matrix2d si = shape.inverse();
    Eigen::Vector2d lo = box_center - box_half - center;
    Eigen::Vector2d hi = box_center + box_half - center;
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    for (int i = 0; i < 2; ++i) p[i] = std::clamp(0.0, lo[i], hi[i]);
    for (int it = 0; it < 200; ++it) {
        for (int i = 0; i < 2; ++i) {
            // exact coordinate minimizer of p^T si p
            const int o = 1 - i;
            const double num = -si(i, o) * p[o];
            p[i] = std::clamp(num / si(i, i), lo[i], hi[i]);
        }
    }
    return p.dot(si * p) <= 1.0;
}

std::vector<Waypoint> contingency_waypoints(const Scenario& scn, const ControlState& x_now_new,
                                            const std::vector<ObstacleBox>& boxes,
                                            const std::string& new_ref) {
    // standard overtaking pattern via the contingency lane, all obstacles
    // annotated per phase
    const double via = scn.contingency_lane_y;
    const double goal_y = scn.goal[4];
    const double floor = scn.constraints.separation_floor;
    const double buf = scn.waypoint_buffer;
    auto wp = [](double y, double xr) {
        Waypoint w;
        w.state << 0, 0, 0, 0, y, xr;
        return w;
    };
    Waypoint behind = wp(via, -(floor + buf));
    Waypoint pass = wp(via, floor + buf);
    Waypoint merge = wp(goal_y, floor + buf + 12.0);
    Waypoint goal = wp(goal_y, scn.goal[5]);
    for (const auto& b : boxes) {
        const bool is_new = b.id == new_ref;
        behind.sides[b.id] = is_new ? PassSide::Behind : PassSide::Left;
        pass.sides[b.id] = PassSide::Left;
        merge.sides[b.id] = PassSide::Ahead;
        goal.sides[b.id] = PassSide::Ahead;
    }
    std::vector<Waypoint> out;
    // keep only waypoints still ahead of the current state
    if (x_now_new[5] < behind.state[5] - 1.0) out.push_back(behind);
    out.push_back(pass);
    out.push_back(merge);
    out.push_back(goal);
    return out;
}

}  // namespace

std::vector<double> rmse(const std::vector<ControlState>& a, const std::vector<ControlState>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("rmse: length mismatch");
    std::vector<double> out(6, 0.0);
    if (a.empty()) return out;
    for (size_t t = 0; t < a.size(); ++t) {
        for (int i = 0; i < 6; ++i) {
            const double d = a[t][i] - b[t][i];
            out[i] += d * d;
        }
    }
    for (int i = 0; i < 6; ++i) out[i] = std::sqrt(out[i] / static_cast<double>(a.size()));
    return out;
}

TimingReport timing_report(const std::vector<TraceRecord>& trace, double ts) {
    TimingReport r;
    if (trace.empty()) return r;
    std::vector<double> ms;
    ms.reserve(trace.size());
    for (const auto& t : trace) ms.push_back(t.solve_ms);
    std::sort(ms.begin(), ms.end());
    double sum = 0.0;
    for (double v : ms) sum += v;
    r.mean_ms = sum / ms.size();
    r.median_ms = ms[ms.size() / 2];
    r.p99_ms = ms[static_cast<size_t>(std::min(ms.size() - 1.0, std::ceil(0.99 * ms.size()) - 1))];
    r.fraction_of_period = r.mean_ms / (1000.0 * ts);
    return r;
}

RunResult run_scenario(const Scenario& scn, std::shared_ptr<const FullPath> bundle,
                       const RunOptions& opts) {
    RunResult res;
    const double ts = scn.ts;
    const int steps = static_cast<int>(std::round(scn.duration / ts));
    const bool noise_on = opts.use_noise_flag ? opts.noise : scn.radar_noise;

    VehicleParams vp;
    vp.v_nominal = scn.ego_v0;
    auto tires = TireSet::from_params(vp);
    SixDofState plant = SixDofState::cruise(scn.ego_v0, scn.ego_y0, vp);

    std::vector<LeadState> leads;
    for (const auto& m : scn.obstacles) {
        LeadState l;
        l.motion = m;
        l.init();
        leads.push_back(l);
    }

    Controller ctl;
    ctl.input_box = scn.constraints.input;
    ctl.follow.safe_distance = scn.constraints.separation_floor;
    ctl.lane_hold_y = scn.ego_y0;
    ctl.path = bundle;

    std::string reference = scn.goal_reference;
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    int replans = 0;
    std::vector<ControlState> track_x, track_ref;

    auto obstacle_in_snapshot = [&](const std::string& id) {
        if (!ctl.path) return false;
        for (const auto& b : ctl.path->obstacles) {
            if (b.id == id) return true;
        }
        return false;
    };

    for (int k = 0; k <= steps; ++k) {
        const double t = k * ts;
        for (auto& l : leads) l.maybe_trigger(t, plant.Y, leads);

        // radar
        std::vector<RadarReading> radar(leads.size());
        for (size_t o = 0; o < leads.size(); ++o) {
            RadarReading r;
            r.x_rel = plant.X - leads[o].x;
            r.y_rel = plant.Y - leads[o].motion.lane_y;
            r.v_rel = plant.xd - leads[o].v;
            r.detected = std::abs(r.x_rel) <= scn.detection_range;
            if (noise_on && r.detected) {
                r.x_rel += scn.noise_scale * leads[o].motion.eps_x * uni(rng);
                r.y_rel += scn.noise_scale * leads[o].motion.eps_y * uni(rng);
            }
            radar[o] = r;
        }

        // control state in the current reference frame
        int ref_idx = -1;
        for (size_t o = 0; o < leads.size(); ++o) {
            if (leads[o].motion.id == reference) ref_idx = static_cast<int>(o);
        }
        ControlState x;
        x << plant.xd - vp.v_nominal, plant.yd, plant.psi, plant.psid, plant.Y,
            (ref_idx >= 0 ? radar[ref_idx].x_rel : 0.0);

        if (k == steps) {
            res.summary.final_state = x;
            break;
        }

        // re-plan trigger: a detected obstacle outside the active snapshot whose
        // box intersects the remaining corridor
        double replan_ms = 0.0;
        if (opts.allow_replan && ctl.path && !ctl.path->families.empty()) {
            auto loc = locate(x, *ctl.path);
            for (size_t o = 0; o < leads.size(); ++o) {
                if (!radar[o].detected || obstacle_in_snapshot(leads[o].motion.id)) continue;
                // obstacle box in the current frame
                const double off = (ref_idx >= 0 ? leads[o].x - leads[ref_idx].x : 0.0);
                ObstacleBox nb;
                nb.l_ego = leads[o].motion.l_ego;
                nb.l_lead = leads[o].motion.l_lead;
                nb.eps_x = leads[o].motion.eps_x;
                nb.w_ego = leads[o].motion.w_ego;
                nb.w_lead = leads[o].motion.w_lead;
                nb.eps_y = leads[o].motion.eps_y;
                Eigen::Vector2d box_c{leads[o].motion.lane_y, off};
                Eigen::Vector2d box_h{nb.half_width(), nb.half_length()};
                bool hits = false;
                const int s_from = loc ? loc->s : 0;
                for (int s = 0; s <= s_from && !hits; ++s) {
                    const auto& fam = ctl.path->families[s];
                    for (const auto& ring : fam.rings) {
                        Eigen::Matrix2d sh;
                        sh << ring.shape()(4, 4), ring.shape()(4, 5), ring.shape()(5, 4),
                            ring.shape()(5, 5);
                        Eigen::Vector2d c{ring.center()[4], ring.center()[5]};
                        if (ellipse_box_intersect(sh, c, box_c, box_h)) {
                            hits = true;
                            break;
                        }
                    }
                }
                if (std::getenv("SETMPC_DEBUG_REPLAN")) {
                    std::fprintf(stderr, "t=%.1f obs=%s det=%d off=%.1f xrel=%.1f s_from=%d hits=%d\n",
                                 t, leads[o].motion.id.c_str(), radar[o].detected ? 1 : 0, off,
                                 radar[o].x_rel, s_from, hits ? 1 : 0);
                }
                if (!hits) continue;

                // re-anchor to the new obstacle and synthesize a fresh path
                const auto tr0 = std::chrono::steady_clock::now();
                const std::string new_ref = leads[o].motion.id;
                std::vector<double> world_x;
                for (const auto& l : leads) world_x.push_back(l.x);
                // conservative frame offsets against the new reference
                int new_idx = static_cast<int>(o);
                std::vector<ObstacleBox> boxes =
                    scn.obstacle_boxes_at(t, new_ref, world_x);
                for (size_t b = 0; b < boxes.size(); ++b) {
                    auto [lo_off, hi_off] =
                        future_offsets(leads, b, static_cast<size_t>(new_idx), t, 120.0);
                    boxes[b].offset_behind = lo_off;
                    boxes[b].offset_ahead = hi_off;
                }
                ControlState x_new = x;
                x_new[5] = radar[o].x_rel;
                PlannerConfig cfg = scn.planner_config();
                try {
                    auto wps = contingency_waypoints(scn, x_new, boxes, new_ref);
                    FullPath fresh = replan(x_new, wps, cfg, boxes);
                    ctl.path = std::make_shared<FullPath>(std::move(fresh));
                    reference = new_ref;
                    ref_idx = new_idx;
                    x = x_new;
                    ++replans;
                } catch (const std::exception&) {
                    // stay on the old path; SafeFollow covers the gap
                }
                replan_ms += std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - tr0)
                                 .count();
                break;
            }
        }

        // safe-follow observation: nearest lead ahead in the ego's lateral band
        LeadObservation lead_obs;
        for (size_t o = 0; o < leads.size(); ++o) {
            if (!radar[o].detected) continue;
            const double overlap =
                0.5 * (leads[o].motion.w_ego + leads[o].motion.w_lead) + leads[o].motion.eps_y;
            if (radar[o].x_rel < 0.0 && std::abs(radar[o].y_rel) < overlap) {
                if (!lead_obs.detected || std::abs(radar[o].x_rel) < std::abs(lead_obs.x_rel)) {
                    lead_obs.detected = true;
                    lead_obs.x_rel = radar[o].x_rel;
                    lead_obs.gap_rate = -radar[o].v_rel;  // gap shrinks when ego is faster
                }
            }
        }

        TraceRecord rec;
        rec.t = t;
        rec.plant = plant;
        rec.x = x;
        rec.ego_speed = vp.v_nominal + x[0];
        rec.radar = radar;
        rec.replan_count = replans;

        ControlDecision dec;
        try {
            dec = ctl.step(x, lead_obs);
        } catch (const std::exception& e) {
            res.summary.first_violation = std::string("controller: ") + e.what();
            res.summary.constraint_violation = true;
            res.summary.final_state = x;
            res.trace.push_back(rec);
            return res;
        }
        rec.mode = dec.mode;
        rec.s = dec.s;
        rec.i = dec.i;
        rec.u = dec.input;
        rec.worst_membership = dec.worst_membership;
        rec.solve_ms = dec.solve_ms;
        res.summary.replan_ms += replan_ms;

        // constraint ledger (Eq-53 rows; state rows enforced in tracking modes)
        rec.m_u1 = scn.constraints.input.upper[0] - std::abs(dec.input[0]);
        rec.m_u2 = scn.constraints.input.upper[1] - std::abs(dec.input[1]);
        rec.m_x1 = scn.constraints.x1_limit - std::abs(x[0]);
        rec.m_x3 = scn.constraints.x3_limit - std::abs(x[2]);
        rec.m_x4 = scn.constraints.x4_limit - std::abs(x[3]);
        rec.m_x5 = scn.constraints.x5_limit - std::abs(x[4]);
        rec.m_sep = 999.0;
        for (size_t o = 0; o < leads.size(); ++o) {
            if (!radar[o].detected) continue;
            const double overlap =
                0.5 * (leads[o].motion.w_ego + leads[o].motion.w_lead) + leads[o].motion.eps_y;
            if (std::abs(radar[o].y_rel) < overlap) {
                rec.sep_gate_active = true;
                rec.m_sep = std::min(rec.m_sep, std::abs(radar[o].x_rel) -
                                                     scn.constraints.separation_floor);
            }
        }
        if (rec.sep_gate_active) {
            res.summary.min_gated_separation =
                std::min(res.summary.min_gated_separation,
                         rec.m_sep + scn.constraints.separation_floor);
        }

        res.trace.push_back(rec);

        const bool tracking =
            dec.mode == ControllerMode::TrackPath || dec.mode == ControllerMode::TerminalHold;
        if (tracking) {
            track_x.push_back(x);
            track_ref.push_back(ctl.path->families[dec.s].x_eq);
            const double viol = std::min({rec.m_u1, rec.m_u2, rec.m_x1, rec.m_x3, rec.m_x4,
                                          rec.m_x5});
            if (viol < -1e-9) {
                res.summary.constraint_violation = true;
                res.summary.first_violation =
                    "constraint row violated at t=" + std::to_string(t);
                res.summary.final_state = x;
                return res;
            }
        }

        // actuate the plant: steering direct, acceleration to front-drive torque
        const double drag = vp.air_drag * plant.xd * plant.xd;
        const double torque = vp.wheel_radius * (vp.mass * dec.input[1] + drag) / 2.0;
        try {
            plant = integrate_plant(plant, PlantInput{dec.input[0], torque, torque}, ts, vp,
                                    tires);
        } catch (const std::exception& e) {
            res.summary.first_violation = std::string("plant: ") + e.what();
            res.summary.constraint_violation = true;
            res.summary.final_state = x;
            return res;
        }
        for (auto& l : leads) l.advance(t, ts);
    }

    res.summary.completed = !res.summary.constraint_violation;
    res.summary.replan_count = replans;
    if (!track_x.empty()) res.summary.rmse_vs_equilibrium = rmse(track_x, track_ref);
    auto tr = timing_report(res.trace, ts);
    res.summary.mean_solve_ms = tr.mean_ms;
    res.summary.median_solve_ms = tr.median_ms;
    res.summary.p99_solve_ms = tr.p99_ms;
    return res;
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot write trace file: " + path);
    const size_t nobs = trace.empty() ? 0 : trace[0].radar.size();
    std::fprintf(f, "t,mode,s,i,u1,u2,worst_membership,xd,yd,psi,psid,om11,om12,om21,om22,X,Y,"
                    "x1,x2,x3,x4,x5,x6,ego_speed");
    for (size_t o = 0; o < nobs; ++o) {
        std::fprintf(f, ",xrel_%zu,yrel_%zu,vrel_%zu,det_%zu", o, o, o, o);
    }
    std::fprintf(f, ",m_u1,m_u2,m_x1,m_x3,m_x4,m_x5,m_sep,sep_gate,replans\n");
    for (const auto& r : trace) {
        std::fprintf(f, "%.9g,%s,%d,%d,%.9g,%.9g,%.9g", r.t, mode_to_string(r.mode).c_str(), r.s,
                     r.i, r.u[0], r.u[1], r.worst_membership);
        const auto pv = r.plant.to_vector();
        for (int i = 0; i < 10; ++i) std::fprintf(f, ",%.9g", pv[i]);
        for (int i = 0; i < 6; ++i) std::fprintf(f, ",%.9g", r.x[i]);
        std::fprintf(f, ",%.9g", r.ego_speed);
        for (const auto& rr : r.radar) {
            std::fprintf(f, ",%.9g,%.9g,%.9g,%d", rr.x_rel, rr.y_rel, rr.v_rel,
                         rr.detected ? 1 : 0);
        }
        std::fprintf(f, ",%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d\n", r.m_u1, r.m_u2, r.m_x1,
                     r.m_x3, r.m_x4, r.m_x5, r.m_sep, r.sep_gate_active ? 1 : 0, r.replan_count);
    }
    std::fclose(f);
}

void write_summary_json(const RunSummary& s, const std::string& path) {
    nlohmann::json j;
    j["completed"] = s.completed;
    j["constraint_violation"] = s.constraint_violation;
    j["first_violation"] = s.first_violation;
    j["min_abs_xrel"] = std::isfinite(s.min_gated_separation) ? s.min_gated_separation : -1.0;
    j["final_state"] = std::vector<double>(s.final_state.data(), s.final_state.data() + 6);
    j["replan_count"] = s.replan_count;
    j["timing"] = {{"mean_ms", s.mean_solve_ms},
                   {"median_ms", s.median_solve_ms},
                   {"p99_ms", s.p99_solve_ms},
                   {"replan_ms", s.replan_ms}};
    j["rmse_vs_equilibrium"] = s.rmse_vs_equilibrium;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write summary file: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace setmpc
