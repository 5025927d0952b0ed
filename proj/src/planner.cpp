#include "setmpc/planner.hpp"

#include <algorithm>
#include <cmath>

namespace setmpc {

namespace {

ControlState flatten_rates(const ControlState& x) {
    ControlState out = ControlState::Zero();
    out[4] = x[4];
    out[5] = x[5];
    return out;
}

Vec6 scale_vector(const EnvelopePreset& env, double x5_scale) {
    Vec6 s;
    s << env.x1_row, env.x2_row, env.g1, env.g2, std::min(x5_scale, 3.0), 10.0;
    return s;
}

GammaBounds envelope_gamma(const EnvelopePreset& env, const VehicleParams& p) {
    GammaBounds gb;
    gb.g1_min = -env.g1;
    gb.g1_max = env.g1;
    gb.g2_min = -env.g2;
    gb.g2_max = env.g2;
    gb.g3_min = 1.0 / (p.v_nominal + env.x1_row);
    gb.g3_max = 1.0 / (p.v_nominal - env.x1_row);
    return gb;
}

// Constraint assembly at an equilibrium: envelope rows, the scenario x5 box,
// and the segment's obstacle halfspaces, all shifted to x_eq-relative form.
SynthesisConstraints build_constraints(const ControlState& x_eq, const Vec2& u_eq,
                                       const EnvelopePreset& env, const PlannerConfig& cfg,
                                       const std::vector<Halfspace>& obstacle_rows,
                                       const VertexModel& vm) {
    std::vector<Halfspace> rows;
    const double lims[4][2] = {{0, env.x1_row}, {1, env.x2_row}, {2, env.g1}, {3, env.g2}};
    for (auto& lim : lims) {
        for (double sgn : {1.0, -1.0}) {
            Vec a = Vec::Zero(6);
            a[static_cast<int>(lim[0])] = sgn;
            rows.emplace_back(Halfspace(a, lim[1]).shifted(x_eq));
        }
    }
    for (double sgn : {1.0, -1.0}) {
        Vec a = Vec::Zero(6);
        a[4] = sgn;
        rows.emplace_back(Halfspace(a, cfg.x5_limit).shifted(x_eq));
    }
    for (const auto& h : obstacle_rows) rows.push_back(h.shifted(x_eq));

    Vec ulo = cfg.input_box.lower - u_eq;
    Vec uhi = cfg.input_box.upper - u_eq;

    SynthesisConstraints sc{std::move(rows), BoxSet(ulo, uhi), {}, std::nullopt, Vec(6), Vec(2)};
    const double ts = cfg.ts;
    Vec s1 = Vec::Zero(6), s2 = Vec::Zero(6);
    s1[4] = -ts * cfg.synthesis_d1;
    s2[5] = -ts * cfg.d_box[1];
    sc.disturbance_segments = {s1, s2};
    Vec h(2);
    h << cfg.synthesis_d1, cfg.d_box[1];
    sc.disturbance_cover = cover_box_image(vm.gd, BoxSet::symmetric(h));
    const double x5_slack = std::min(cfg.x5_limit - x_eq[4], cfg.x5_limit + x_eq[4]);
    sc.state_scale = scale_vector(env, x5_slack);
    sc.input_scale = Vec(2);
    sc.input_scale << 0.5 * (cfg.input_box.upper[0] - cfg.input_box.lower[0]),
        0.5 * (cfg.input_box.upper[1] - cfg.input_box.lower[1]);
    return sc;
}

struct FamilySeed {
    FeedbackPair pair;
    EnvelopePreset env;
    VertexModel model;
    SynthesisConstraints constraints;
};

struct SeedHint {
    EnvelopePreset env;
    double d_level = 1.0;
};

// Envelope ladder: first preset reaching the acceptance level wins, otherwise
// the best-robustness preset over the list.  A hint from the previous family
// of the same segment short-circuits the search.
FamilySeed seed_family(const ControlState& x_eq, const Vec2& u_eq, const PlannerConfig& cfg,
                       const std::vector<Halfspace>& obstacle_rows,
                       const std::vector<EnvelopePreset>& presets,
                       const std::optional<SeedHint>& hint) {
    if (hint) {
        VertexModel vm =
            build_vertex_model(cfg.vehicle, envelope_gamma(hint->env, cfg.vehicle), cfg.ts);
        SynthesisConstraints sc = build_constraints(x_eq, u_eq, hint->env, cfg, obstacle_rows, vm);
        SynthesisOptions so = cfg.synth;
        // resume the disturbance ladder at the previously achieved level
        std::vector<double> ladder;
        for (double lv : so.d_ladder) {
            if (lv <= hint->d_level + 1e-12) ladder.push_back(lv);
        }
        if (!ladder.empty()) so.d_ladder = ladder;
        try {
            FeedbackPair fp = synthesize_terminal_pair(vm, sc, so);
            return FamilySeed{fp, hint->env, vm, sc};
        } catch (const InfeasibleSynthesisError&) {
            // fall through to the full ladder
        }
    }
    std::optional<FamilySeed> best;
    for (const auto& env : presets) {
        VertexModel vm = build_vertex_model(cfg.vehicle, envelope_gamma(env, cfg.vehicle), cfg.ts);
        SynthesisConstraints sc = build_constraints(x_eq, u_eq, env, cfg, obstacle_rows, vm);
        try {
            FeedbackPair fp = synthesize_terminal_pair(vm, sc, cfg.synth);
            if (!best || fp.d_level > best->pair.d_level) {
                best = FamilySeed{fp, env, vm, sc};
            }
            if (best->pair.d_level >= cfg.accept_d_level) break;
        } catch (const InfeasibleSynthesisError&) {
            continue;
        }
    }
    if (!best) {
        throw InfeasibleSynthesisError("planner: no envelope preset admits a terminal pair", -1,
                                       -1);
    }
    return *best;
}

// Pull a candidate center toward `anchor` until every row holds with margin.
ControlState pull_to_margin(const ControlState& cand, const ControlState& anchor,
                            const PlannerConfig& cfg,
                            const std::vector<Halfspace>& obstacle_rows) {
    auto margin_ok = [&](const ControlState& x) {
        double m = std::min(cfg.x5_limit - x[4], cfg.x5_limit + x[4]);
        for (const auto& h : obstacle_rows) m = std::min(m, h.margin(x));
        return m >= cfg.center_margin;
    };
    if (margin_ok(cand)) return cand;
    double lo = 0.0, hi = 1.0;  // blend factor toward anchor
    if (!margin_ok(anchor)) return cand;  // anchor itself marginal; keep candidate
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        ControlState x = (1.0 - mid) * cand + mid * anchor;
        if (margin_ok(x)) hi = mid;
        else lo = mid;
    }
    return (1.0 - hi) * cand + hi * anchor;
}

}  // namespace

PassSide pass_side_from_string(const std::string& s) {
    if (s == "none") return PassSide::None;
    if (s == "left") return PassSide::Left;
    if (s == "right") return PassSide::Right;
    if (s == "behind") return PassSide::Behind;
    if (s == "ahead") return PassSide::Ahead;
    throw ConfigError("unknown passing side: " + s);
}

std::string pass_side_to_string(PassSide s) {
    switch (s) {
        case PassSide::None: return "none";
        case PassSide::Left: return "left";
        case PassSide::Right: return "right";
        case PassSide::Behind: return "behind";
        case PassSide::Ahead: return "ahead";
    }
    return "none";
}

std::vector<EnvelopePreset> default_envelope_presets() {
    // ordered wide-to-tight; the planner reorders per segment direction
    return {
        {0.02, 0.10, 0.8, 8.0},    // cruise: long straight corridors
        {0.035, 0.12, 0.8, 8.0},
        {0.05, 0.15, 1.0, 8.0},
        {0.12, 0.20, 1.2, 8.0},    // wide: lateral maneuvers
        {0.05, 0.12, 0.8, 6.0},
        {0.02, 0.10, 0.8, 5.0},
        {0.012, 0.06, 0.5, 4.0},
    };
}

namespace {

// straight corridors prefer small heading envelopes (big x1 reach); lateral
// maneuvers need heading room first
std::vector<EnvelopePreset> ordered_presets(const std::vector<EnvelopePreset>& presets,
                                            bool lateral) {
    std::vector<EnvelopePreset> out = presets;
    std::stable_sort(out.begin(), out.end(), [&](const EnvelopePreset& a, const EnvelopePreset& b) {
        if (lateral) return a.g1 > b.g1;
        // longitudinal growth wants speed headroom first, then a small
        // heading envelope (the gamma1 spread caps the x1 reach)
        if (a.x1_row != b.x1_row) return a.x1_row > b.x1_row;
        return a.g1 < b.g1;
    });
    return out;
}

}  // namespace

std::pair<Vec2, double> compute_equilibrium(const ControlState& target, const VehicleParams& p,
                                            double ts, double residual_tol) {
    // nominal vertex combination = Phi(gamma at the target state)
    const double v = p.v_nominal + target[0];
    if (v <= 0.5) throw EquilibriumResidualError("compute_equilibrium: degenerate speed", 1e9);
    Mat a = Mat::Identity(6, 6) + ts * lpv_phi_continuous(target[2], target[3], 1.0 / v, p);
    Mat g = ts * lpv_g_continuous(p);
    Vec rhs = -(a - Mat::Identity(6, 6)) * target;
    Vec2 u_eq = g.colPivHouseholderQr().solve(rhs);
    const double residual = (g * u_eq - rhs).norm();
    if (residual > residual_tol) {
        throw EquilibriumResidualError(
            "compute_equilibrium: target is not an equilibrium (residual=" +
                std::to_string(residual) + ")",
            residual);
    }
    return {u_eq, residual};
}

std::vector<Halfspace> obstacle_free_halfspaces(const ObstacleBox& ob, PassSide side) {
    std::vector<Halfspace> out;
    Vec a = Vec::Zero(6);
    switch (side) {
        case PassSide::None:
            break;
        case PassSide::Left:
            a[4] = -1.0;
            out.emplace_back(a, -(ob.y_center + ob.half_width()));
            break;
        case PassSide::Right:
            a[4] = 1.0;
            out.emplace_back(a, ob.y_center - ob.half_width());
            break;
        case PassSide::Behind:
            a[5] = 1.0;
            out.emplace_back(a, ob.offset_behind - (ob.half_length() + ob.behind_margin));
            break;
        case PassSide::Ahead:
            a[5] = -1.0;
            out.emplace_back(a, -(ob.offset_ahead + ob.half_length() + ob.behind_margin));
            break;
    }
    return out;
}

ControlState slice_argmin(const Ellipsoid& e, const ControlState& g) {
    // slice plane: rates (indices 0..3) equal to the center's rates
    Eigen::LLT<Mat> llt(e.shape());
    if (llt.info() != Eigen::Success) {
        throw SingularShapeError("slice_argmin: shape not positive definite");
    }
    Mat minv = llt.solve(Mat::Identity(6, 6));
    Mat mff(2, 2);
    mff << minv(4, 4), minv(4, 5), minv(5, 4), minv(5, 5);
    Mat slice_shape = mff.inverse();  // Schur complement of the free block
    Eigen::Vector2d c{e.center()[4], e.center()[5]};
    Eigen::Vector2d gt{g[4], g[5]};

    Eigen::Vector2d y;
    Eigen::Vector2d diff = gt - c;
    Mat si = slice_shape.inverse();
    if (diff.dot(si * diff) <= 1.0) {
        y = gt;
    } else {
        // projection onto the ellipse boundary: y = c + (I + mu Si)^{-1} (g - c)
        auto constraint = [&](double mu) {
            Eigen::Matrix2d msys = Eigen::Matrix2d::Identity() + mu * si;
            Eigen::Vector2d v = msys.colPivHouseholderQr().solve(diff);
            return v.dot(si * v) - 1.0;
        };
        double lo = 0.0, hi = 1.0;
        while (constraint(hi) > 0) hi *= 2.0;
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            if (constraint(mid) > 0) lo = mid;
            else hi = mid;
        }
        Eigen::Matrix2d msys = Eigen::Matrix2d::Identity() + 0.5 * (lo + hi) * si;
        y = c + msys.colPivHouseholderQr().solve(diff).eval();
    }
    ControlState out = flatten_rates(e.center());
    out[4] = y[0];
    out[5] = y[1];
    return out;
}

std::vector<SegmentFamily> one_step_sequence(const ControlState& x1, const Waypoint& x2,
                                             int s_start, const PlannerConfig& cfg,
                                             const std::vector<ObstacleBox>& obstacles,
                                             int segment_index, double containment_threshold) {
    // obstacle rows for this segment from the target waypoint's annotations
    std::vector<Halfspace> obstacle_rows;
    for (const auto& ob : obstacles) {
        auto it = x2.sides.find(ob.id);
        const PassSide side = it == x2.sides.end() ? PassSide::None : it->second;
        for (auto& h : obstacle_free_halfspaces(ob, side)) obstacle_rows.push_back(h);
    }

    struct Attempt {
        SegmentFamily fam;
        bool contained = false;
        ControlState cand = ControlState::Zero();
        double progress = 0.0;
    };

    // grow one family from a seed; returns the chain plus the re-centering
    // candidate and its scaled progress
    auto grow = [&](const FamilySeed& seed, const ControlState& x_eq, const Vec2& u_eq,
                    int s) -> Attempt {
        Attempt at;
        SegmentFamily& fam = at.fam;
        fam.index = s;
        fam.x_eq = x_eq;
        fam.u_eq = u_eq;
        fam.d_level = seed.pair.d_level;
        fam.envelope = seed.env;
        fam.model = seed.model;
        fam.segment = segment_index;
        fam.rings.emplace_back(x_eq, seed.pair.terminal.shape());
        fam.gains.push_back(seed.pair.gain);
        fam.targets.push_back(seed.pair.invariance_target);
        fam.rows = seed.constraints.state_halfspaces;
        if (seed.constraints.disturbance_cover) {
            fam.rho_scalar = shrink_factor(
                fam.rings[0], Ellipsoid(x_eq, seed.constraints.disturbance_cover->shape()));
        }

        Ellipsoid prev = seed.pair.terminal;  // center 0
        Mat prev_gain = seed.pair.gain;
        at.contained = fam.rings.back().membership_value(x1) <= containment_threshold;
        while (!at.contained && static_cast<int>(fam.rings.size()) <= cfg.synth.chain_cap) {
            RingResult r;
            try {
                r = backward_step(prev, prev_gain, seed.model, seed.constraints, fam.d_level,
                                  cfg.synth);
            } catch (const InfeasibleSynthesisError&) {
                break;  // saturated
            }
            const double dlogdet = r.ring.logdet_shape() - prev.logdet_shape();
            fam.rings.emplace_back(x_eq, r.ring.shape());
            fam.gains.push_back(r.gain);
            fam.targets.push_back(r.target_shape);
            prev = r.ring;
            prev_gain = r.gain;
            at.contained = fam.rings.back().membership_value(x1) <= containment_threshold;
            if (dlogdet < 2.0 * std::log(1.0 + cfg.synth.growth_stop)) break;  // saturated
        }
        if (!at.contained) {
            ControlState cand = slice_argmin(fam.rings.back(), x1);
            const double mb = fam.rings.back().membership_value(cand);
            if (mb > 0.85) cand = x_eq + std::sqrt(0.85 / mb) * (cand - x_eq);
            cand = pull_to_margin(cand, x_eq, cfg, obstacle_rows);
            at.cand = cand;
            Vec6 scale = scale_vector(fam.envelope, cfg.x5_limit);
            at.progress = ((cand - x_eq).cwiseQuotient(scale)).norm();
        }
        return at;
    };

    std::vector<SegmentFamily> out;
    ControlState x_eq = flatten_rates(x2.state);
    int s = s_start;
    std::optional<SeedHint> hint;
    const double good_progress = 0.4;

    while (true) {
        auto [u_eq, residual] = compute_equilibrium(x_eq, cfg.vehicle, cfg.ts,
                                                    cfg.eq_residual_tol);
        (void)residual;
        const double dx5 = std::abs(x1[4] - x_eq[4]);
        const double dx6 = std::abs(x1[5] - x_eq[5]);
        const bool lateral = dx5 > 0.5 && dx6 <= 3.0 * dx5;
        const auto presets = ordered_presets(cfg.presets, lateral);

        std::optional<Attempt> best;
        auto better_than = [](const Attempt& a, const Attempt& b) {
            if (a.contained != b.contained) return a.contained;
            const bool ga = a.fam.rings.size() >= 3, gb = b.fam.rings.size() >= 3;
            if (ga != gb) return ga;
            return a.progress > b.progress;
        };
        auto consider = [&](const FamilySeed& seed) {
            Attempt at = grow(seed, x_eq, u_eq, s);
            if (!best || better_than(at, *best)) best = std::move(at);
            return best->contained ||
                   (best->progress >= good_progress && best->fam.rings.size() >= 3);
        };

        bool done = false;
        if (hint) {
            VertexModel vm = build_vertex_model(cfg.vehicle,
                                                envelope_gamma(hint->env, cfg.vehicle), cfg.ts);
            SynthesisConstraints sc =
                build_constraints(x_eq, u_eq, hint->env, cfg, obstacle_rows, vm);
            SynthesisOptions so = cfg.synth;
            std::vector<double> ladder;
            for (double lv : so.d_ladder) {
                if (lv <= hint->d_level + 1e-12) ladder.push_back(lv);
            }
            if (!ladder.empty()) so.d_ladder = ladder;
            try {
                FeedbackPair fp = synthesize_terminal_pair(vm, sc, so);
                done = consider(FamilySeed{fp, hint->env, vm, sc});
            } catch (const InfeasibleSynthesisError&) {
            }
        }
        int tried = 0;
        for (const auto& env : presets) {
            if (done || tried >= 3) break;
            if (hint && hint->env.g1 == env.g1 && hint->env.x1_row == env.x1_row) continue;
            VertexModel vm =
                build_vertex_model(cfg.vehicle, envelope_gamma(env, cfg.vehicle), cfg.ts);
            SynthesisConstraints sc = build_constraints(x_eq, u_eq, env, cfg, obstacle_rows, vm);
            try {
                FeedbackPair fp = synthesize_terminal_pair(vm, sc, cfg.synth);
                ++tried;
                done = consider(FamilySeed{fp, env, vm, sc});
            } catch (const InfeasibleSynthesisError&) {
                continue;
            }
        }
        if (!best) {
            throw InfeasibleSynthesisError("planner: no envelope preset admits a terminal pair",
                                           -1, -1);
        }

        // propagate the seed choice only when the chain made real progress
        if (best->contained || best->progress >= good_progress) {
            hint = SeedHint{best->fam.envelope, best->fam.d_level};
        } else {
            hint.reset();
        }

        const bool contained = best->contained;
        ControlState cand = best->cand;
        Vec6 scale = scale_vector(best->fam.envelope, cfg.x5_limit);
        out.push_back(std::move(best->fam));
        if (contained) return out;

        Vec6 step = cand - x_eq;
        if ((step.cwiseQuotient(scale)).norm() < cfg.stall_tol) {
            throw PlannerStallError(
                "one_step_sequence: re-centering stalled before reaching the waypoint",
                segment_index);
        }
        x_eq = cand;
        ++s;
    }
}

FullPath full_path(const std::vector<Waypoint>& waypoints, const PlannerConfig& cfg,
                   const std::vector<ObstacleBox>& obstacles) {
    if (waypoints.size() < 2) throw ConfigError("full_path: need at least two waypoints");
    FullPath fp;
    fp.waypoints = waypoints;
    fp.obstacles = obstacles;
    fp.input_box = cfg.input_box;
    int n_s = 0;
    for (int wp = static_cast<int>(waypoints.size()) - 2; wp >= 0; --wp) {
        const ControlState& x1 = waypoints[wp].state;
        const Waypoint& x2 = waypoints[wp + 1];
        try {
            auto fams = one_step_sequence(x1, x2, n_s, cfg, obstacles, wp);
            n_s += static_cast<int>(fams.size());
            for (auto& f : fams) fp.families.push_back(std::move(f));
        } catch (const PlannerStallError& e) {
            throw PlannerStallError(std::string(e.what()) + " (segment " + std::to_string(wp) +
                                        ")",
                                    wp);
        }
    }
    return fp;
}

FullPath replan(const ControlState& x_now, const std::vector<Waypoint>& w_alt,
                const PlannerConfig& cfg, const std::vector<ObstacleBox>& obstacles) {
    std::vector<Waypoint> w;
    Waypoint start;
    start.state = flatten_rates(x_now);
    w.push_back(start);
    for (const auto& wp : w_alt) w.push_back(wp);

    FullPath fp;
    fp.waypoints = w;
    fp.obstacles = obstacles;
    fp.input_box = cfg.input_box;
    int n_s = 0;
    for (int wp = static_cast<int>(w.size()) - 2; wp >= 0; --wp) {
        // the last processed segment targets the current state: demand margin
        const double threshold = wp == 0 ? 0.85 : 1.0;
        auto fams = one_step_sequence(w[wp].state, w[wp + 1], n_s, cfg, obstacles, wp, threshold);
        n_s += static_cast<int>(fams.size());
        for (auto& f : fams) fp.families.push_back(std::move(f));
    }
    bool found = false;
    for (const auto& fam : fp.families) {
        for (const auto& ring : fam.rings) {
            if (ring.membership_value(x_now) <= 1.0) {
                found = true;
                break;
            }
        }
        if (found) break;
    }
    if (!found) {
        throw NoContainingEllipsoidError("replan: new path does not contain the current state");
    }
    return fp;
}

}  // namespace setmpc
