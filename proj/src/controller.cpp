#include "setmpc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>

namespace setmpc {

namespace {

// worst-vertex membership of the predicted images in a target shape
double replay_worst(const ControlState& e, const Vec2& v, const SegmentFamily& fam,
                    const Mat& target_chol) {
    double worst = 0.0;
    for (const auto& phi : fam.model.phi) {
        Vec img = phi * e + fam.model.g * v;
        Vec w = target_chol.triangularView<Eigen::Lower>().solve(img);
        worst = std::max(worst, w.squaredNorm());
    }
    return worst;
}

}  // namespace

std::string mode_to_string(ControllerMode m) {
    switch (m) {
        case ControllerMode::Cruise: return "cruise";
        case ControllerMode::SafeFollow: return "safe_follow";
        case ControllerMode::TrackPath: return "track_path";
        case ControllerMode::TerminalHold: return "terminal_hold";
    }
    return "cruise";
}

std::optional<Located> locate(const ControlState& x, const FullPath& fp) {
    for (size_t s = 0; s < fp.families.size(); ++s) {
        const auto& fam = fp.families[s];
        for (size_t i = 0; i < fam.rings.size(); ++i) {
            if (fam.rings[i].membership_value(x) <= 1.0) {
                return Located{static_cast<int>(s), static_cast<int>(i)};
            }
        }
    }
    return std::nullopt;
}

Vec2 terminal_law(const ControlState& x, const SegmentFamily& family, const BoxSet& input_box) {
    Vec2 u = family.u_eq + family.gains[0] * (x - family.x_eq);
    // synthesis certifies |K x| within the box on E_0; tolerate rounding only
    for (int r = 0; r < 2; ++r) {
        if (u[r] < input_box.lower[r] - 1e-9 || u[r] > input_box.upper[r] + 1e-9) {
            throw InfeasibleOneStepError("terminal_law: certified input left the box");
        }
        u[r] = std::clamp(u[r], input_box.lower[r], input_box.upper[r]);
    }
    return u;
}

OneStepSolution one_step_control(const ControlState& x, const SegmentFamily& family, int ring,
                                 const BoxSet& input_box, double replay_tol) {
    if (ring < 1 || ring >= static_cast<int>(family.rings.size())) {
        throw std::invalid_argument("one_step_control: ring index out of range");
    }
    const ControlState e = x - family.x_eq;
    const Mat& target = family.targets[ring];          // certified step target
    const Mat& cost_shape = family.rings[ring - 1].shape();

    Eigen::LLT<Mat> llt_t(target), llt_c(cost_shape);
    if (llt_t.info() != Eigen::Success || llt_c.info() != Eigen::Success) {
        throw SingularShapeError("one_step_control: degenerate shapes");
    }
    Mat lt = llt_t.matrixL(), lc = llt_c.matrixL();

    const auto& phis = family.model.phi;
    const size_t nv = phis.size();
    // normalized images: cost rows (w_j + U v) and constraint rows (z_j + T v)
    std::vector<Eigen::Vector2d> wu(nv), zu(nv);
    std::vector<double> w0(nv), z0(nv);
    Eigen::Matrix<double, Eigen::Dynamic, 2> uc(6, 2), tc(6, 2);
    uc.col(0) = lc.triangularView<Eigen::Lower>().solve(family.model.g.col(0));
    uc.col(1) = lc.triangularView<Eigen::Lower>().solve(family.model.g.col(1));
    tc.col(0) = lt.triangularView<Eigen::Lower>().solve(family.model.g.col(0));
    tc.col(1) = lt.triangularView<Eigen::Lower>().solve(family.model.g.col(1));
    std::vector<Vec> wvec(nv), zvec(nv);
    for (size_t j = 0; j < nv; ++j) {
        wvec[j] = lc.triangularView<Eigen::Lower>().solve(phis[j] * e);
        zvec[j] = lt.triangularView<Eigen::Lower>().solve(phis[j] * e);
    }

    auto cost_j = [&](size_t j, const Eigen::Vector2d& v) {
        return (wvec[j] + uc * v).squaredNorm();
    };
    auto con_j = [&](size_t j, const Eigen::Vector2d& v) {
        return (zvec[j] + tc * v).squaredNorm();
    };

    // box in u_eq-relative coordinates
    Eigen::Vector2d lo{input_box.lower[0] - family.u_eq[0], input_box.lower[1] - family.u_eq[1]};
    Eigen::Vector2d hi{input_box.upper[0] - family.u_eq[0], input_box.upper[1] - family.u_eq[1]};

    // start from the recorded ring gain, pulled inside the box
    Eigen::Vector2d v = (family.gains[ring] * e).head<2>();
    for (int r = 0; r < 2; ++r) v[r] = std::clamp(v[r], lo[r] + 1e-12, hi[r] - 1e-12);
    // ensure strict constraint feasibility at the start; shrink toward 0 if needed
    for (int tries = 0; tries < 60; ++tries) {
        double worst = 0.0;
        for (size_t j = 0; j < nv; ++j) worst = std::max(worst, con_j(j, v));
        if (worst < 1.0) break;
        v *= 0.5;
        if (v.norm() < 1e-14) break;
    }
    {
        double worst = 0.0;
        for (size_t j = 0; j < nv; ++j) worst = std::max(worst, con_j(j, v));
        if (worst >= 1.0) {
            throw InfeasibleOneStepError(
                "one_step_control: no strictly feasible start (certificate breach)");
        }
    }

    // smoothed min-max with constraint/box barrier, continuation on (mu, sigma)
    auto objective = [&](const Eigen::Vector2d& vv, double mu, double sigma, bool* ok) {
        double mx = 0.0;
        for (size_t j = 0; j < nv; ++j) mx = std::max(mx, cost_j(j, vv));
        double lse = 0.0;
        for (size_t j = 0; j < nv; ++j) lse += std::exp((cost_j(j, vv) - mx) / mu);
        double val = mx + mu * std::log(lse);
        for (size_t j = 0; j < nv; ++j) {
            const double marg = 1.0 - con_j(j, vv);
            if (marg <= 0) { *ok = false; return 0.0; }
            val -= sigma * std::log(marg);
        }
        for (int r = 0; r < 2; ++r) {
            const double m1 = vv[r] - lo[r], m2 = hi[r] - vv[r];
            if (m1 <= 0 || m2 <= 0) { *ok = false; return 0.0; }
            val -= sigma * (std::log(m1) + std::log(m2));
        }
        *ok = true;
        return val;
    };

    double mu = 1.0, sigma = 1e-3;
    for (int round = 0; round < 8; ++round) {
        for (int it = 0; it < 40; ++it) {
            // gradient and Hessian of the smoothed objective
            double mx = 0.0;
            for (size_t j = 0; j < nv; ++j) mx = std::max(mx, cost_j(j, v));
            double zsum = 0.0;
            Eigen::Vector2d grad = Eigen::Vector2d::Zero();
            Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
            std::vector<double> wj(nv);
            Eigen::Vector2d gsum = Eigen::Vector2d::Zero();
            for (size_t j = 0; j < nv; ++j) {
                wj[j] = std::exp((cost_j(j, v) - mx) / mu);
                zsum += wj[j];
            }
            for (size_t j = 0; j < nv; ++j) {
                wj[j] /= zsum;
                Eigen::Vector2d gj = 2.0 * uc.transpose() * (wvec[j] + uc * v);
                grad += wj[j] * gj;
                hess += wj[j] * (2.0 * uc.transpose() * uc + gj * gj.transpose() / mu);
                gsum += wj[j] * gj;
            }
            hess -= gsum * gsum.transpose() / mu;
            for (size_t j = 0; j < nv; ++j) {
                const double marg = 1.0 - con_j(j, v);
                Eigen::Vector2d gj = 2.0 * tc.transpose() * (zvec[j] + tc * v);
                grad += sigma / marg * gj;
                hess += sigma / (marg * marg) * gj * gj.transpose() +
                        sigma / marg * 2.0 * tc.transpose() * tc;
            }
            for (int r = 0; r < 2; ++r) {
                const double m1 = v[r] - lo[r], m2 = hi[r] - v[r];
                grad[r] += sigma * (-1.0 / m1 + 1.0 / m2);
                hess(r, r) += sigma * (1.0 / (m1 * m1) + 1.0 / (m2 * m2));
            }
            hess.diagonal().array() += 1e-14;
            Eigen::Vector2d dv = hess.ldlt().solve(-grad);
            const double lam2 = -grad.dot(dv);
            if (!(lam2 > 0) || lam2 * 0.5 < 1e-13) break;
            bool ok0 = false;
            const double f0 = objective(v, mu, sigma, &ok0);
            double step = 1.0;
            while (step > 1e-14) {
                bool ok = false;
                const double f1 = objective(v + step * dv, mu, sigma, &ok);
                if (ok && f1 < f0 - 1e-4 * step * lam2) break;
                step *= 0.5;
            }
            if (step <= 1e-14) break;
            v += step * dv;
        }
        mu *= 0.1;
        sigma *= 0.1;
        if (mu < 1e-7) break;
    }

    OneStepSolution sol;
    sol.input = family.u_eq + Vec2(v);
    double worst_cost = 0.0, worst_con = 0.0;
    for (size_t j = 0; j < nv; ++j) {
        worst_cost = std::max(worst_cost, cost_j(j, v));
        worst_con = std::max(worst_con, con_j(j, v));
    }
    sol.cost = worst_cost;
    sol.worst_membership = worst_con;
    if (worst_con > 1.0 + replay_tol) {
        throw InfeasibleOneStepError("one_step_control: certificate replay failed");
    }
    for (int r = 0; r < 2; ++r) {
        if (sol.input[r] < input_box.lower[r] - 1e-12 ||
            sol.input[r] > input_box.upper[r] + 1e-12) {
            throw InfeasibleOneStepError("one_step_control: input left the box");
        }
    }
    return sol;
}

GridOptimum one_step_grid_oracle(const ControlState& x, const SegmentFamily& family, int ring,
                                 const BoxSet& input_box, int grid_n) {
    const ControlState e = x - family.x_eq;
    const Mat& target = family.targets[ring];
    const Mat& cost_shape = family.rings[ring - 1].shape();
    Eigen::LLT<Mat> llt_t(target), llt_c(cost_shape);
    Mat lt = llt_t.matrixL(), lc = llt_c.matrixL();

    const auto& phis = family.model.phi;
    const size_t nv = phis.size();
    std::vector<Vec> wvec(nv), zvec(nv);
    for (size_t j = 0; j < nv; ++j) {
        wvec[j] = lc.triangularView<Eigen::Lower>().solve(phis[j] * e);
        zvec[j] = lt.triangularView<Eigen::Lower>().solve(phis[j] * e);
    }
    Eigen::Matrix<double, Eigen::Dynamic, 2> uc(6, 2), tc(6, 2);
    uc.col(0) = lc.triangularView<Eigen::Lower>().solve(family.model.g.col(0));
    uc.col(1) = lc.triangularView<Eigen::Lower>().solve(family.model.g.col(1));
    tc.col(0) = lt.triangularView<Eigen::Lower>().solve(family.model.g.col(0));
    tc.col(1) = lt.triangularView<Eigen::Lower>().solve(family.model.g.col(1));

    GridOptimum best;
    best.cost = std::numeric_limits<double>::infinity();
    for (int a = 0; a < grid_n; ++a) {
        const double u0 = input_box.lower[0] +
                          (input_box.upper[0] - input_box.lower[0]) * a / (grid_n - 1);
        for (int b = 0; b < grid_n; ++b) {
            const double u1 = input_box.lower[1] +
                              (input_box.upper[1] - input_box.lower[1]) * b / (grid_n - 1);
            Eigen::Vector2d v{u0 - family.u_eq[0], u1 - family.u_eq[1]};
            double worst_con = 0.0, worst_cost = 0.0;
            bool fail = false;
            for (size_t j = 0; j < nv; ++j) {
                worst_con = std::max(worst_con, (zvec[j] + tc * v).squaredNorm());
                if (worst_con > 1.0) { fail = true; break; }
                worst_cost = std::max(worst_cost, (wvec[j] + uc * v).squaredNorm());
                if (worst_cost >= best.cost) { fail = true; break; }
            }
            if (!fail && worst_cost < best.cost) {
                best.cost = worst_cost;
                best.input = Vec2{u0, u1};
                best.feasible = true;
            }
        }
    }
    return best;
}

double safe_follow(double x_rel, double gap_rate, const SafeFollowSettings& s) {
    const double a = s.gap_gain * (std::abs(x_rel) - s.safe_distance) + s.rate_gain * gap_rate;
    return std::clamp(a, -s.accel_limit, s.accel_limit);
}

ControlDecision Controller::step(const ControlState& x, const LeadObservation& lead) {
    const auto t0 = std::chrono::steady_clock::now();
    ControlDecision d;

    auto lane_hold_steer = [&](double y_target) {
        // gentle lane-keeping feedback used outside TrackPath
        const double u = -0.04 * (x[4] - y_target) - 0.12 * x[1] - 0.9 * x[2] - 0.4 * x[3];
        return std::clamp(u, input_box.lower[0], input_box.upper[0]);
    };

    std::optional<Located> loc;
    if (path && !path->families.empty()) loc = locate(x, *path);

    if (loc) {
        const auto& fam = path->families[loc->s];
        d.s = loc->s;
        d.i = loc->i;
        if (loc->i == 0) {
            d.mode = ControllerMode::TerminalHold;
            d.input = terminal_law(x, fam, input_box);
            // worst-vertex membership of the terminal images in the invariance target
            Eigen::LLT<Mat> llt(fam.targets[0]);
            if (llt.info() == Eigen::Success) {
                Mat lt = llt.matrixL();
                d.worst_membership =
                    replay_worst(x - fam.x_eq, d.input - fam.u_eq, fam, lt);
            }
        } else {
            d.mode = ControllerMode::TrackPath;
            auto sol = one_step_control(x, fam, loc->i, input_box);
            d.input = sol.input;
            d.worst_membership = sol.worst_membership;
        }
    } else if (lead.detected) {
        d.mode = ControllerMode::SafeFollow;
        d.input[0] = lane_hold_steer(lane_hold_y);
        d.input[1] = safe_follow(lead.x_rel, lead.gap_rate, follow);
        d.wants_replan = path != nullptr;
    } else {
        d.mode = ControllerMode::Cruise;
        d.input[0] = lane_hold_steer(lane_hold_y);
        d.input[1] = std::clamp(-cruise_speed_gain * x[0], input_box.lower[1],
                                input_box.upper[1]);
    }

    const auto t1 = std::chrono::steady_clock::now();
    d.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return d;
}

}  // namespace setmpc
