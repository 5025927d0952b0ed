#include "setmpc/synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace setmpc {

namespace {

// svec index layout: Q vars first (column-major lower triangle), then Y row-major.
struct VarLayout {
    int n = 0, m = 0;
    std::vector<std::pair<int, int>> q_idx;

    explicit VarLayout(int n_, int m_) : n(n_), m(m_) {
        for (int j = 0; j < n; ++j) {
            for (int i = j; i < n; ++i) q_idx.emplace_back(i, j);
        }
    }
    int nq() const { return static_cast<int>(q_idx.size()); }
    int nvars() const { return nq() + m * n; }
    int yvar(int r, int c) const { return nq() + r * n + c; }

    Mat q_basis(int k) const {
        auto [i, j] = q_idx[k];
        Mat e = Mat::Zero(n, n);
        e(i, j) = 1.0;
        e(j, i) = 1.0;
        return e;
    }
    Mat unpack_q(const Vec& x) const {
        Mat q = Mat::Zero(n, n);
        for (int k = 0; k < nq(); ++k) {
            auto [i, j] = q_idx[k];
            q(i, j) = x[k];
            q(j, i) = x[k];
        }
        return q;
    }
    Mat unpack_y(const Vec& x) const {
        Mat y = Mat::Zero(m, n);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < n; ++c) y(r, c) = x[yvar(r, c)];
        }
        return y;
    }
    Vec pack(const Mat& q, const Mat& y) const {
        Vec x = Vec::Zero(nvars());
        for (int k = 0; k < nq(); ++k) {
            auto [i, j] = q_idx[k];
            x[k] = q(i, j);
        }
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < n; ++c) x[yvar(r, c)] = y(r, c);
        }
        return x;
    }
};

// Model and constraints in normalized coordinates.
struct ScaledProgram {
    int n, m;
    std::vector<Mat> phi;       // scaled vertices
    Mat g;                      // scaled input map
    std::vector<Vec> segments;  // scaled disturbance segments
    std::vector<std::pair<Vec, double>> rows;  // scaled halfspaces (a, b)
    Mat ds;                     // state scaling (world = ds * scaled)
    Mat du;
    VarLayout vars;

    ScaledProgram(const VertexModel& model, const SynthesisConstraints& c)
        : n(model.n()), m(model.m()), vars(model.n(), model.m()) {
        ds = c.state_scale.asDiagonal();
        du = c.input_scale.asDiagonal();
        Mat dsi = c.state_scale.cwiseInverse().asDiagonal();
        for (const auto& p : model.phi) phi.push_back(dsi * p * ds);
        g = dsi * model.g * du;
        for (const auto& s : c.disturbance_segments) segments.push_back(dsi * s);
        for (const auto& h : c.state_halfspaces) {
            if (h.offset <= 0) {
                throw InfeasibleSynthesisError(
                    "synthesis: equilibrium violates a state halfspace", -1, -1);
            }
            rows.emplace_back(ds * h.normal, h.offset);
        }
        // input box must be symmetric around u_eq for the |K x| <= u LMI rows;
        // use the smaller side (conservative for asymmetric boxes)
        for (int r = 0; r < m; ++r) {
            const double lo = -c.input_box.lower[r], hi = c.input_box.upper[r];
            if (!(lo > 0) || !(hi > 0)) {
                throw InfeasibleSynthesisError("synthesis: equilibrium input not interior", -1, r);
            }
        }
    }

    Vec input_limits(const BoxSet& input_box) const {
        Vec lim(m);
        for (int r = 0; r < m; ++r) {
            lim[r] = std::min(-input_box.lower[r], input_box.upper[r]) / du(r, r);
        }
        return lim;
    }

    // [[Q, (Phi_j Q + G Y)^T], [Phi_j Q + G Y, S]] >= 0 with constant S.
    LmiBlock vertex_block_const(const Mat& phij, const Mat& s_const) const {
        Mat f0 = Mat::Zero(2 * n, 2 * n);
        f0.bottomRightCorner(n, n) = s_const;
        LmiBlock b(f0);
        for (int k = 0; k < vars.nq(); ++k) {
            Mat e = vars.q_basis(k);
            Mat mblk = Mat::Zero(2 * n, 2 * n);
            mblk.topLeftCorner(n, n) = e;
            Mat pe = phij * e;
            mblk.bottomLeftCorner(n, n) = pe;
            mblk.topRightCorner(n, n) = pe.transpose();
            b.add_term(k, mblk);
        }
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < n; ++c) {
                Mat mblk = Mat::Zero(2 * n, 2 * n);
                mblk.bottomLeftCorner(n, n).col(c) = g.col(r);
                mblk.topRightCorner(n, n).row(c) = g.col(r).transpose();
                b.add_term(vars.yvar(r, c), mblk);
            }
        }
        return b;
    }

    // Same block with S = cq * Q - m0 (terminal invariance; affine in Q).
    LmiBlock vertex_block_self(const Mat& phij, double cq, const Mat& m0) const {
        Mat f0 = Mat::Zero(2 * n, 2 * n);
        f0.bottomRightCorner(n, n) = -m0;
        LmiBlock b(f0);
        for (int k = 0; k < vars.nq(); ++k) {
            Mat e = vars.q_basis(k);
            Mat mblk = Mat::Zero(2 * n, 2 * n);
            mblk.topLeftCorner(n, n) = e;
            Mat pe = phij * e;
            mblk.bottomLeftCorner(n, n) = pe;
            mblk.topRightCorner(n, n) = pe.transpose();
            mblk.bottomRightCorner(n, n) = cq * e;
            b.add_term(k, mblk);
        }
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < n; ++c) {
                Mat mblk = Mat::Zero(2 * n, 2 * n);
                mblk.bottomLeftCorner(n, n).col(c) = g.col(r);
                mblk.topRightCorner(n, n).row(c) = g.col(r).transpose();
                b.add_term(vars.yvar(r, c), mblk);
            }
        }
        return b;
    }

    // [[u_r^2, e_r^T Y], [Y^T e_r, Q]] >= 0.
    LmiBlock input_block(int r, double ulim) const {
        Mat f0 = Mat::Zero(n + 1, n + 1);
        f0(0, 0) = ulim * ulim;
        LmiBlock b(f0);
        for (int k = 0; k < vars.nq(); ++k) {
            Mat mblk = Mat::Zero(n + 1, n + 1);
            mblk.bottomRightCorner(n, n) = vars.q_basis(k);
            b.add_term(k, mblk);
        }
        for (int c = 0; c < n; ++c) {
            Mat mblk = Mat::Zero(n + 1, n + 1);
            mblk(0, 1 + c) = 1.0;
            mblk(1 + c, 0) = 1.0;
            b.add_term(vars.yvar(r, c), mblk);
        }
        return b;
    }

    // b^2 - a^T Q a >= 0 as a 1x1 block.
    LmiBlock state_row_block(const Vec& a, double bnd) const {
        LmiBlock b(Mat::Constant(1, 1, bnd * bnd));
        for (int k = 0; k < vars.nq(); ++k) {
            auto [i, j] = vars.q_idx[k];
            const double coef = (i == j ? 1.0 : 2.0) * a[i] * a[j];
            b.add_term(k, Mat::Constant(1, 1, -coef));
        }
        return b;
    }

    // Q - floor >= 0.
    LmiBlock nesting_block(const Mat& floor) const {
        LmiBlock b(-floor);
        for (int k = 0; k < vars.nq(); ++k) b.add_term(k, vars.q_basis(k));
        return b;
    }

    LmiBlock objective_block() const {
        LmiBlock b(Mat::Zero(n, n));
        for (int k = 0; k < vars.nq(); ++k) b.add_term(k, vars.q_basis(k));
        return b;
    }
};

std::vector<Vec> scale_segments(const std::vector<Vec>& segs, double level) {
    std::vector<Vec> out;
    out.reserve(segs.size());
    for (const auto& s : segs) out.push_back(level * s);
    return out;
}

// Deterministic beta candidates for the terminal program at a given level:
// a pilot-based guess when available plus a small fixed grid.
std::vector<std::vector<double>> beta_candidates(const std::optional<Mat>& pilot_q,
                                                 const std::vector<Vec>& segs) {
    std::vector<std::vector<double>> out;
    if (pilot_q) {
        try {
            out.push_back(optimize_difference_betas(*pilot_q, segs));
        } catch (const InfeasibleShrinkError&) {
        }
    }
    out.push_back(std::vector<double>(segs.size(), 0.02));
    out.push_back(std::vector<double>(segs.size(), 0.06));
    return out;
}

}  // namespace

void SynthesisConstraints::validate(int n, int m) const {
    if (state_scale.size() != n || input_scale.size() != m) {
        throw std::invalid_argument("SynthesisConstraints: scale dimension mismatch");
    }
    if (input_box.dim() != m) throw std::invalid_argument("SynthesisConstraints: input box dim");
    for (const auto& h : state_halfspaces) {
        if (h.normal.size() != n) throw std::invalid_argument("SynthesisConstraints: row dim");
    }
}

FeedbackPair synthesize_terminal_pair(const VertexModel& model,
                                      const SynthesisConstraints& constraints,
                                      const SynthesisOptions& opts) {
    constraints.validate(model.n(), model.m());
    ScaledProgram sp(model, constraints);
    const Vec ulim = sp.input_limits(constraints.input_box);
    const int n = sp.n;
    const double kt = opts.kappa_terminal;

    // quick necessary check: every vertex must be stabilizable at all
    if (model.g.cwiseAbs().maxCoeff() == 0.0) {
        for (size_t j = 0; j < sp.phi.size(); ++j) {
            Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(sp.phi[j]).eigenvalues();
            if (ev.cwiseAbs().maxCoeff() > 1.0 + 1e-12) {
                throw InfeasibleSynthesisError(
                    "synthesize_terminal_pair: unstable vertex with no input authority",
                    static_cast<int>(j), -1);
            }
        }
    }

    std::optional<Mat> pilot;
    Vec x0 = sp.vars.pack(0.001 * Mat::Identity(n, n), Mat::Zero(sp.m, n));

    for (double level : opts.d_ladder) {
        auto segs = scale_segments(sp.segments, level);
        for (const auto& betas : beta_candidates(pilot, segs)) {
            double cq_raw;
            Mat m0_raw;
            difference_inner_coeffs(segs, betas, n, &cq_raw, &m0_raw);
            const double cq = (1.0 - kt) * (1.0 - kt) * cq_raw;
            const Mat m0 = (1.0 - kt) * (1.0 - kt) * m0_raw;

            std::vector<LmiBlock> blocks;
            for (const auto& phij : sp.phi) blocks.push_back(sp.vertex_block_self(phij, cq, m0));
            for (int r = 0; r < sp.m; ++r) blocks.push_back(sp.input_block(r, ulim[r]));
            for (const auto& [a, bnd] : sp.rows) blocks.push_back(sp.state_row_block(a, bnd));

            auto p1 = solve_phase1(blocks, x0, sp.vars.nvars(), 1e-7, opts.phase1);
            if (!p1.feasible) continue;

            MaxDetProblem prob;
            prob.nvars = sp.vars.nvars();
            prob.objective = sp.objective_block();
            prob.blocks = std::move(blocks);
            auto sol = solve_maxdet(prob, p1.x, opts.maxdet);

            Mat q = sp.vars.unpack_q(sol.x);
            Mat y = sp.vars.unpack_y(sol.x);
            q = 0.5 * (q + q.transpose());
            pilot = q;

            // unscale and assemble the certified pair
            Mat q_world = sp.ds * q * sp.ds;
            q_world = 0.5 * (q_world + q_world.transpose());
            Mat k_world = sp.du * (y * q.inverse()) * sp.ds.inverse();
            FeedbackPair fp{k_world, Ellipsoid(Vec::Zero(n), q_world)};
            fp.d_level = level;
            fp.betas = betas;

            // certified image container in world coordinates
            auto segs_world = scale_segments(constraints.disturbance_segments, level);
            Mat target;
            try {
                target = difference_inner_shape(q_world, segs_world, betas);
            } catch (const InfeasibleShrinkError&) {
                continue;
            }
            fp.invariance_target = target;

            // replay the certificate before accepting
            bool ok = true;
            Ellipsoid target_e(Vec::Zero(n), target);
            for (size_t j = 0; j < model.phi.size() && ok; ++j) {
                Mat acl = model.phi[j] + model.g * k_world;
                ok = affine_image_contained(acl, fp.terminal, target_e, 1e-8);
            }
            for (int r = 0; r < model.m() && ok; ++r) {
                const double reach =
                    std::sqrt((k_world.row(r) * q_world * k_world.row(r).transpose())(0, 0));
                const double lim = std::min(-constraints.input_box.lower[r],
                                            constraints.input_box.upper[r]);
                ok = reach <= lim * (1.0 + 1e-8);
            }
            for (const auto& h : constraints.state_halfspaces) {
                if (!ok) break;
                ok = h.normal.dot(q_world * h.normal) <= h.offset * h.offset + 1e-8;
            }
            if (ok) return fp;
        }
    }
    throw InfeasibleSynthesisError(
        "synthesize_terminal_pair: no feasible pair on the disturbance ladder", -1, -1);
}

RingResult backward_step(const Ellipsoid& target, const Mat& target_gain,
                         const VertexModel& model, const SynthesisConstraints& constraints,
                         double d_level, const SynthesisOptions& opts) {
    constraints.validate(model.n(), model.m());
    ScaledProgram sp(model, constraints);
    const Vec ulim = sp.input_limits(constraints.input_box);
    const int n = sp.n;

    Mat dsi = sp.ds.inverse();
    Mat p_prev = dsi * target.shape() * dsi;
    p_prev = 0.5 * (p_prev + p_prev.transpose());
    Mat k_prev = sp.du.inverse() * target_gain * sp.ds;

    auto segs = scale_segments(sp.segments, d_level);
    RingResult res;
    res.betas = optimize_difference_betas(p_prev, segs);
    Mat s_target =
        (1.0 - opts.kappa_ring) * (1.0 - opts.kappa_ring) *
        difference_inner_shape(p_prev, segs, res.betas);

    // nesting floor sits a hair below P_prev so that rows tangent to the target
    // leave a (tiny) interior corridor; the 1e-8 containment tolerance covers it
    const double nest_eps = 5e-9;
    std::vector<LmiBlock> blocks;
    for (const auto& phij : sp.phi) blocks.push_back(sp.vertex_block_const(phij, s_target));
    for (int r = 0; r < sp.m; ++r) blocks.push_back(sp.input_block(r, ulim[r]));
    for (const auto& [a, bnd] : sp.rows) blocks.push_back(sp.state_row_block(a, bnd));
    blocks.push_back(sp.nesting_block((1.0 - nest_eps) * p_prev));

    // warm start in the middle of the nesting corridor with the previous gain
    Mat q0 = (1.0 - 0.5 * nest_eps) * p_prev;
    Vec x0 = sp.vars.pack(q0, k_prev * q0);
    if (!(feasibility_margin(blocks, x0) > 0.0)) {
        auto p1 = solve_phase1(blocks, x0, sp.vars.nvars(), 1e-12, opts.phase1);
        if (!p1.feasible) {
            throw InfeasibleSynthesisError("backward_step: ring program infeasible (saturated)",
                                           -1, -1);
        }
        x0 = p1.x;
    }

    MaxDetProblem prob;
    prob.nvars = sp.vars.nvars();
    prob.objective = sp.objective_block();
    prob.blocks = std::move(blocks);
    auto sol = solve_maxdet(prob, x0, opts.maxdet);
    res.newton_iters = sol.newton_iters;

    Mat q = sp.vars.unpack_q(sol.x);
    q = 0.5 * (q + q.transpose());
    Mat y = sp.vars.unpack_y(sol.x);
    Mat q_world = sp.ds * q * sp.ds;
    q_world = 0.5 * (q_world + q_world.transpose());

    res.ring = Ellipsoid(Vec::Zero(n), q_world);
    res.gain = sp.du * (y * q.inverse()) * dsi;
    res.target_shape = sp.ds * s_target * sp.ds;
    res.target_shape = 0.5 * (res.target_shape + res.target_shape.transpose());
    if (constraints.disturbance_cover) {
        res.rho_scalar = shrink_factor(target, *constraints.disturbance_cover);
    }
    return res;
}

std::pair<Vec, double> input_grid_search(const Vec& state_rel, const Mat& target_shape,
                                         const VertexModel& model, const BoxSet& input_box,
                                         int grid_n) {
    const int m = model.m();
    if (m < 1 || m > 2) throw std::invalid_argument("input_grid_search: expects 1 or 2 inputs");
    Eigen::LLT<Mat> llt(target_shape);
    if (llt.info() != Eigen::Success) {
        throw SingularShapeError("input_grid_search: target not positive definite");
    }
    Mat l = llt.matrixL();

    // precompute normalized base images and input columns; membership is then a
    // scalar quadratic per grid point
    const size_t nv = model.phi.size();
    std::vector<Vec> w(nv);
    for (size_t j = 0; j < nv; ++j) {
        w[j] = l.triangularView<Eigen::Lower>().solve(model.phi[j] * state_rel);
    }
    std::vector<Vec> gcols(m);
    for (int r = 0; r < m; ++r) {
        gcols[r] = l.triangularView<Eigen::Lower>().solve(model.g.col(r));
    }
    Mat a(m, m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) a(r, c) = gcols[r].dot(gcols[c]);
    }

    const int outer_n = (m == 2) ? grid_n : 1;
    double best = std::numeric_limits<double>::infinity();
    Vec best_u = Vec::Zero(m);
    Vec u(m);
    for (int i = 0; i < grid_n; ++i) {
        u[0] = input_box.lower[0] + (input_box.upper[0] - input_box.lower[0]) * i / (grid_n - 1);
        for (int k = 0; k < outer_n; ++k) {
            if (m == 2) {
                u[1] = input_box.lower[1] +
                       (input_box.upper[1] - input_box.lower[1]) * k / (grid_n - 1);
            }
            const double uau = u.dot(a * u);
            double worst = 0.0;
            for (size_t j = 0; j < nv; ++j) {
                double cross = 0.0;
                for (int r = 0; r < m; ++r) cross += u[r] * w[j].dot(gcols[r]);
                const double val = w[j].squaredNorm() + 2.0 * cross + uau;
                worst = std::max(worst, val);
                if (worst >= best) break;
            }
            if (worst < best) {
                best = worst;
                best_u = u;
            }
        }
    }
    return {best_u, best};
}

OneStepReport verify_one_step(const Ellipsoid& outer, const Mat& target_shape,
                              const VertexModel& model, const BoxSet& input_box,
                              int samples, std::mt19937_64& rng, int grid_n, double tol) {
    OneStepReport rep;
    rep.samples = samples;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    int ok = 0;
    const int m = model.m();
    for (int s = 0; s < samples; ++s) {
        Vec x = outer.sample_inside(rng) - outer.center();
        auto [u, worst] = input_grid_search(x, target_shape, model, input_box, grid_n);
        // refine around the best coarse cell to the tolerance scale
        Vec span = (input_box.upper - input_box.lower) / (grid_n - 1);
        for (int r = 0; r < 4 && worst > 1.0 + tol; ++r) {
            Vec lo(m), hi(m);
            for (int c = 0; c < m; ++c) {
                lo[c] = std::max(input_box.lower[c], u[c] - span[c]);
                hi[c] = std::min(input_box.upper[c], u[c] + span[c]);
            }
            std::tie(u, worst) = input_grid_search(x, target_shape, model, BoxSet(lo, hi), grid_n);
            span *= 2.0 / (grid_n - 1);
        }
        if (worst <= 1.0 + tol) ++ok;
        else ++rep.failed;
        rep.worst_margin = std::min(rep.worst_margin, 1.0 - worst);
    }
    rep.fraction_feasible = samples > 0 ? static_cast<double>(ok) / samples : 1.0;
    return rep;
}

}  // namespace setmpc
