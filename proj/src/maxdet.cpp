#include "setmpc/maxdet.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace setmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// -logdet(S), or +inf if S is not PD.  Returns the factor via out param.
double neg_logdet(const Mat& s, Eigen::LLT<Mat>* llt) {
    llt->compute(s);
    if (llt->info() != Eigen::Success) return kInf;
    return -2.0 * Mat(llt->matrixL()).diagonal().array().log().sum();
}

// Accumulates gradient and Hessian of -logdet(S(x)) at x, weighted by w.
// Sinv is the inverse of the evaluated block.
void accumulate_block(const LmiBlock& b, const Mat& sinv, double w, Vec* g, Mat* h) {
    const size_t nt = b.vars.size();
    std::vector<Mat> ws(nt);
    for (size_t i = 0; i < nt; ++i) ws[i] = sinv * b.coeffs[i];
    for (size_t i = 0; i < nt; ++i) {
        (*g)[b.vars[i]] -= w * ws[i].trace();
    }
    for (size_t i = 0; i < nt; ++i) {
        for (size_t j = i; j < nt; ++j) {
            const double hij = w * ws[i].cwiseProduct(ws[j].transpose()).sum();
            (*h)(b.vars[i], b.vars[j]) += hij;
            if (b.vars[i] != b.vars[j]) (*h)(b.vars[j], b.vars[i]) += hij;
        }
    }
}

}  // namespace

Mat LmiBlock::eval(const Vec& x) const {
    Mat s = f0;
    for (size_t i = 0; i < vars.size(); ++i) s += x[vars[i]] * coeffs[i];
    return s;
}

double feasibility_margin(const std::vector<LmiBlock>& blocks, const Vec& x) {
    double m = kInf;
    for (const auto& b : blocks) {
        Eigen::SelfAdjointEigenSolver<Mat> es(b.eval(x));
        m = std::min(m, es.eigenvalues().minCoeff());
    }
    return m;
}

MaxDetResult solve_maxdet(const MaxDetProblem& prob, const Vec& x0, const MaxDetOptions& opts) {
    MaxDetResult res;
    res.x = x0;
    Eigen::LLT<Mat> llt;

    auto phi = [&](const Vec& x, double t) -> double {
        double v = t * neg_logdet(prob.objective.eval(x), &llt);
        if (!std::isfinite(v)) return kInf;
        for (const auto& b : prob.blocks) {
            v += neg_logdet(b.eval(x), &llt);
            if (!std::isfinite(v)) return kInf;
        }
        return v;
    };

    if (!std::isfinite(phi(res.x, opts.t0))) {
        throw SolverStallError("solve_maxdet: start point not strictly feasible");
    }

    double t = opts.t0;
    Vec g(prob.nvars);
    Mat h(prob.nvars, prob.nvars);
    while (true) {
        for (int it = 0; it < opts.newton_cap; ++it) {
            g.setZero();
            h.setZero();
            bool bad = false;
            {
                Mat s = prob.objective.eval(res.x);
                llt.compute(s);
                if (llt.info() != Eigen::Success) { bad = true; }
                else {
                    Mat sinv = llt.solve(Mat::Identity(s.rows(), s.cols()));
                    accumulate_block(prob.objective, sinv, t, &g, &h);
                }
            }
            for (const auto& b : prob.blocks) {
                if (bad) break;
                Mat s = b.eval(res.x);
                llt.compute(s);
                if (llt.info() != Eigen::Success) { bad = true; break; }
                Mat sinv = llt.solve(Mat::Identity(s.rows(), s.cols()));
                accumulate_block(b, sinv, 1.0, &g, &h);
            }
            if (bad) throw SolverStallError("solve_maxdet: iterate left the cone");

            h.diagonal().array() += 1e-13;
            Eigen::LDLT<Mat> hs(h);
            Vec dx = hs.solve(-g);
            const double lam2 = -g.dot(dx);
            if (!(lam2 > 0) || lam2 * 0.5 < opts.newton_tol) break;

            const double f0v = phi(res.x, t);
            double step = 1.0;
            while (step > 1e-13) {
                const double fv = phi(res.x + step * dx, t);
                if (std::isfinite(fv) && fv < f0v - 1e-4 * step * lam2) break;
                step *= 0.5;
            }
            if (step <= 1e-13) break;
            res.x += step * dx;
            ++res.newton_iters;
        }
        if (t >= opts.t_max) break;
        t = std::min(t * opts.t_mul, opts.t_max);
    }
    res.ok = true;
    return res;
}

Phase1Result solve_phase1(const std::vector<LmiBlock>& blocks, const Vec& x0, int nvars,
                          double success_margin, const MaxDetOptions& opts) {
    Phase1Result res;
    Eigen::LLT<Mat> llt;

    // initial slack from the start point's deficit
    double s0 = 0.0;
    for (const auto& b : blocks) {
        Eigen::SelfAdjointEigenSolver<Mat> es(b.eval(x0));
        s0 = std::max(s0, -es.eigenvalues().minCoeff());
    }
    Vec z(nvars + 1);
    z.head(nvars) = x0;
    z[nvars] = s0 + std::max(0.1 * std::abs(s0), 1.0);

    const double xb = opts.var_bound;

    auto eval_val = [&](const Vec& zz, double t) -> double {
        double v = t * zz[nvars];
        for (const auto& b : blocks) {
            Mat s = b.eval(zz.head(nvars));
            s.diagonal().array() += zz[nvars];
            v += neg_logdet(s, &llt);
            if (!std::isfinite(v)) return kInf;
        }
        for (int i = 0; i < nvars; ++i) {
            const double m1 = xb - zz[i], m2 = xb + zz[i];
            if (m1 <= 0 || m2 <= 0) return kInf;
            v -= std::log(m1) + std::log(m2);
        }
        return v;
    };

    double t = opts.t0;
    Vec g(nvars + 1);
    Mat h(nvars + 1, nvars + 1);
    while (t <= 1e10) {
        for (int it = 0; it < 100; ++it) {
            g.setZero();
            h.setZero();
            g[nvars] = t;
            bool bad = false;
            for (const auto& b : blocks) {
                Mat s = b.eval(z.head(nvars));
                s.diagonal().array() += z[nvars];
                llt.compute(s);
                if (llt.info() != Eigen::Success) { bad = true; break; }
                Mat sinv = llt.solve(Mat::Identity(s.rows(), s.cols()));
                const size_t nt = b.vars.size();
                std::vector<Mat> ws(nt);
                for (size_t i = 0; i < nt; ++i) ws[i] = sinv * b.coeffs[i];
                for (size_t i = 0; i < nt; ++i) g[b.vars[i]] -= ws[i].trace();
                g[nvars] -= sinv.trace();
                for (size_t i = 0; i < nt; ++i) {
                    for (size_t j = i; j < nt; ++j) {
                        const double hij = ws[i].cwiseProduct(ws[j].transpose()).sum();
                        h(b.vars[i], b.vars[j]) += hij;
                        if (b.vars[i] != b.vars[j]) h(b.vars[j], b.vars[i]) += hij;
                    }
                    const double his = ws[i].cwiseProduct(sinv).sum();
                    h(b.vars[i], nvars) += his;
                    h(nvars, b.vars[i]) += his;
                }
                h(nvars, nvars) += sinv.cwiseProduct(sinv).sum();
            }
            if (bad) throw SolverStallError("solve_phase1: iterate left the cone");
            for (int i = 0; i < nvars; ++i) {
                const double m1 = xb - z[i], m2 = xb + z[i];
                g[i] += 1.0 / m1 - 1.0 / m2;
                h(i, i) += 1.0 / (m1 * m1) + 1.0 / (m2 * m2);
            }

            h.diagonal().array() += 1e-14;
            Eigen::LDLT<Mat> hs(h);
            Vec dz = hs.solve(-g);
            const double lam2 = -g.dot(dz);
            if (!(lam2 > 0) || lam2 * 0.5 < 1e-10) break;

            const double f0v = eval_val(z, t);
            double step = 1.0;
            while (step > 1e-14) {
                const double fv = eval_val(z + step * dz, t);
                if (std::isfinite(fv) && fv < f0v - 1e-4 * step * lam2) break;
                step *= 0.5;
            }
            if (step <= 1e-14) break;
            z += step * dz;
            ++res.newton_iters;
            if (z[nvars] < -success_margin) {
                res.x = z.head(nvars);
                res.slack = z[nvars];
                res.feasible = true;
                return res;
            }
        }
        t *= 10.0;
    }
    res.x = z.head(nvars);
    res.slack = z[nvars];
    res.feasible = z[nvars] < 0.0;
    return res;
}

}  // namespace setmpc
