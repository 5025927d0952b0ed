#pragma once

#include <Eigen/Dense>
#include <vector>

#include "setmpc/errors.hpp"

namespace setmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Affine matrix-valued constraint S(x) = f0 + sum_i x_{var[i]} * coeff[i], required PSD.
struct LmiBlock {
    Mat f0;
    std::vector<int> vars;
    std::vector<Mat> coeffs;

    explicit LmiBlock(Mat f0_) : f0(std::move(f0_)) {}
    void add_term(int var, Mat coeff) {
        vars.push_back(var);
        coeffs.push_back(std::move(coeff));
    }
    Mat eval(const Vec& x) const;
    int size() const { return static_cast<int>(f0.rows()); }
};

// maximize logdet(S_obj(x)) subject to S_k(x) >= 0 for all blocks.
struct MaxDetProblem {
    int nvars = 0;
    LmiBlock objective{Mat()};
    std::vector<LmiBlock> blocks;
};

struct MaxDetOptions {
    double t0 = 1.0;
    double t_mul = 25.0;
    double t_max = 2e9;
    int newton_cap = 60;
    double newton_tol = 1e-11;
    double var_bound = 1e4;   // |x_i| bound inside phase-1 only
};

struct MaxDetResult {
    Vec x;
    bool ok = false;
    int newton_iters = 0;
};

// Barrier method from a strictly feasible start (all blocks and objective PD at x0).
MaxDetResult solve_maxdet(const MaxDetProblem& prob, const Vec& x0,
                          const MaxDetOptions& opts = {});

struct Phase1Result {
    Vec x;
    double slack = 0.0;    // final s; strictly feasible iff slack < 0
    bool feasible = false;
    int newton_iters = 0;
};

// min s subject to S_k(x) + s I >= 0, |x_i| <= var_bound.  Early exit once
// s < -success_margin.  A converged positive s is an infeasibility verdict.
Phase1Result solve_phase1(const std::vector<LmiBlock>& blocks, const Vec& x0, int nvars,
                          double success_margin = 1e-7, const MaxDetOptions& opts = {});

// Smallest eigenvalue over all blocks at x (strict feasibility margin).
double feasibility_margin(const std::vector<LmiBlock>& blocks, const Vec& x);

}  // namespace setmpc
