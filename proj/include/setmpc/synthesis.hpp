#pragma once

#include <optional>
#include <random>
#include <vector>

#include "setmpc/ellipsoid.hpp"
#include "setmpc/maxdet.hpp"
#include "setmpc/vehicle.hpp"

namespace setmpc {

// Constraint data for one family, in equilibrium-relative coordinates.
struct SynthesisConstraints {
    std::vector<Halfspace> state_halfspaces;  // a^T (x - x_eq) <= b, b > 0 at the origin
    BoxSet input_box;                          // U - u_eq
    // Disturbance reach per control period as segment half-vectors (columns of
    // G_d_disc scaled by the box half-widths).  Order matches the D box axes.
    std::vector<Vec> disturbance_segments;
    // Ellipsoidal cover of the same reach (scalar-shrink diagnostics).
    std::optional<Ellipsoid> disturbance_cover;

    Vec state_scale;  // per-axis normalization for the interior-point programs
    Vec input_scale;

    void validate(int n, int m) const;
};

struct SynthesisOptions {
    double kappa_ring = 0.005;      // interior margin inside ring targets
    double kappa_terminal = 0.012;  // margin inside the terminal invariance target
    std::vector<double> d_ladder = {1.0, 0.6, 0.3, 0.15, 0.05};
    double nesting_lift = 1e-7;     // warm-start lift above the previous ring
    double growth_stop = 0.01;      // chain saturation: relative volume growth floor
    int chain_cap = 50;
    MaxDetOptions maxdet;
    MaxDetOptions phase1;

    SynthesisOptions() {
        phase1.t_max = 1e8;
        phase1.var_bound = 1e4;
    }
};

// Stabilizing gain and terminal set, equilibrium-relative (center at 0).
struct FeedbackPair {
    Mat gain;            // m x n
    Ellipsoid terminal;  // E_0
    double d_level = 1.0;   // achieved disturbance robustness scale in [0, 1]
    std::vector<double> betas;  // difference parameters used by the certificate
    Mat invariance_target;      // certified image container (shape matrix)
};

struct RingResult {
    Ellipsoid ring{Vec::Zero(1), Mat::Identity(1, 1)};  // E_i (center 0)
    Mat gain;            // K_i, diagnostic
    Mat target_shape;    // certified one-step target (margin included)
    std::vector<double> betas;
    double rho_scalar = 0.0;  // scalar shrink factor of the cover, diagnostic
    int newton_iters = 0;
};

// Algorithm-1 step (2): terminal pair via determinant maximization under
// vertex-contraction, input and state LMIs, with a descending disturbance
// ladder.  Any feasible pair is acceptable; volume is maximized at the
// achieved level.
FeedbackPair synthesize_terminal_pair(const VertexModel& model,
                                      const SynthesisConstraints& constraints,
                                      const SynthesisOptions& opts = {});

// One backward recursion step: grows target into E_i with nesting enforced in
// the program.  d_level scales the disturbance segments (a family keeps the
// level achieved by its terminal pair).
RingResult backward_step(const Ellipsoid& target, const Mat& target_gain,
                         const VertexModel& model, const SynthesisConstraints& constraints,
                         double d_level, const SynthesisOptions& opts = {});

struct OneStepReport {
    double fraction_feasible = 0.0;
    double worst_margin = 0.0;  // min over samples of (1 - best membership in target)
    double rho_scalar = 0.0;
    int samples = 0;
    int failed = 0;
};

// Samples `samples` points uniformly in `outer` and checks, via an input-grid
// search, that each admits an input steering all vertex images into the
// certified target.  Independent of the synthesis path.
OneStepReport verify_one_step(const Ellipsoid& outer, const Mat& target_shape,
                              const VertexModel& model, const BoxSet& input_box,
                              int samples, std::mt19937_64& rng, int grid_n = 21,
                              double tol = 1e-6);

// Grid search over the input box: minimizes the worst-vertex membership in the
// target.  Returns (best input relative to u_eq, worst membership at it).
std::pair<Vec, double> input_grid_search(const Vec& state_rel, const Mat& target_shape,
                                         const VertexModel& model, const BoxSet& input_box,
                                         int grid_n);

}  // namespace setmpc
