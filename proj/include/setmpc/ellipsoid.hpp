#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "setmpc/errors.hpp"

namespace setmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Ellipsoid { x : (x-c)^T P^{-1} (x-c) <= 1 } with symmetric PSD shape P.
// Operations that need P^{-1} throw SingularShapeError when the factorization
// falls below the conditioning floor.
class Ellipsoid {
public:
    Ellipsoid(Vec center, Mat shape);

    const Vec& center() const { return center_; }
    const Mat& shape() const { return shape_; }
    int dim() const { return static_cast<int>(center_.size()); }

    // Lower Cholesky factor of the shape; fails for (near-)singular shapes.
    const Mat& chol() const;

    // Quadratic form (x-c)^T P^{-1} (x-c).  Membership holds iff <= 1.
    double membership_value(const Vec& x) const;

    // Uniform sample inside (unit-ball transform), boundary sample on the surface.
    Vec sample_inside(std::mt19937_64& rng) const;
    Vec sample_boundary(std::mt19937_64& rng) const;

    double logdet_shape() const;

private:
    Vec center_;
    Mat shape_;
    mutable std::optional<Mat> chol_;
};

// Axis-aligned box, lower <= upper componentwise.
struct BoxSet {
    Vec lower;
    Vec upper;

    BoxSet(Vec lo, Vec hi);
    int dim() const { return static_cast<int>(lower.size()); }
    bool contains(const Vec& x, double tol = 0.0) const;
    Vec half_widths() const { return 0.5 * (upper - lower); }
    Vec center() const { return 0.5 * (upper + lower); }
    static BoxSet symmetric(const Vec& half_widths);
};

// Halfspace { x : a^T x <= b }.
struct Halfspace {
    Vec normal;
    double offset;

    Halfspace(Vec a, double b);
    double margin(const Vec& x) const { return offset - normal.dot(x); }
    // Shift into coordinates relative to x0: { y : a^T y <= b - a^T x0 }.
    Halfspace shifted(const Vec& x0) const { return Halfspace(normal, offset - normal.dot(x0)); }
};

// true iff inner <= outer as sets; both must share a center (within 1e-9 of
// the outer's scale), otherwise CenterMismatchError.
bool concentric_contains(const Ellipsoid& inner, const Ellipsoid& outer, double tol = 1e-8);

// true iff A * E(src) (center-relative) is contained in E(dst): A P_src A^T <= P_dst.
bool affine_image_contained(const Mat& A, const Ellipsoid& src, const Ellipsoid& dst,
                            double tol = 1e-8);

// Scalar-shrink inner approximation of E \ominus D for concentric ellipsoids:
// result shape (1-rho)^2 P with rho^2 = lambda_max(L^{-1} P_D L^{-T}).
// Throws InfeasibleShrinkError when rho >= 1.
Ellipsoid shrink_by_disturbance(const Ellipsoid& e, const Ellipsoid& d_cover);

// Shrink factor rho of d_cover relative to e (diagnostic; also used by shrink).
double shrink_factor(const Ellipsoid& e, const Ellipsoid& d_cover);

// Zero-centered ellipsoidal cover of { G_d d : d in D }, D symmetrized about 0.
// Shape = G_d diag(n_d h_i^2) G_d^T + eps I  (eps = 1e-12).
Ellipsoid cover_box_image(const Mat& g_d, const BoxSet& d);

// Inner approximation of E(P) \ominus (seg_1 + ... + seg_k) where seg_i is the
// segment { t * s_i : |t| <= 1 }.  Nested application of the Minkowski-sum bound
// E(A) (+) E(B) <= E((1+b)A + (1+1/b)B) with per-segment parameter beta_i:
//   S = P / prod(1+b_i)  -  sum_i (1+1/b_i) s_i s_i^T / prod_{j>=i} (1+b_j).
// Returns the shape matrix S (same center).  Throws InfeasibleShrinkError if S
// is not positive definite.
Mat difference_inner_shape(const Mat& p, const std::vector<Vec>& segments,
                           const std::vector<double>& betas);

// Coefficients (cq, m0) with S = cq * P - m0 for the nested segment difference.
// Exposed so synthesis programs can keep the target affine in P.
void difference_inner_coeffs(const std::vector<Vec>& segments, const std::vector<double>& betas,
                             int dim, double* cq, Mat* m0);

// Beta vector maximizing logdet of the difference shape (coordinate descent on
// a log grid + golden refinement; deterministic).
std::vector<double> optimize_difference_betas(const Mat& p, const std::vector<Vec>& segments);

// JSON round-trip (lossless for finite doubles).
std::string ellipsoid_to_json(const Ellipsoid& e);
Ellipsoid ellipsoid_from_json(const std::string& text);

}  // namespace setmpc
