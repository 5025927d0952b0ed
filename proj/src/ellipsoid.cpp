#include "setmpc/ellipsoid.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

namespace setmpc {

namespace {

void check_symmetric(const Mat& p) {
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw std::invalid_argument("Ellipsoid: shape matrix is not symmetric");
    }
}

}  // namespace

Ellipsoid::Ellipsoid(Vec center, Mat shape) : center_(std::move(center)), shape_(std::move(shape)) {
    if (shape_.rows() != shape_.cols() || shape_.rows() != center_.size()) {
        throw std::invalid_argument("Ellipsoid: dimension mismatch");
    }
    check_symmetric(shape_);
    shape_ = 0.5 * (shape_ + shape_.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(shape_);
    const double scale = std::max(1.0, shape_.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
        throw std::invalid_argument("Ellipsoid: shape matrix is not positive semidefinite");
    }
}

const Mat& Ellipsoid::chol() const {
    if (!chol_) {
        Eigen::LLT<Mat> llt(shape_);
        if (llt.info() != Eigen::Success) {
            throw SingularShapeError("Ellipsoid: shape not positive definite (LLT failed)");
        }
        Mat l = llt.matrixL();
        // conditioning floor: diag entries must not underflow relative to the scale
        const double dmax = l.diagonal().maxCoeff();
        if (l.diagonal().minCoeff() <= 1e-154 || dmax / l.diagonal().minCoeff() > 1e14) {
            throw SingularShapeError("Ellipsoid: shape conditioning beyond threshold");
        }
        chol_ = std::move(l);
    }
    return *chol_;
}

double Ellipsoid::membership_value(const Vec& x) const {
    if (x.size() != center_.size()) {
        throw std::invalid_argument("membership_value: dimension mismatch");
    }
    const Mat& l = chol();
    Vec w = l.triangularView<Eigen::Lower>().solve(x - center_);
    return w.squaredNorm();
}

Vec Ellipsoid::sample_inside(std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec z(dim());
    for (int i = 0; i < dim(); ++i) z[i] = gauss(rng);
    z.normalize();
    const double r = std::pow(unif(rng), 1.0 / dim());
    return center_ + chol() * (r * z);
}

Vec Ellipsoid::sample_boundary(std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec z(dim());
    for (int i = 0; i < dim(); ++i) z[i] = gauss(rng);
    z.normalize();
    return center_ + chol() * z;
}

double Ellipsoid::logdet_shape() const {
    return 2.0 * chol().diagonal().array().log().sum();
}

BoxSet::BoxSet(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size()) throw std::invalid_argument("BoxSet: dimension mismatch");
    if ((upper - lower).minCoeff() < 0) throw std::invalid_argument("BoxSet: lower > upper");
}

bool BoxSet::contains(const Vec& x, double tol) const {
    return (x - lower).minCoeff() >= -tol && (upper - x).minCoeff() >= -tol;
}

BoxSet BoxSet::symmetric(const Vec& half_widths) {
    return BoxSet(-half_widths, half_widths);
}

Halfspace::Halfspace(Vec a, double b) : normal(std::move(a)), offset(b) {
    if (normal.norm() <= 0.0) throw std::invalid_argument("Halfspace: zero normal");
}

bool concentric_contains(const Ellipsoid& inner, const Ellipsoid& outer, double tol) {
    const double scale = std::max(1.0, outer.chol().diagonal().maxCoeff());
    if ((inner.center() - outer.center()).norm() > 1e-9 * scale) {
        throw CenterMismatchError("concentric_contains: centers differ");
    }
    const Mat& l = outer.chol();
    Mat w = l.triangularView<Eigen::Lower>().solve(inner.shape());
    Mat m = l.triangularView<Eigen::Lower>().solve(w.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().maxCoeff() <= 1.0 + tol;
}

bool affine_image_contained(const Mat& a, const Ellipsoid& src, const Ellipsoid& dst, double tol) {
    if (a.cols() != src.dim() || a.rows() != dst.dim()) {
        throw std::invalid_argument("affine_image_contained: dimension mismatch");
    }
    Mat image = a * src.shape() * a.transpose();
    const Mat& l = dst.chol();
    Mat w = l.triangularView<Eigen::Lower>().solve(image);
    Mat m = l.triangularView<Eigen::Lower>().solve(w.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().maxCoeff() <= 1.0 + tol;
}

double shrink_factor(const Ellipsoid& e, const Ellipsoid& d_cover) {
    const Mat& l = e.chol();
    Mat w = l.triangularView<Eigen::Lower>().solve(d_cover.shape());
    Mat m = l.triangularView<Eigen::Lower>().solve(w.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

Ellipsoid shrink_by_disturbance(const Ellipsoid& e, const Ellipsoid& d_cover) {
    const double scale = std::max(1.0, e.chol().diagonal().maxCoeff());
    if ((e.center() - d_cover.center()).norm() > 1e-9 * scale) {
        throw CenterMismatchError("shrink_by_disturbance: centers differ");
    }
    const double rho = shrink_factor(e, d_cover);
    if (rho >= 1.0) {
        throw InfeasibleShrinkError("shrink_by_disturbance: disturbance reach exceeds target (rho=" +
                                    std::to_string(rho) + ")");
    }
    return Ellipsoid(e.center(), (1.0 - rho) * (1.0 - rho) * e.shape());
}

Ellipsoid cover_box_image(const Mat& g_d, const BoxSet& d) {
    if (g_d.cols() != d.dim()) throw std::invalid_argument("cover_box_image: dimension mismatch");
    // symmetrize to the larger half-width (conservative for asymmetric boxes)
    Vec h = d.lower.cwiseAbs().cwiseMax(d.upper.cwiseAbs());
    const int nd = d.dim();
    Mat core = (static_cast<double>(nd) * h.array().square()).matrix().asDiagonal();
    Mat shape = g_d * core * g_d.transpose();
    shape += 1e-12 * Mat::Identity(g_d.rows(), g_d.rows());
    return Ellipsoid(Vec::Zero(g_d.rows()), 0.5 * (shape + shape.transpose()));
}

void difference_inner_coeffs(const std::vector<Vec>& segments, const std::vector<double>& betas,
                             int dim, double* cq, Mat* m0) {
    if (segments.size() != betas.size()) {
        throw std::invalid_argument("difference_inner_coeffs: segments/betas size mismatch");
    }
    double prod = 1.0;
    for (double b : betas) {
        if (b <= 0) throw std::invalid_argument("difference_inner_coeffs: beta must be positive");
        prod *= (1.0 + b);
    }
    *cq = 1.0 / prod;
    *m0 = Mat::Zero(dim, dim);
    for (size_t k = 0; k < segments.size(); ++k) {
        double tail = 1.0;
        for (size_t j = k; j < betas.size(); ++j) tail *= (1.0 + betas[j]);
        *m0 += (1.0 + 1.0 / betas[k]) / tail * (segments[k] * segments[k].transpose());
    }
}

Mat difference_inner_shape(const Mat& p, const std::vector<Vec>& segments,
                           const std::vector<double>& betas) {
    double cq = 0.0;
    Mat m0;
    difference_inner_coeffs(segments, betas, static_cast<int>(p.rows()), &cq, &m0);
    Mat s = cq * p - m0;
    s = 0.5 * (s + s.transpose());
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success) {
        throw InfeasibleShrinkError("difference_inner_shape: result not positive definite");
    }
    return s;
}

std::vector<double> optimize_difference_betas(const Mat& p, const std::vector<Vec>& segments) {
    const int n = static_cast<int>(p.rows());
    const size_t k = segments.size();
    auto logdet = [&](const std::vector<double>& betas) -> double {
        double cq;
        Mat m0;
        difference_inner_coeffs(segments, betas, n, &cq, &m0);
        Mat s = cq * p - m0;
        Eigen::LLT<Mat> llt(0.5 * (s + s.transpose()));
        if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
        return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    };
    // initial guess: per-segment relative reach sqrt(s^T P^{-1} s), floored
    Eigen::LLT<Mat> llt(p);
    std::vector<double> betas(k, 0.05);
    if (llt.info() == Eigen::Success) {
        for (size_t i = 0; i < k; ++i) {
            Vec w = Mat(llt.matrixL()).triangularView<Eigen::Lower>().solve(segments[i]);
            betas[i] = std::clamp(w.norm(), 1e-6, 0.5);
        }
    }
    // coordinate descent on a multiplicative grid
    const double factors[] = {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0};
    double best = logdet(betas);
    for (int sweep = 0; sweep < 4; ++sweep) {
        bool improved = false;
        for (size_t i = 0; i < k; ++i) {
            double b0 = betas[i];
            for (double f : factors) {
                betas[i] = std::clamp(b0 * f, 1e-8, 4.0);
                double v = logdet(betas);
                if (v > best + 1e-12) {
                    best = v;
                    b0 = betas[i];
                    improved = true;
                } else {
                    betas[i] = b0;
                }
            }
        }
        if (!improved) break;
    }
    if (!std::isfinite(best)) {
        throw InfeasibleShrinkError("optimize_difference_betas: no positive-definite difference");
    }
    return betas;
}

std::string ellipsoid_to_json(const Ellipsoid& e) {
    nlohmann::json j;
    j["center"] = std::vector<double>(e.center().data(), e.center().data() + e.dim());
    std::vector<std::vector<double>> rows(e.dim(), std::vector<double>(e.dim()));
    for (int i = 0; i < e.dim(); ++i) {
        for (int k = 0; k < e.dim(); ++k) rows[i][k] = e.shape()(i, k);
    }
    j["shape"] = rows;
    return j.dump();
}

Ellipsoid ellipsoid_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::vector<double> c = j.at("center").get<std::vector<double>>();
    auto rows = j.at("shape").get<std::vector<std::vector<double>>>();
    const int n = static_cast<int>(c.size());
    Vec center = Eigen::Map<Vec>(c.data(), n);
    Mat shape(n, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) shape(i, k) = rows.at(i).at(k);
    }
    return Ellipsoid(center, shape);
}

}  // namespace setmpc
