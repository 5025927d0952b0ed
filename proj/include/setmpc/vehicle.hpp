#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "setmpc/errors.hpp"

namespace setmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec2 = Eigen::Matrix<double, 2, 1>;

// Control-model state x = [dvx_ego, ydot, psi, psidot, y_rel, x_rel].
using ControlState = Vec6;

struct VehicleParams {
    double mass = 1575.0;        // kg
    double yaw_inertia = 2875.0; // kg m^2
    double lf = 1.2;             // m, cg to front axle
    double lr = 1.6;             // m, cg to rear axle
    double track = 1.6;          // m
    double wheel_radius = 0.3;   // m
    double wheel_inertia = 1.2;  // kg m^2
    double c_alpha_f = 19000.0;  // N/rad per wheel
    double c_alpha_r = 19000.0;  // N/rad per wheel
    double air_drag = 0.38;      // N s^2/m^2
    double v_nominal = 20.0;     // m/s

    void validate() const;
    double wheelbase() const { return lf + lr; }
    double front_wheel_load() const;  // static, per wheel (N)
    double rear_wheel_load() const;
};

struct PacejkaCoeffs {
    double stiffness = 10.0;  // S
    double shape = 1.9;       // C
    double peak = 1.0;        // D (N); set from mu * F_z by the factories
    double curvature = 0.97;  // E
    double shift_h = 0.0;     // S_H
    double shift_v = 0.0;     // S_V

    void validate() const;
    // Longitudinal set for a wheel carrying load fz (mu = 1).
    static PacejkaCoeffs longitudinal(double fz);
    // Lateral set whose small-slip slope S*C*D matches the cornering stiffness.
    static PacejkaCoeffs lateral_matched(double fz, double c_alpha);
};

// Per-axle tire coefficient bundle for the 6-DOF plant.
struct TireSet {
    PacejkaCoeffs long_front, long_rear, lat_front, lat_rear;
    static TireSet from_params(const VehicleParams& p);
};

struct SixDofState {
    double xd = 0;   // body longitudinal velocity (m/s)
    double yd = 0;   // body lateral velocity (m/s)
    double psi = 0;  // yaw (rad)
    double psid = 0; // yaw rate (rad/s)
    std::array<double, 4> omega{};  // wheel speeds 11,12,21,22 (rad/s)
    double X = 0;    // world position (m)
    double Y = 0;

    Eigen::Matrix<double, 10, 1> to_vector() const;
    static SixDofState from_vector(const Eigen::Matrix<double, 10, 1>& v);
    // Free-rolling cruise at speed v, lateral position y.
    static SixDofState cruise(double v, double y, const VehicleParams& p);
};

struct PlantInput {
    double steer = 0;      // rad at the front wheels
    double torque_fl = 0;  // N m
    double torque_fr = 0;
};

struct GammaBounds {
    double g1_min = -M_PI / 2, g1_max = M_PI / 2;
    double g2_min = -2.0, g2_max = 2.0;
    double g3_min = 0.03, g3_max = 0.1;

    void validate() const;
};

// 8-vertex discrete-time polytopic control-design model.
struct VertexModel {
    std::vector<Mat> phi;  // 8 matrices, binary corner order (rho1 rho2 rho3)
    Mat g;                 // n x m
    Mat gd;                // n x n_d
    double ts = 0.1;

    int n() const { return static_cast<int>(g.rows()); }
    int m() const { return static_cast<int>(g.cols()); }
};

// Sinusoidal Magic Formula force; slip k is shifted by S_H internally.
double magic_formula(double k, const PacejkaCoeffs& c);

// Slip angles (11, 12, 21, 22).  Throws when a denominator is degenerate.
std::array<double, 4> slip_angles(const SixDofState& s, double steer, const VehicleParams& p);

// Per-wheel longitudinal speeds in the wheel frame (11, 12, 21, 22).
std::array<double, 4> wheel_longitudinal_speeds(const SixDofState& s, double steer,
                                                const VehicleParams& p);

// Branch-correct slip ratios (acceleration / braking).
std::array<double, 4> slip_ratios(const SixDofState& s, double steer, const VehicleParams& p);

// Full 6-DOF derivative: body accelerations, wheel spin, world kinematics.
Eigen::Matrix<double, 10, 1> sixdof_derivatives(const SixDofState& s, const PlantInput& u,
                                                const VehicleParams& p, const TireSet& tires);

// Classical fixed-step RK4 over an arbitrary vector field.
template <int N>
Eigen::Matrix<double, N, 1> rk4_step(
    const std::function<Eigen::Matrix<double, N, 1>(const Eigen::Matrix<double, N, 1>&)>& f,
    const Eigen::Matrix<double, N, 1>& x, double dt) {
    using V = Eigen::Matrix<double, N, 1>;
    V k1 = f(x);
    V k2 = f(x + 0.5 * dt * k1);
    V k3 = f(x + 0.5 * dt * k2);
    V k4 = f(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates the plant over `duration` with fixed inner steps (default 1 ms).
// Throws std::runtime_error when any state exceeds the instability guard.
SixDofState integrate_plant(const SixDofState& s, const PlantInput& u, double duration,
                            const VehicleParams& p, const TireSet& tires,
                            double inner_dt = 1e-3);

// Nonlinear control-model derivative (6 equations).
Vec6 control_model_derivatives(const ControlState& x, const Vec2& u, const Vec2& d,
                               const VehicleParams& p);

struct GammaValue {
    double g1 = 0, g2 = 0, g3 = 0;
    double rho1 = 0, rho2 = 0, rho3 = 0;  // normalized, clipped to [0, 1]
    bool in_envelope = true;
};

GammaValue gamma_of_state(const ControlState& x, const VehicleParams& p, const GammaBounds& gb);

// Continuous-time Phi(gamma) of the exact quasi-LPV embedding.
Mat lpv_phi_continuous(double g1, double g2, double g3, const VehicleParams& p);
Mat lpv_g_continuous(const VehicleParams& p);
Mat lpv_gd_continuous();

// Forward-Euler discretized 8-vertex model over the gamma box.
VertexModel build_vertex_model(const VehicleParams& p, const GammaBounds& gb, double ts);

// Tensor-product simplex weights w_j(rho), nonnegative, summing to 1.
std::array<double, 8> simplex_weights(double rho1, double rho2, double rho3);

}  // namespace setmpc
