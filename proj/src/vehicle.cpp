#include "setmpc/vehicle.hpp"

#include <cmath>

namespace setmpc {

namespace {
constexpr double kGravity = 9.81;
constexpr double kSpeedFloor = 0.1;  // m/s, slip-ratio/angle denominator guard
}  // namespace

void VehicleParams::validate() const {
    const double vals[] = {mass, yaw_inertia, lf, lr, track, wheel_radius,
                           wheel_inertia, c_alpha_f, c_alpha_r, air_drag, v_nominal};
    for (double v : vals) {
        if (!(v > 0)) throw ConfigError("VehicleParams: all parameters must be positive");
    }
}

double VehicleParams::front_wheel_load() const {
    return mass * kGravity * lr / (2.0 * wheelbase());
}

double VehicleParams::rear_wheel_load() const {
    return mass * kGravity * lf / (2.0 * wheelbase());
}

void PacejkaCoeffs::validate() const {
    if (!(peak > 0) || !(shape > 0)) throw ConfigError("PacejkaCoeffs: D and C must be positive");
}

PacejkaCoeffs PacejkaCoeffs::longitudinal(double fz) {
    PacejkaCoeffs c;
    c.peak = fz;  // mu = 1
    return c;
}

PacejkaCoeffs PacejkaCoeffs::lateral_matched(double fz, double c_alpha) {
    PacejkaCoeffs c;
    c.peak = fz;
    c.stiffness = c_alpha / (c.shape * c.peak);  // slope at zero slip = S*C*D = c_alpha
    return c;
}

TireSet TireSet::from_params(const VehicleParams& p) {
    TireSet t;
    t.long_front = PacejkaCoeffs::longitudinal(p.front_wheel_load());
    t.long_rear = PacejkaCoeffs::longitudinal(p.rear_wheel_load());
    t.lat_front = PacejkaCoeffs::lateral_matched(p.front_wheel_load(), p.c_alpha_f);
    t.lat_rear = PacejkaCoeffs::lateral_matched(p.rear_wheel_load(), p.c_alpha_r);
    return t;
}

Eigen::Matrix<double, 10, 1> SixDofState::to_vector() const {
    Eigen::Matrix<double, 10, 1> v;
    v << xd, yd, psi, psid, omega[0], omega[1], omega[2], omega[3], X, Y;
    return v;
}

SixDofState SixDofState::from_vector(const Eigen::Matrix<double, 10, 1>& v) {
    SixDofState s;
    s.xd = v[0];
    s.yd = v[1];
    s.psi = v[2];
    s.psid = v[3];
    s.omega = {v[4], v[5], v[6], v[7]};
    s.X = v[8];
    s.Y = v[9];
    return s;
}

SixDofState SixDofState::cruise(double v, double y, const VehicleParams& p) {
    SixDofState s;
    s.xd = v;
    s.Y = y;
    const double w = v / p.wheel_radius;
    s.omega = {w, w, w, w};
    return s;
}

void GammaBounds::validate() const {
    if (!(g1_min < g1_max) || !(g2_min < g2_max) || !(g3_min < g3_max)) {
        throw ConfigError("GammaBounds: min must be below max");
    }
    if (!(g3_min > 0)) throw ConfigError("GammaBounds: gamma3 bounds must be positive");
}

double magic_formula(double k, const PacejkaCoeffs& c) {
    const double ks = k + c.shift_h;
    const double sk = c.stiffness * ks;
    return c.peak * std::sin(c.shape * std::atan(sk - c.curvature * (sk - std::atan(sk)))) +
           c.shift_v;
}

std::array<double, 4> slip_angles(const SixDofState& s, double steer, const VehicleParams& p) {
    const double dl = s.xd - 0.5 * p.track * s.psid;
    const double dr = s.xd + 0.5 * p.track * s.psid;
    if (std::abs(dl) < kSpeedFloor || std::abs(dr) < kSpeedFloor) {
        throw std::domain_error("slip_angles: degenerate wheel speed");
    }
    const double front = s.yd + p.lf * s.psid;
    const double rear = p.lr * s.psid - s.yd;
    return {steer - std::atan(front / dl), steer - std::atan(front / dr),
            std::atan(rear / dl), std::atan(rear / dr)};
}

std::array<double, 4> wheel_longitudinal_speeds(const SixDofState& s, double steer,
                                                const VehicleParams& p) {
    const double dl = s.xd - 0.5 * p.track * s.psid;
    const double dr = s.xd + 0.5 * p.track * s.psid;
    const double front = s.yd + p.lf * s.psid;
    const double c = std::cos(steer), sn = std::sin(steer);
    return {dl * c + front * sn, dr * c + front * sn, dl, dr};
}

std::array<double, 4> slip_ratios(const SixDofState& s, double steer, const VehicleParams& p) {
    const auto xw = wheel_longitudinal_speeds(s, steer, p);
    std::array<double, 4> out{};
    for (int i = 0; i < 4; ++i) {
        const double rw = p.wheel_radius * s.omega[i];
        if (rw > xw[i]) {  // acceleration branch
            if (std::abs(rw) < kSpeedFloor) {
                throw std::domain_error("slip_ratios: degenerate wheel speed (acceleration)");
            }
            out[i] = (rw - xw[i]) / rw;
        } else if (rw < xw[i]) {  // braking branch
            if (std::abs(xw[i]) < kSpeedFloor) {
                throw std::domain_error("slip_ratios: degenerate wheel speed (braking)");
            }
            out[i] = (rw - xw[i]) / xw[i];
        } else {
            out[i] = 0.0;
        }
    }
    return out;
}

Eigen::Matrix<double, 10, 1> sixdof_derivatives(const SixDofState& s, const PlantInput& u,
                                                const VehicleParams& p, const TireSet& tires) {
    const auto alpha = slip_angles(s, u.steer, p);
    const auto sigma = slip_ratios(s, u.steer, p);

    const double fx11 = magic_formula(sigma[0], tires.long_front);
    const double fx12 = magic_formula(sigma[1], tires.long_front);
    const double fx21 = magic_formula(sigma[2], tires.long_rear);
    const double fx22 = magic_formula(sigma[3], tires.long_rear);
    const double fy11 = magic_formula(alpha[0], tires.lat_front);
    const double fy12 = magic_formula(alpha[1], tires.lat_front);
    const double fy21 = magic_formula(alpha[2], tires.lat_rear);
    const double fy22 = magic_formula(alpha[3], tires.lat_rear);

    const double c = std::cos(u.steer), sn = std::sin(u.steer);
    const double f_air = p.air_drag * s.xd * s.xd;

    const double ax = (fx21 + fx22 + (fx11 + fx12) * c - (fy11 + fy12) * sn) / p.mass +
                      s.psid * s.yd - f_air / p.mass;
    const double ay = (fy21 + fy22 + (fx11 + fx12) * sn + (fy11 + fy12) * c) / p.mass -
                      s.psid * s.xd;
    const double half_track = 0.5 * p.track;
    const double mz = ((fx11 + fx12) * sn + (fy11 + fy12) * c) * p.lf +
                      ((fx12 - fx11) * c + (fy11 - fy12) * sn) * half_track -
                      (fy21 + fy22) * p.lr + (fx22 - fx21) * half_track;

    Eigen::Matrix<double, 10, 1> d;
    d[0] = ax;
    d[1] = ay;
    d[2] = s.psid;
    d[3] = mz / p.yaw_inertia;
    d[4] = (u.torque_fl - fx11 * p.wheel_radius) / p.wheel_inertia;
    d[5] = (u.torque_fr - fx12 * p.wheel_radius) / p.wheel_inertia;
    d[6] = (-fx21 * p.wheel_radius) / p.wheel_inertia;
    d[7] = (-fx22 * p.wheel_radius) / p.wheel_inertia;
    d[8] = s.xd * std::cos(s.psi) - s.yd * std::sin(s.psi);
    d[9] = s.xd * std::sin(s.psi) + s.yd * std::cos(s.psi);
    return d;
}

SixDofState integrate_plant(const SixDofState& s, const PlantInput& u, double duration,
                            const VehicleParams& p, const TireSet& tires, double inner_dt) {
    if (!(duration >= 0) || !(inner_dt > 0)) {
        throw std::invalid_argument("integrate_plant: bad time step");
    }
    auto f = [&](const Eigen::Matrix<double, 10, 1>& v) {
        return sixdof_derivatives(SixDofState::from_vector(v), u, p, tires);
    };
    Eigen::Matrix<double, 10, 1> x = s.to_vector();
    const int steps = static_cast<int>(std::round(duration / inner_dt));
    const double dt = steps > 0 ? duration / steps : 0.0;
    for (int i = 0; i < steps; ++i) {
        x = rk4_step<10>(f, x, dt);
        if (x.cwiseAbs().maxCoeff() > 1e6) {
            throw std::runtime_error("integrate_plant: instability guard tripped");
        }
    }
    return SixDofState::from_vector(x);
}

Vec6 control_model_derivatives(const ControlState& x, const Vec2& u, const Vec2& d,
                               const VehicleParams& p) {
    const double v = p.v_nominal + x[0];
    if (v <= 0.5) throw std::domain_error("control_model_derivatives: degenerate speed");
    const double caf2 = 2.0 * p.c_alpha_f, car2 = 2.0 * p.c_alpha_r;
    const double m = p.mass, iz = p.yaw_inertia, lf = p.lf, lr = p.lr;

    Vec6 dx;
    dx[0] = x[1] * x[3] + u[1];
    dx[1] = -(caf2 + car2) / (m * v) * x[1] + (caf2 / m) * u[0] +
            (-v - (caf2 * lf - car2 * lr) / (m * v)) * x[3];
    dx[2] = x[3];
    dx[3] = -(lf * caf2 - lr * car2) / (iz * v) * x[1] + (lf * caf2 / iz) * u[0] -
            (lf * lf * caf2 + lr * lr * car2) / (iz * v) * x[3];
    dx[4] = x[1] + v * x[2] - d[0];
    dx[5] = x[0] - d[1];
    return dx;
}

GammaValue gamma_of_state(const ControlState& x, const VehicleParams& p, const GammaBounds& gb) {
    const double v = p.v_nominal + x[0];
    if (v <= 0) throw std::domain_error("gamma_of_state: nonpositive speed");
    GammaValue gv;
    gv.g1 = x[2];
    gv.g2 = x[3];
    gv.g3 = 1.0 / v;
    auto norm = [&](double g, double lo, double hi, double* rho) {
        double r = (g - lo) / (hi - lo);
        bool inside = r >= 0.0 && r <= 1.0;
        *rho = std::clamp(r, 0.0, 1.0);
        return inside;
    };
    bool ok = true;
    ok &= norm(gv.g1, gb.g1_min, gb.g1_max, &gv.rho1);
    ok &= norm(gv.g2, gb.g2_min, gb.g2_max, &gv.rho2);
    ok &= norm(gv.g3, gb.g3_min, gb.g3_max, &gv.rho3);
    gv.in_envelope = ok;
    return gv;
}

Mat lpv_phi_continuous(double g1, double g2, double g3, const VehicleParams& p) {
    const double caf2 = 2.0 * p.c_alpha_f, car2 = 2.0 * p.c_alpha_r;
    const double m = p.mass, iz = p.yaw_inertia, lf = p.lf, lr = p.lr;
    Mat a = Mat::Zero(6, 6);
    a(0, 1) = g2;
    a(1, 0) = -g2;
    a(1, 1) = -g3 * (caf2 + car2) / m;
    a(1, 3) = -(p.v_nominal + (caf2 * lf - car2 * lr) / m * g3);
    a(2, 3) = 1.0;
    a(3, 1) = -(lf * caf2 - lr * car2) / iz * g3;
    a(3, 3) = -(lf * lf * caf2 + lr * lr * car2) / iz * g3;
    a(4, 0) = g1;
    a(4, 1) = 1.0;
    a(4, 2) = p.v_nominal;
    a(5, 0) = 1.0;
    return a;
}

Mat lpv_g_continuous(const VehicleParams& p) {
    Mat b = Mat::Zero(6, 2);
    b(0, 1) = 1.0;
    b(1, 0) = 2.0 * p.c_alpha_f / p.mass;
    b(3, 0) = 2.0 * p.lf * p.c_alpha_f / p.yaw_inertia;
    return b;
}

Mat lpv_gd_continuous() {
    Mat bd = Mat::Zero(6, 2);
    bd(4, 0) = -1.0;
    bd(5, 1) = -1.0;
    return bd;
}

VertexModel build_vertex_model(const VehicleParams& p, const GammaBounds& gb, double ts) {
    gb.validate();
    VertexModel vm;
    vm.ts = ts;
    vm.phi.reserve(8);
    // binary corner order (rho1 rho2 rho3) = 000 .. 111, bit set selects the max
    for (int j = 0; j < 8; ++j) {
        const double g1 = (j & 4) ? gb.g1_max : gb.g1_min;
        const double g2 = (j & 2) ? gb.g2_max : gb.g2_min;
        const double g3 = (j & 1) ? gb.g3_max : gb.g3_min;
        vm.phi.push_back(Mat::Identity(6, 6) + ts * lpv_phi_continuous(g1, g2, g3, p));
    }
    vm.g = ts * lpv_g_continuous(p);
    vm.gd = ts * lpv_gd_continuous();
    return vm;
}

std::array<double, 8> simplex_weights(double rho1, double rho2, double rho3) {
    std::array<double, 8> w{};
    for (int j = 0; j < 8; ++j) {
        const double w1 = (j & 4) ? rho1 : 1.0 - rho1;
        const double w2 = (j & 2) ? rho2 : 1.0 - rho2;
        const double w3 = (j & 1) ? rho3 : 1.0 - rho3;
        w[j] = w1 * w2 * w3;
    }
    return w;
}

}  // namespace setmpc
