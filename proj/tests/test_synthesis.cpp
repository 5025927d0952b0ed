#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "setmpc/synthesis.hpp"

using namespace setmpc;

namespace {

// Discrete double integrator, |u| <= 1, |x_i| <= 1, single vertex.
VertexModel double_integrator(double h = 0.1) {
    VertexModel vm;
    Mat a(2, 2);
    a << 1.0, h, 0.0, 1.0;
    Mat b(2, 1);
    b << 0.5 * h * h, h;
    vm.phi = {a};
    vm.g = b;
    vm.gd = Mat::Zero(2, 1);
    vm.ts = h;
    return vm;
}

SynthesisConstraints di_constraints() {
    SynthesisConstraints c{
        {},
        BoxSet(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)),
        {},
        std::nullopt,
        Vec::Constant(2, 1.0),
        Vec::Constant(1, 1.0)};
    for (int i = 0; i < 2; ++i) {
        for (double sgn : {1.0, -1.0}) {
            Vec a = Vec::Zero(2);
            a[i] = sgn;
            c.state_halfspaces.emplace_back(a, 1.0);
        }
    }
    Vec seg = Vec::Zero(2);
    seg[0] = 1e-9;  // negligible disturbance
    c.disturbance_segments = {seg};
    c.disturbance_cover = Ellipsoid(Vec::Zero(2), 1e-12 * Mat::Identity(2, 2));
    return c;
}

VehicleParams vehicle_params() { return VehicleParams{}; }

// Envelope used by the vehicle synthesis tests (maneuver preset).
struct VehicleSetup {
    VertexModel vm;
    SynthesisConstraints sc;
};

VehicleSetup vehicle_setup(double x5_slack, double g1 = 0.05, double g2 = 0.12,
                           double x1row = 6.0, double x2row = 0.8) {
    auto p = vehicle_params();
    GammaBounds gb;
    gb.g1_min = -g1;
    gb.g1_max = g1;
    gb.g2_min = -g2;
    gb.g2_max = g2;
    gb.g3_min = 1.0 / (p.v_nominal + x1row);
    gb.g3_max = 1.0 / (p.v_nominal - x1row);
    const double ts = 0.1;
    VertexModel vm = build_vertex_model(p, gb, ts);

    Vec ulo(2), uhi(2);
    ulo << -0.5, -2.0;
    uhi << 0.5, 2.0;
    SynthesisConstraints sc{{}, BoxSet(ulo, uhi), {}, std::nullopt, Vec(6), Vec(2)};
    const double rows[][2] = {{0, x1row}, {1, x2row}, {2, g1}, {3, g2}, {4, x5_slack}};
    for (auto& r : rows) {
        for (double sgn : {1.0, -1.0}) {
            Vec a = Vec::Zero(6);
            a[static_cast<int>(r[0])] = sgn;
            sc.state_halfspaces.emplace_back(a, r[1]);
        }
    }
    // disturbance segments through the discrete map: lateral mismatch 0.1, full d2
    Vec s1 = Vec::Zero(6), s2 = Vec::Zero(6);
    s1[4] = -ts * 0.1;
    s2[5] = -ts * 1.5;
    sc.disturbance_segments = {s1, s2};
    Vec h(2);
    h << 0.1, 1.5;
    sc.disturbance_cover = cover_box_image(vm.gd, BoxSet::symmetric(h));
    sc.state_scale = Vec(6);
    sc.state_scale << x1row, x2row, g1, g2, x5_slack, 10.0;
    sc.input_scale = Vec(2);
    sc.input_scale << 0.5, 2.0;
    return {vm, sc};
}

}  // namespace

TEST_CASE("double integrator terminal pair is invariant in closed loop") {
    auto vm = double_integrator();
    auto sc = di_constraints();
    auto fp = synthesize_terminal_pair(vm, sc);

    // closed-loop simulation stays inside E_0 from 1000 sampled starts
    std::mt19937_64 rng(3);
    Mat acl = vm.phi[0] + vm.g * fp.gain;
    for (int s = 0; s < 1000; ++s) {
        Vec x = fp.terminal.sample_inside(rng);
        for (int t = 0; t < 50; ++t) {
            Vec u = fp.gain * x;
            CHECK(std::abs(u[0]) <= 1.0 + 1e-9);
            x = acl * x;
            CHECK(fp.terminal.membership_value(x) <= 1.0 + 1e-9);
        }
    }
    // state rows hold
    for (const auto& h : sc.state_halfspaces) {
        CHECK(h.normal.dot(fp.terminal.shape() * h.normal) <= 1.0 + 1e-8);
    }
}

TEST_CASE("unstable vertex with no input authority is infeasible") {
    VertexModel vm = double_integrator();
    vm.g = Mat::Zero(2, 1);
    Mat a(2, 2);
    a << 1.2, 0.0, 0.0, 0.9;
    vm.phi = {a};
    auto sc = di_constraints();
    CHECK_THROWS_AS(synthesize_terminal_pair(vm, sc), InfeasibleSynthesisError);
}

TEST_CASE("backward step grows the set and respects nesting and rows") {
    auto vm = double_integrator();
    auto sc = di_constraints();
    auto fp = synthesize_terminal_pair(vm, sc);

    auto r1 = backward_step(fp.terminal, fp.gain, vm, sc, fp.d_level);
    CHECK(concentric_contains(fp.terminal, r1.ring, 1e-8));
    CHECK(r1.ring.logdet_shape() > fp.terminal.logdet_shape());
    for (const auto& h : sc.state_halfspaces) {
        CHECK(h.normal.dot(r1.ring.shape() * h.normal) <= 1.0 + 1e-8);
    }
}

TEST_CASE("tangent state row pins growth in the constrained direction") {
    auto vm = double_integrator();
    auto sc = di_constraints();
    auto fp = synthesize_terminal_pair(vm, sc);

    // add a halfspace tangent to the terminal set along x0
    const double b = std::sqrt(fp.terminal.shape()(0, 0));
    Vec a = Vec::Zero(2);
    a[0] = 1.0;
    sc.state_halfspaces.emplace_back(a, b);

    auto r1 = backward_step(fp.terminal, fp.gain, vm, sc, fp.d_level);
    CHECK(std::abs(r1.ring.shape()(0, 0) - b * b) < 1e-6);
}

TEST_CASE("chain rings are contained in the exact one-step controllable set") {
    // acceptance-style oracle on the double integrator: 200x200 state grid,
    // 81-point input grid
    auto vm = double_integrator();
    auto sc = di_constraints();
    auto fp = synthesize_terminal_pair(vm, sc);
    auto r1 = backward_step(fp.terminal, fp.gain, vm, sc, fp.d_level);

    auto one_step_feasible = [&](const Vec& x) {
        for (int iu = 0; iu < 81; ++iu) {
            const double u = -1.0 + 2.0 * iu / 80.0;
            Vec img = vm.phi[0] * x + vm.g * Vec::Constant(1, u);
            Eigen::LLT<Mat> llt(r1.target_shape);
            Vec w = Mat(llt.matrixL()).triangularView<Eigen::Lower>().solve(img);
            if (w.squaredNorm() <= 1.0 + 1e-6) return true;
        }
        return false;
    };

    std::mt19937_64 rng(5);
    int feasible = 0;
    for (int s = 0; s < 1000; ++s) {
        Vec x = r1.ring.sample_inside(rng);
        if (one_step_feasible(x)) ++feasible;
    }
    CHECK(feasible == 1000);

    // the 200x200 grid view: every grid cell inside E_1 is one-step feasible
    int cells = 0;
    for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 200; ++j) {
            Vec x(2);
            x << -1.0 + 2.0 * i / 199.0, -1.0 + 2.0 * j / 199.0;
            if (r1.ring.membership_value(x) <= 1.0) {
                ++cells;
                CHECK(one_step_feasible(x));
            }
        }
    }
    CHECK(cells > 0);
}

TEST_CASE("verify_one_step reports the expected outcomes") {
    auto vm = double_integrator();
    auto sc = di_constraints();
    auto fp = synthesize_terminal_pair(vm, sc);
    auto r1 = backward_step(fp.terminal, fp.gain, vm, sc, fp.d_level);

    std::mt19937_64 rng(7);
    auto rep = verify_one_step(r1.ring, r1.target_shape, vm, sc.input_box, 300, rng);
    CHECK(rep.fraction_feasible == doctest::Approx(1.0));

    // inflating the outer set must break feasibility (negative control)
    Ellipsoid inflated(r1.ring.center(), 4.0 * r1.ring.shape());
    auto bad = verify_one_step(inflated, r1.target_shape, vm, sc.input_box, 300, rng);
    CHECK(bad.fraction_feasible < 1.0);
}

TEST_CASE("vehicle terminal pair at a mid-road equilibrium") {
    auto setup = vehicle_setup(3.0, 0.12, 0.2, 8.0, 1.2);
    auto fp = synthesize_terminal_pair(setup.vm, setup.sc);
    CHECK(fp.d_level >= 0.3);
    // invariance certificate replay
    Ellipsoid target(Vec::Zero(6), fp.invariance_target);
    for (const auto& phi : setup.vm.phi) {
        Mat acl = phi + setup.vm.g * fp.gain;
        CHECK(affine_image_contained(acl, fp.terminal, target, 1e-8));
    }
}

TEST_CASE("vehicle terminal pair at a lane-center equilibrium fits the lateral slack") {
    auto setup = vehicle_setup(1.0, 0.02, 0.1, 5.0, 0.8);
    auto fp = synthesize_terminal_pair(setup.vm, setup.sc);
    CHECK(std::sqrt(fp.terminal.shape()(4, 4)) <= 1.0 + 1e-8);

    // sampled input admissibility on the terminal set
    std::mt19937_64 rng(9);
    for (int s = 0; s < 1000; ++s) {
        Vec x = fp.terminal.sample_inside(rng);
        Vec u = fp.gain * x;
        CHECK(u[0] <= 0.5 + 1e-9);
        CHECK(u[0] >= -0.5 - 1e-9);
        CHECK(u[1] <= 2.0 + 1e-9);
        CHECK(u[1] >= -2.0 - 1e-9);
    }
}

TEST_CASE("vehicle chain grows monotonically with admissible gains") {
    auto setup = vehicle_setup(3.0, 0.12, 0.2, 8.0, 1.2);
    auto fp = synthesize_terminal_pair(setup.vm, setup.sc);
    Ellipsoid prev = fp.terminal;
    Mat gain = fp.gain;
    std::mt19937_64 rng(11);
    for (int i = 1; i <= 3; ++i) {
        auto r = backward_step(prev, gain, setup.vm, setup.sc, fp.d_level);
        CHECK(concentric_contains(prev, r.ring, 1e-8));
        for (const auto& h : setup.sc.state_halfspaces) {
            CHECK(h.normal.dot(r.ring.shape() * h.normal) <= h.offset * h.offset + 1e-8);
        }
        for (int s = 0; s < 200; ++s) {
            Vec x = r.ring.sample_inside(rng);
            Vec u = r.gain * x;
            CHECK(setup.sc.input_box.contains(u, 1e-9));
        }
        prev = r.ring;
        gain = r.gain;
    }
}

TEST_CASE("synthesis is deterministic") {
    auto setup = vehicle_setup(3.0, 0.12, 0.2, 8.0, 1.2);
    auto fp1 = synthesize_terminal_pair(setup.vm, setup.sc);
    auto fp2 = synthesize_terminal_pair(setup.vm, setup.sc);
    CHECK((fp1.terminal.shape() - fp2.terminal.shape()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fp1.gain - fp2.gain).cwiseAbs().maxCoeff() == 0.0);
}
