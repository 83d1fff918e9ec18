#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grlsm/dynamics.hpp"
#include "grlsm/rng.hpp"

using namespace grlsm;
using namespace grlsm::ad;

namespace {

// L = 1/2 ||z||^2
LossBuilder unit_bowl() {
    return [](Graph& g, std::span<const NodeId> z) {
        std::vector<NodeId> sq;
        for (NodeId zi : z) sq.push_back(g.pow_const(zi, 2.0));
        return g.mul(g.constant(0.5), g.sum(sq));
    };
}

double norm(const LatentVector& z) {
    double acc = 0.0;
    for (double x : z) acc += x * x;
    return std::sqrt(acc);
}

} // namespace

TEST_CASE("flow_step: contraction on the bowl, fixed point, lambda=0") {
    RegConfig cfg;
    cfg.lambda = 0.5;
    // z(1 - dt (1 + 2 lambda)) = 0.8 z for dt=0.1, lambda=0.5
    auto z1 = flow_step(unit_bowl(), {1.0, 0.0}, cfg, 0.1);
    CHECK(z1[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(z1[1] == doctest::Approx(0.0));

    // finite-difference oracle for dR/dz at (1, 0): R(z) = ||z||^2
    auto r_of_z = [&](std::span<const double> p) {
        return grad_penalty(unit_bowl(), LatentVector(p.begin(), p.end()));
    };
    const double at[2] = {1.0, 0.0};
    auto fd = finite_diff_gradient(r_of_z, at, 1e-6);
    CHECK(fd[0] == doctest::Approx(2.0).epsilon(1e-4));

    auto z0 = flow_step(unit_bowl(), {0.0, 0.0}, cfg, 0.1);
    CHECK(z0[0] == 0.0);
    CHECK(z0[1] == 0.0);

    RegConfig plain;
    auto zp = flow_step(unit_bowl(), {1.0, 0.0}, plain, 0.1);
    CHECK(zp[0] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("flow_step with lambda=0 equals a plain gradient step") {
    auto rng = Xoshiro256pp::stream(17, 0);
    LossBuilder loss = [](Graph& g, std::span<const NodeId> z) {
        // non-quadratic: tanh couples coordinates
        return g.add(g.pow_const(z[0], 2.0), g.tanh(g.mul(z[0], z[1])));
    };
    for (int trial = 0; trial < 5; ++trial) {
        LatentVector z{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        RegConfig cfg;
        auto stepped = flow_step(loss, z, cfg, 0.05);

        Graph g;
        std::vector<NodeId> zn{g.leaf(z[0]), g.leaf(z[1])};
        auto grad = g.gradient(loss(g, zn), zn);
        for (int i = 0; i < 2; ++i) {
            const double plain = z[i] - 0.05 * g.evaluate(grad[i]);
            CHECK(std::fabs(stepped[i] - plain) < 1e-12);
        }
    }
}

TEST_CASE("integrate_flow: contraction, point count, trivial cases") {
    RegConfig cfg;
    cfg.lambda = 0.5;
    auto traj = integrate_flow(unit_bowl(), {1.0, 0.0}, cfg, 0.1, 10);
    REQUIRE(traj.points.size() == 11);
    for (std::size_t k = 0; k < traj.points.size(); ++k)
        CHECK(traj.points[k].first == doctest::Approx(0.1 * k).epsilon(1e-15));
    // ||z_t|| strictly decreasing while dt < 2/(1+2*lambda) = 1
    for (std::size_t k = 1; k < traj.points.size(); ++k)
        CHECK(norm(traj.points[k].second) < norm(traj.points[k - 1].second));
    CHECK(traj.points[10].second[0] ==
          doctest::Approx(std::pow(0.8, 10)).epsilon(1e-12));

    auto traj1 = integrate_flow(unit_bowl(), {0.5, -0.25}, cfg, 0.1, 1);
    REQUIRE(traj1.points.size() == 2);
    auto direct = flow_step(unit_bowl(), {0.5, -0.25}, cfg, 0.1);
    CHECK(traj1.points[1].second[0] == doctest::Approx(direct[0]).epsilon(1e-15));
    CHECK(traj1.points[1].second[1] == doctest::Approx(direct[1]).epsilon(1e-15));

    auto trajz = integrate_flow(unit_bowl(), {0.0, 0.0}, cfg, 0.1, 5);
    for (const auto& [t, z] : trajz.points) {
        CHECK(z[0] == 0.0);
        CHECK(z[1] == 0.0);
    }
}

TEST_CASE("integrate_flow: divergence detection names the step") {
    // gradient ascent in disguise: L = -1/2||z||^2 makes Euler blow up
    LossBuilder hill = [](Graph& g, std::span<const NodeId> z) {
        std::vector<NodeId> sq;
        for (NodeId zi : z) sq.push_back(g.pow_const(zi, 2.0));
        return g.mul(g.constant(-0.5), g.sum(sq));
    };
    RegConfig cfg;
    CHECK_THROWS_WITH_AS(integrate_flow(hill, {1.0}, cfg, 2.0, 100),
                         doctest::Contains("flow divergence"), Error);
}

TEST_CASE("acceleration_penalty: linear trajectory, single kink, scaling") {
    Trajectory lin;
    lin.dt = 0.5;
    for (int k = 0; k < 6; ++k)
        lin.points.emplace_back(0.5 * k, LatentVector{1.5 * k, -0.5 * k});
    CHECK(acceleration_penalty(lin) == doctest::Approx(0.0));

    Trajectory kink;
    kink.dt = 1.0;
    kink.points.emplace_back(0.0, LatentVector{0.0});
    kink.points.emplace_back(1.0, LatentVector{0.0});
    kink.points.emplace_back(2.0, LatentVector{1.0});
    CHECK(acceleration_penalty(kink) == doctest::Approx(1.0).epsilon(1e-15));

    // scaling z by c multiplies the penalty by c^2
    auto rng = Xoshiro256pp::stream(5, 0);
    Trajectory t1, t2;
    t1.dt = t2.dt = 0.2;
    const double c = 3.7;
    for (int k = 0; k < 8; ++k) {
        LatentVector z{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        LatentVector zc{c * z[0], c * z[1]};
        t1.points.emplace_back(0.2 * k, z);
        t2.points.emplace_back(0.2 * k, zc);
    }
    CHECK(acceleration_penalty(t2) ==
          doctest::Approx(c * c * acceleration_penalty(t1)).epsilon(1e-12));

    Trajectory tooShort;
    tooShort.dt = 1.0;
    tooShort.points.emplace_back(0.0, LatentVector{1.0});
    tooShort.points.emplace_back(1.0, LatentVector{2.0});
    CHECK_THROWS_WITH_AS(acceleration_penalty(tooShort),
                         doctest::Contains("trajectory too short"), Error);
}

TEST_CASE("acceleration_penalty is invariant under time reversal") {
    auto rng = Xoshiro256pp::stream(8, 0);
    Trajectory t;
    t.dt = 0.1;
    for (int k = 0; k < 12; ++k)
        t.points.emplace_back(0.1 * k,
                              LatentVector{rng.uniform(-2, 2), rng.normal()});
    Trajectory r = t;
    std::reverse(r.points.begin(), r.points.end());
    for (std::size_t k = 0; k < r.points.size(); ++k)
        r.points[k].first = 0.1 * k;
    CHECK(acceleration_penalty(r) ==
          doctest::Approx(acceleration_penalty(t)).epsilon(1e-12));
}

TEST_CASE("energy: delta scaling and trivial cases") {
    Trajectory kink;
    kink.dt = 1.0;
    kink.points.emplace_back(0.0, LatentVector{0.0});
    kink.points.emplace_back(1.0, LatentVector{0.0});
    kink.points.emplace_back(2.0, LatentVector{1.0});

    RegConfig cfg;
    cfg.delta = 0.0;
    CHECK(energy(kink, 3.0, cfg) == 3.0);
    cfg.delta = 2.0;
    CHECK(energy(kink, 3.0, cfg) == doctest::Approx(5.0).epsilon(1e-15));

    Trajectory flat;
    flat.dt = 1.0;
    for (int k = 0; k < 4; ++k)
        flat.points.emplace_back(double(k), LatentVector{0.7, -0.2});
    CHECK(energy(flat, 3.0, cfg) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("bowl flow converges and suffix energies are non-increasing") {
    RegConfig cfg;
    cfg.lambda = 0.5;
    cfg.delta = 1.0;
    auto traj = integrate_flow(unit_bowl(), {1.0, -1.0}, cfg, 0.1, 500);
    CHECK(norm(traj.points.back().second) < 1e-6);

    // energy of successive suffix trajectories is non-increasing
    auto loss_value = [&](const LatentVector& z) {
        std::vector<LatentVector> latents{z};
        std::vector<LossBuilder> fns{unit_bowl()};
        return grlsm_loss(0.5 * norm(z) * norm(z), latents, fns, cfg, 1);
    };
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 3 <= traj.points.size() && k < 40; ++k) {
        Trajectory suffix;
        suffix.dt = traj.dt;
        suffix.points.assign(traj.points.begin() + k, traj.points.end());
        const double e =
            energy(suffix, loss_value(suffix.points.front().second), cfg);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }
}

TEST_CASE("trajectory CSV export") {
    Trajectory t;
    t.dt = 0.5;
    t.points.emplace_back(0.0, LatentVector{1.0, 2.0});
    t.points.emplace_back(0.5, LatentVector{0.25, -0.125});
    std::ostringstream os;
    write_trajectory_csv(t, os);
    CHECK(os.str() == "t,z0,z1\n0,1,2\n0.5,0.25,-0.125\n");
}
