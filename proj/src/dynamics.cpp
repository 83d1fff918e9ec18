#include "grlsm/dynamics.hpp"

#include <cmath>

#include "grlsm/numfmt.hpp"

namespace grlsm {

using ad::Graph;
using ad::LossBuilder;
using ad::NodeId;

namespace {

double norm2(const LatentVector& z) {
    double acc = 0.0;
    for (double x : z) acc += x * x;
    return std::sqrt(acc);
}

// dL/dz + lambda * d(||dL/dz||^2)/dz at z, via nested differentiation.
std::vector<double> flow_direction(const LossBuilder& loss,
                                   const LatentVector& z,
                                   const RegConfig& cfg) {
    Graph g;
    std::vector<NodeId> zn;
    zn.reserve(z.size());
    for (double x : z) zn.push_back(g.leaf(x));
    NodeId root = loss(g, zn);
    auto grad_l = g.gradient(root, zn);

    std::vector<double> dir(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dir[i] = g.evaluate(grad_l[i]);

    if (cfg.lambda > 0.0) {
        NodeId penalty = g.dot(grad_l, grad_l);
        auto grad_r = g.gradient(penalty, zn);
        for (std::size_t i = 0; i < z.size(); ++i)
            dir[i] += cfg.lambda * g.evaluate(grad_r[i]);
    }

    // Hessian-based terms only enter the flow through finite differences,
    // and only in Full mode; exact third-order terms are out of scope.
    if (cfg.reg_mode == RegMode::Full && cfg.lambda > 0.0 &&
        (cfg.beta > 0.0 || cfg.gamma > 0.0)) {
        auto curvature = [&](std::span<const double> p) {
            LatentVector zz(p.begin(), p.end());
            double v = 0.0;
            if (cfg.beta > 0.0)
                v += cfg.beta * hessian_frobenius_sq(loss, zz, cfg, 0);
            if (cfg.gamma > 0.0)
                v += cfg.gamma * spectral_norm(loss, zz, cfg, 0).sigma_max;
            return v;
        };
        auto fd = ad::finite_diff_gradient(curvature, z, 1e-5);
        for (std::size_t i = 0; i < z.size(); ++i)
            dir[i] += cfg.lambda * fd[i];
    }
    return dir;
}

} // namespace

LatentVector flow_step(const LossBuilder& loss, const LatentVector& z,
                       const RegConfig& cfg, double dt) {
    if (!(dt > 0.0)) throw ConfigError("flow step dt must be positive");
    cfg.validate();
    auto dir = flow_direction(loss, z, cfg);
    LatentVector next(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) next[i] = z[i] - dt * dir[i];
    for (double x : next)
        if (!std::isfinite(x)) throw Error("flow divergence at step 0");
    return next;
}

Trajectory integrate_flow(const LossBuilder& loss, const LatentVector& z0,
                          const RegConfig& cfg, double dt, int steps) {
    if (!(dt > 0.0)) throw ConfigError("flow step dt must be positive");
    if (steps < 1) throw ConfigError("flow needs at least one step");
    cfg.validate();

    const double start_norm = std::max(norm2(z0), 1.0);
    Trajectory traj;
    traj.dt = dt;
    traj.points.reserve(static_cast<std::size_t>(steps) + 1);
    traj.points.emplace_back(0.0, z0);

    LatentVector z = z0;
    for (int k = 1; k <= steps; ++k) {
        auto dir = flow_direction(loss, z, cfg);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= dt * dir[i];
        bool finite = true;
        for (double x : z) finite = finite && std::isfinite(x);
        if (!finite || norm2(z) > 1e6 * start_norm)
            throw Error("flow divergence at step " + std::to_string(k));
        traj.points.emplace_back(k * dt, z);
    }
    return traj;
}

double acceleration_penalty(const Trajectory& traj) {
    if (traj.points.size() < 3)
        throw Error("trajectory too short: acceleration needs >= 3 points");
    const double dt = traj.dt;
    const double inv_dt2 = 1.0 / (dt * dt);
    double acc = 0.0;
    for (std::size_t k = 1; k + 1 < traj.points.size(); ++k) {
        const auto& prev = traj.points[k - 1].second;
        const auto& cur = traj.points[k].second;
        const auto& next = traj.points[k + 1].second;
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            const double second = (next[i] - 2.0 * cur[i] + prev[i]) * inv_dt2;
            norm_sq += second * second;
        }
        acc += norm_sq * dt;
    }
    return acc;
}

double energy(const Trajectory& traj, double grlsm_loss_value,
              const RegConfig& cfg) {
    return grlsm_loss_value + cfg.delta * acceleration_penalty(traj);
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
    const std::size_t d = traj.points.empty() ? 0 : traj.points[0].second.size();
    out << "t";
    for (std::size_t i = 0; i < d; ++i) out << ",z" << i;
    out << "\n";
    for (const auto& [t, z] : traj.points) {
        out << fmt_double(t);
        for (double x : z) out << "," << fmt_double(x);
        out << "\n";
    }
}

} // namespace grlsm
