#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "grlsm/regularizer.hpp"

namespace grlsm {

// Time-indexed latent trajectory produced by the flow integrator.
// t values are exactly k * dt.
struct Trajectory {
    double dt = 0.0;
    std::vector<std::pair<double, LatentVector>> points;
};

// One explicit Euler step of dz/dt = -dL/dz - lambda * dR/dz, where R is
// the first-order penalty ||dL/dz||^2 (its gradient needs second
// derivatives, supplied by nested differentiation). In Full mode with
// beta/gamma > 0, the Hessian-based terms enter through central
// finite differences of their values.
LatentVector flow_step(const ad::LossBuilder& loss, const LatentVector& z,
                       const RegConfig& cfg, double dt);

// steps applications of flow_step; the trajectory has steps+1 points.
// Throws "flow divergence" (with the failing step index) if the state
// becomes non-finite or grows by more than 1e6x from the start.
Trajectory integrate_flow(const ad::LossBuilder& loss, const LatentVector& z0,
                          const RegConfig& cfg, double dt, int steps);

// Central-difference discretization of the integral of ||d^2 z/dt^2||^2
// along the trajectory: sum over interior points of
// ||(z_{k+1} - 2 z_k + z_{k-1}) / dt^2||^2 * dt. Needs >= 3 points.
double acceleration_penalty(const Trajectory& traj);

// grlsm_loss_value + delta * acceleration_penalty(traj).
double energy(const Trajectory& traj, double grlsm_loss_value,
              const RegConfig& cfg);

// CSV export: header "t,z0,z1,...", one row per point, 17-significant-digit
// floats.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

} // namespace grlsm
