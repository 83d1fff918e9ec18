#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grlsm/autodiff.hpp"

namespace grlsm {

// The latent z: a fixed-dimension real vector of activations.
using LatentVector = std::vector<double>;

enum class FrobeniusMode { Exact, Hutchinson };
enum class RegMode { Analysis, Full };

// Regularization weights and estimator settings. lambda scales the whole
// regularizer, beta the squared Frobenius norm of the latent Hessian,
// gamma its spectral norm, delta the trajectory acceleration penalty.
// In Analysis mode the beta/gamma terms are evaluated and logged but do
// not contribute parameter gradients; Full mode makes them differentiable
// and is guarded to latent dimension <= 16.
struct RegConfig {
    double lambda = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    FrobeniusMode frobenius_mode = FrobeniusMode::Exact;
    int hutchinson_samples = 64;
    int power_iters = 50;
    double power_tol = 1e-9;
    RegMode reg_mode = RegMode::Analysis;

    void validate() const;
};

// --- standalone numeric operations (each builds its own graph) -------------

// ||dL/dz||^2 at z.
double grad_penalty(const ad::LossBuilder& loss, const LatentVector& z);

// Dense d x d Hessian, column i = hvp(loss, z, e_i), symmetrized as
// (H + H^T)/2. Guarded to d <= 64.
std::vector<std::vector<double>> hessian_dense(const ad::LossBuilder& loss,
                                               const LatentVector& z);

// ||H||_F^2, exactly or by the Hutchinson estimator (1/k) sum ||H v_k||^2
// with Rademacher probes from the seeded stream.
double hessian_frobenius_sq(const ad::LossBuilder& loss, const LatentVector& z,
                            const RegConfig& cfg, std::uint64_t seed);

struct SpectralResult {
    double sigma_max = 0.0;
    std::vector<double> eigvec; // unit norm
};

// Largest |eigenvalue| of the latent Hessian by power iteration on H^2,
// which converges for indefinite Hessians as well.
SpectralResult spectral_norm(const ad::LossBuilder& loss, const LatentVector& z,
                             const RegConfig& cfg, std::uint64_t seed);

// R(z) = grad_penalty + beta ||H||_F^2 + gamma sigma_max.
double regularizer(const ad::LossBuilder& loss, const LatentVector& z,
                   const RegConfig& cfg, std::uint64_t seed);

// base_loss + lambda * mean_i R(z_i). The batch mean realizes the
// regularizer's integral over the latent domain as an empirical
// expectation. Probe streams are keyed by latent index.
double grlsm_loss(double base_loss, std::span<const LatentVector> latents,
                  std::span<const ad::LossBuilder> per_latent_loss,
                  const RegConfig& cfg, std::uint64_t seed);

// --- graph-level builders (compose into an existing training graph) --------

// Emits sum_i (dL/dz_i)^2 over latent nodes z (leaves or intermediates)
// as a node differentiable w.r.t. anything upstream of loss_root and z.
ad::NodeId grad_penalty_node(ad::Graph& g, ad::NodeId loss_root,
                             std::span<const ad::NodeId> z);

// The full per-latent regularizer emitted into an existing graph.
// node: contributes to the training loss. In Analysis mode the beta/gamma
// summands enter as constants (values logged, no parameter gradient); in
// Full mode they are differentiable, the spectral term via a frozen
// dominant eigenvector v*: sigma ~ |v*^T H v*| with v* held constant.
struct RegTerm {
    ad::NodeId node = ad::kInvalidNode;
    double grad_penalty = 0.0;
    double frobenius_sq = 0.0;
    double sigma_max = 0.0;
    double value = 0.0; // grad_penalty + beta*frobenius_sq + gamma*sigma_max
};

RegTerm regularizer_node(ad::Graph& g, ad::NodeId loss_root,
                         std::span<const ad::NodeId> z, const RegConfig& cfg,
                         std::uint64_t seed, std::uint64_t latent_key);

} // namespace grlsm
