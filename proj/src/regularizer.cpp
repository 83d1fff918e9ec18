#include "grlsm/regularizer.hpp"

#include <cmath>
#include <limits>

#include "grlsm/rng.hpp"

namespace grlsm {

using ad::Graph;
using ad::kInvalidNode;
using ad::LossBuilder;
using ad::NodeId;

namespace {

constexpr std::size_t kDenseHessianMaxDim = 64;
constexpr std::size_t kFullModeMaxDim = 16;

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Reusable Hessian-vector product inside one graph: bind the direction
// leaves, evaluate the emitted second-derivative nodes. Rebinding only
// invalidates nodes appended after the direction leaves, so repeated
// applications (Hutchinson probes, power iteration) stay cheap.
struct HvpProgram {
    Graph* g;
    std::vector<NodeId> v_leaves;
    std::vector<NodeId> hv_nodes;

    HvpProgram(Graph& graph, std::span<const NodeId> grad_z,
               std::span<const NodeId> z)
        : g(&graph) {
        v_leaves.reserve(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) v_leaves.push_back(g->leaf());
        NodeId directional = g->dot(grad_z, v_leaves);
        hv_nodes = g->gradient(directional, z);
    }

    void apply(std::span<const double> v, std::vector<double>& out) {
        for (std::size_t i = 0; i < v.size(); ++i) g->bind(v_leaves[i], v[i]);
        out.resize(hv_nodes.size());
        for (std::size_t i = 0; i < hv_nodes.size(); ++i)
            out[i] = g->evaluate(hv_nodes[i]);
    }
};

// Power iteration on H^2 via an HvpProgram. Returns the Rayleigh quotient
// of H^2 (so sigma = sqrt) and the final iterate.
struct PowerResult {
    double rayleigh_h2 = 0.0;
    std::vector<double> w;
};

PowerResult power_iterate(HvpProgram& hvp, std::size_t d, const RegConfig& cfg,
                          std::uint64_t seed, std::uint64_t key) {
    auto rng = Xoshiro256pp::stream(seed, kStreamPower, key);
    std::vector<double> w(d);
    double norm = 0.0;
    std::size_t retries = 0;
    for (;;) {
        norm = 0.0;
        for (auto& x : w) {
            x = rng.normal();
            norm += x * x;
        }
        if (norm > 0.0) break;
        if (++retries > d)
            throw Error("degenerate start: power iteration start vector is zero");
    }
    norm = std::sqrt(norm);
    for (auto& x : w) x /= norm;

    std::vector<double> u, t;
    PowerResult res;
    res.w = w;
    double q_prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.power_iters; ++it) {
        hvp.apply(w, u); // u = H w
        double q = 0.0;
        for (double x : u) q += x * x; // w^T H^2 w for symmetric H
        res.rayleigh_h2 = q;
        res.w = w;
        if (std::fabs(q - q_prev) < cfg.power_tol) break;
        q_prev = q;
        hvp.apply(u, t); // t = H^2 w
        double nt = 0.0;
        for (double x : t) nt += x * x;
        nt = std::sqrt(nt);
        if (nt == 0.0) break; // H^2 w vanished; rayleigh already recorded
        for (std::size_t i = 0; i < d; ++i) w[i] = t[i] / nt;
    }
    return res;
}

struct LossGraph {
    Graph g;
    std::vector<NodeId> z_nodes;
    NodeId root = kInvalidNode;
    std::vector<NodeId> grad_z;

    LossGraph(const LossBuilder& loss, const LatentVector& z) {
        z_nodes.reserve(z.size());
        for (double x : z) z_nodes.push_back(g.leaf(x));
        root = loss(g, z_nodes);
        grad_z = g.gradient(root, z_nodes);
    }
};

} // namespace

void RegConfig::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError(std::string(name) + " must be finite and >= 0");
    };
    nonneg(lambda, "lambda");
    nonneg(beta, "beta");
    nonneg(gamma, "gamma");
    nonneg(delta, "delta");
    if (hutchinson_samples < 1)
        throw ConfigError("hutchinson_samples must be >= 1");
    if (power_iters < 1) throw ConfigError("power_iters must be >= 1");
    if (!(power_tol > 0.0) || !(power_tol < 1.0))
        throw ConfigError("power_tol must be in (0, 1)");
}

double grad_penalty(const LossBuilder& loss, const LatentVector& z) {
    LossGraph lg(loss, z);
    std::vector<double> gvals(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        gvals[i] = lg.g.evaluate(lg.grad_z[i]);
    if (!all_finite(gvals))
        throw Error("numerical overflow: non-finite latent gradient");
    double acc = 0.0;
    for (double v : gvals) acc += v * v;
    return acc;
}

std::vector<std::vector<double>> hessian_dense(const LossBuilder& loss,
                                               const LatentVector& z) {
    const std::size_t d = z.size();
    if (d > kDenseHessianMaxDim)
        throw Error("latent dimension too large for dense Hessian: " +
                    std::to_string(d) + " > " +
                    std::to_string(kDenseHessianMaxDim));
    std::vector<std::vector<double>> cols(d);
    std::vector<double> e(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        e[i] = 1.0;
        cols[i] = ad::hvp(loss, z, e);
        e[i] = 0.0;
    }
    // columns -> matrix, symmetrized
    std::vector<std::vector<double>> h(d, std::vector<double>(d));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            h[i][j] = 0.5 * (cols[j][i] + cols[i][j]);
    return h;
}

double hessian_frobenius_sq(const LossBuilder& loss, const LatentVector& z,
                            const RegConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (cfg.frobenius_mode == FrobeniusMode::Exact) {
        auto h = hessian_dense(loss, z);
        double acc = 0.0;
        for (const auto& row : h)
            for (double x : row) acc += x * x;
        return acc;
    }
    LossGraph lg(loss, z);
    HvpProgram hvp(lg.g, lg.grad_z, lg.z_nodes);
    auto rng = Xoshiro256pp::stream(seed, kStreamHutchinson);
    std::vector<double> v(z.size()), hv;
    double acc = 0.0;
    for (int k = 0; k < cfg.hutchinson_samples; ++k) {
        for (auto& x : v) x = rng.rademacher();
        hvp.apply(v, hv);
        for (double x : hv) acc += x * x;
    }
    return acc / cfg.hutchinson_samples;
}

SpectralResult spectral_norm(const LossBuilder& loss, const LatentVector& z,
                             const RegConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    LossGraph lg(loss, z);
    HvpProgram hvp(lg.g, lg.grad_z, lg.z_nodes);
    PowerResult pr = power_iterate(hvp, z.size(), cfg, seed, 0);
    SpectralResult out;
    out.sigma_max = std::sqrt(std::max(pr.rayleigh_h2, 0.0));
    out.eigvec = std::move(pr.w);
    return out;
}

double regularizer(const LossBuilder& loss, const LatentVector& z,
                   const RegConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    double r = grad_penalty(loss, z);
    if (cfg.beta > 0.0) r += cfg.beta * hessian_frobenius_sq(loss, z, cfg, seed);
    if (cfg.gamma > 0.0)
        r += cfg.gamma * spectral_norm(loss, z, cfg, seed).sigma_max;
    return r;
}

double grlsm_loss(double base_loss, std::span<const LatentVector> latents,
                  std::span<const LossBuilder> per_latent_loss,
                  const RegConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (latents.empty()) throw Error("empty latent batch: Omega has no samples");
    if (latents.size() != per_latent_loss.size())
        throw Error("latents and per-latent losses differ in count");
    if (cfg.lambda == 0.0) return base_loss;
    double mean_r = 0.0;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        // per-latent probe streams: key the seed by latent index
        mean_r += regularizer(per_latent_loss[i], latents[i], cfg,
                              seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
    }
    mean_r /= static_cast<double>(latents.size());
    return base_loss + cfg.lambda * mean_r;
}

NodeId grad_penalty_node(Graph& g, NodeId loss_root,
                         std::span<const NodeId> z) {
    auto grad_z = g.gradient(loss_root, z);
    return g.dot(grad_z, grad_z);
}

RegTerm regularizer_node(Graph& g, NodeId loss_root,
                         std::span<const NodeId> z, const RegConfig& cfg,
                         std::uint64_t seed, std::uint64_t latent_key) {
    cfg.validate();
    const std::size_t d = z.size();
    const bool full = cfg.reg_mode == RegMode::Full;
    if (full && (cfg.beta > 0.0 || cfg.gamma > 0.0) && d > kFullModeMaxDim)
        throw Error("full regularizer mode supports latent dimension <= " +
                    std::to_string(kFullModeMaxDim));

    RegTerm term;
    auto grad_z = g.gradient(loss_root, z);
    term.node = g.dot(grad_z, grad_z);
    term.grad_penalty = g.evaluate(term.node);
    if (!std::isfinite(term.grad_penalty))
        throw Error("numerical overflow: non-finite latent gradient");

    NodeId frob_node = kInvalidNode;
    if (cfg.beta > 0.0) {
        if (cfg.frobenius_mode == FrobeniusMode::Exact) {
            // columns H e_i = gradient of (dL/dz_i) w.r.t. z
            std::vector<NodeId> sq_entries;
            sq_entries.reserve(d * d);
            for (std::size_t i = 0; i < d; ++i) {
                auto col = g.gradient(grad_z[i], z);
                for (NodeId c : col) sq_entries.push_back(g.pow_const(c, 2.0));
            }
            frob_node = g.sum(sq_entries);
        } else {
            auto rng = Xoshiro256pp::stream(seed, kStreamHutchinson, latent_key);
            std::vector<NodeId> sample_terms;
            for (int k = 0; k < cfg.hutchinson_samples; ++k) {
                std::vector<NodeId> v(d);
                for (auto& vn : v) vn = g.constant(rng.rademacher());
                auto hv = g.gradient(g.dot(grad_z, v), z);
                sample_terms.push_back(g.dot(hv, hv));
            }
            frob_node = g.mul(g.constant(1.0 / cfg.hutchinson_samples),
                              g.sum(sample_terms));
        }
        term.frobenius_sq = g.evaluate(frob_node);
    }

    NodeId sigma_node = kInvalidNode;
    if (cfg.gamma > 0.0) {
        HvpProgram hvp(g, grad_z, z);
        PowerResult pr = power_iterate(hvp, d, cfg, seed, latent_key);
        term.sigma_max = std::sqrt(std::max(pr.rayleigh_h2, 0.0));
        if (full) {
            // frozen dominant eigenvector: sigma ~ |v*^T H v*| with v*
            // constant (exact for a converged simple eigenpair)
            std::vector<NodeId> vstar(d);
            for (std::size_t i = 0; i < d; ++i)
                vstar[i] = g.constant(pr.w[i]);
            auto hv = g.gradient(g.dot(grad_z, vstar), z);
            NodeId rayleigh = g.dot(vstar, hv);
            const double rval = g.evaluate(rayleigh);
            const double sign = rval < 0.0 ? -1.0 : 1.0;
            sigma_node = g.mul(g.constant(sign), rayleigh);
            term.sigma_max = g.evaluate(sigma_node);
        }
    }

    if (full) {
        NodeId extra = kInvalidNode;
        if (frob_node != kInvalidNode)
            extra = g.mul(g.constant(cfg.beta), frob_node);
        if (sigma_node != kInvalidNode) {
            NodeId gs = g.mul(g.constant(cfg.gamma), sigma_node);
            extra = extra == kInvalidNode ? gs : g.add(extra, gs);
        }
        if (extra != kInvalidNode) term.node = g.add(term.node, extra);
    } else {
        const double logged =
            cfg.beta * term.frobenius_sq + cfg.gamma * term.sigma_max;
        if (logged != 0.0)
            term.node = g.add(term.node, g.constant(logged));
    }
    term.value = g.evaluate(term.node);
    return term;
}

} // namespace grlsm
