// Test-only oracles, independent of the library's differentiation and
// spectral machinery.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "grlsm/autodiff.hpp"
#include "grlsm/rng.hpp"

namespace oracle {

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double offdiag = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) offdiag += a[i][j] * a[i][j];
        if (offdiag < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-18) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
    return eig;
}

inline double spectral_radius(const std::vector<std::vector<double>>& a) {
    double best = 0.0;
    for (double e : jacobi_eigenvalues(a)) best = std::max(best, std::fabs(e));
    return best;
}

inline double frobenius_sq(const std::vector<std::vector<double>>& a) {
    double acc = 0.0;
    for (const auto& row : a)
        for (double x : row) acc += x * x;
    return acc;
}

// Random smooth-ish expression graph over nv leaves. Kink-introducing ops
// (relu, max) are included; use kink_margin_ok() to reject graphs whose
// kink arguments sit too close to zero for finite differences.
struct RandomGraph {
    grlsm::ad::Graph g;
    std::vector<grlsm::ad::NodeId> leaves;
    grlsm::ad::NodeId root = grlsm::ad::kInvalidNode;
    std::vector<double> point;
};

inline void build_random_graph(RandomGraph& rg, grlsm::Xoshiro256pp& rng,
                               int max_dims, int depth) {
    using namespace grlsm::ad;
    Graph& g = rg.g;
    const int nv = 1 + static_cast<int>(rng.below(max_dims));
    rg.point.resize(nv);
    for (int i = 0; i < nv; ++i) {
        rg.point[i] = rng.uniform(-1.5, 1.5);
        rg.leaves.push_back(g.leaf(rg.point[i]));
    }
    std::vector<NodeId> pool = rg.leaves;
    pool.push_back(g.constant(rng.uniform(-1.0, 1.0)));
    auto pick = [&]() { return pool[rng.below(pool.size())]; };
    const int steps = depth * 2;
    for (int s = 0; s < steps; ++s) {
        NodeId nid;
        switch (rng.below(10)) {
            case 0: nid = g.add(pick(), pick()); break;
            case 1: nid = g.mul(pick(), pick()); break;
            case 2: nid = g.neg(pick()); break;
            case 3: nid = g.tanh(pick()); break;
            // exp of a bounded argument keeps values in a sane range
            case 4: nid = g.exp(g.tanh(pick())); break;
            case 5: nid = g.pow_const(pick(), 2.0); break;
            case 6: nid = g.pow_const(pick(), 3.0); break;
            case 7: {
                const NodeId terms[3] = {pick(), pick(), pick()};
                nid = g.sum(terms);
                break;
            }
            case 8: nid = g.relu(pick()); break;
            default: nid = g.max(pick(), pick()); break;
        }
        pool.push_back(nid);
    }
    // Final squash keeps the root and the finite-difference probes tame.
    rg.root = g.tanh(pool.back());
    g.evaluate(rg.root);
}

// False if any relu/max/step argument is within margin of its kink, where
// central differences would disagree with one-sided derivative conventions.
inline bool kink_margin_ok(const RandomGraph& rg, double margin) {
    using namespace grlsm::ad;
    for (NodeId id = 0; id < rg.g.size(); ++id) {
        if (!rg.g.evaluated(id)) continue;
        const auto& nd = rg.g.node(id);
        auto par = rg.g.parents(id);
        if (nd.op == Op::Relu || nd.op == Op::Step) {
            if (std::fabs(rg.g.node(par[0]).value) < margin) return false;
        } else if (nd.op == Op::Max) {
            const double gap =
                rg.g.node(par[0]).value - rg.g.node(par[1]).value;
            if (std::fabs(gap) < margin) return false;
        }
    }
    return true;
}

} // namespace oracle
