#include "grlsm/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace grlsm::ad {

namespace {

bool is_const(const Node& n) { return n.op == Op::Const; }

} // namespace

// --- construction -----------------------------------------------------------

NodeId Graph::push(Op op, std::span<const NodeId> parents, double aux) {
    Node n;
    n.op = op;
    n.aux = aux;
    n.parent_off = static_cast<std::uint32_t>(parent_pool_.size());
    n.parent_cnt = static_cast<std::uint32_t>(parents.size());
    parent_pool_.insert(parent_pool_.end(), parents.begin(), parents.end());
    nodes_.push_back(n);
    computed_.push_back(0);
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::push0(Op op) { return push(op, {}); }

NodeId Graph::leaf() { return push0(Op::Leaf); }

NodeId Graph::leaf(double value) {
    NodeId id = push0(Op::Leaf);
    nodes_[id].value = value;
    nodes_[id].bound = true;
    computed_[id] = 1;
    return id;
}

NodeId Graph::input(const std::string& name) {
    NodeId id = leaf();
    registry_.emplace(name, id);
    return id;
}

NodeId Graph::param(const std::string& name, double value) {
    NodeId id = leaf(value);
    registry_.emplace(name, id);
    return id;
}

NodeId Graph::find_leaf(const std::string& name) const {
    auto it = registry_.find(name);
    return it == registry_.end() ? kInvalidNode : it->second;
}

NodeId Graph::constant(double value) {
    if (value == 0.0 && const_zero_ != kInvalidNode) return const_zero_;
    if (value == 1.0 && const_one_ != kInvalidNode) return const_one_;
    NodeId id = push0(Op::Const);
    nodes_[id].value = value;
    computed_[id] = 1;
    if (value == 0.0) const_zero_ = id;
    if (value == 1.0) const_one_ = id;
    return id;
}

void Graph::bind(NodeId leaf_id, double value) {
    check_in_graph(leaf_id, "bind");
    Node& n = nodes_[leaf_id];
    if (n.op != Op::Leaf) throw Error("bind target is not a leaf");
    n.value = value;
    n.bound = true;
    // Everything appended after the leaf may depend on it.
    std::fill(computed_.begin() + leaf_id, computed_.end(),
              static_cast<std::uint8_t>(0));
}

void Graph::clear() {
    nodes_.clear();
    parent_pool_.clear();
    computed_.clear();
    registry_.clear();
    const_zero_ = kInvalidNode;
    const_one_ = kInvalidNode;
}

std::span<const NodeId> Graph::parents(NodeId id) const {
    const Node& n = nodes_[id];
    return {parent_pool_.data() + n.parent_off, n.parent_cnt};
}

void Graph::check_in_graph(NodeId id, const char* what) const {
    if (id >= nodes_.size())
        throw Error(std::string("foreign node: ") + what + " refers to node " +
                    std::to_string(id) + " outside this graph");
}

// --- builders with algebraic short-circuits ----------------------------------

NodeId Graph::add(NodeId a, NodeId b) {
    check_in_graph(a, "add");
    check_in_graph(b, "add");
    const Node &na = nodes_[a], &nb = nodes_[b];
    if (is_const(na) && is_const(nb)) return constant(na.value + nb.value);
    if (is_const(na) && na.value == 0.0) return b;
    if (is_const(nb) && nb.value == 0.0) return a;
    const NodeId p[2] = {a, b};
    return push(Op::Add, p);
}

NodeId Graph::sub(NodeId a, NodeId b) { return add(a, neg(b)); }

NodeId Graph::mul(NodeId a, NodeId b) {
    check_in_graph(a, "mul");
    check_in_graph(b, "mul");
    const Node &na = nodes_[a], &nb = nodes_[b];
    if (is_const(na) && is_const(nb)) return constant(na.value * nb.value);
    if (is_const(na)) {
        if (na.value == 0.0) return constant(0.0);
        if (na.value == 1.0) return b;
    }
    if (is_const(nb)) {
        if (nb.value == 0.0) return constant(0.0);
        if (nb.value == 1.0) return a;
    }
    const NodeId p[2] = {a, b};
    return push(Op::Mul, p);
}

NodeId Graph::neg(NodeId a) {
    check_in_graph(a, "neg");
    const Node& na = nodes_[a];
    if (is_const(na)) return constant(-na.value);
    if (na.op == Op::Neg) return parents(a)[0];
    const NodeId p[1] = {a};
    return push(Op::Neg, p);
}

NodeId Graph::exp(NodeId a) {
    check_in_graph(a, "exp");
    if (is_const(nodes_[a])) return constant(std::exp(nodes_[a].value));
    const NodeId p[1] = {a};
    return push(Op::Exp, p);
}

NodeId Graph::ln(NodeId a) {
    check_in_graph(a, "ln");
    if (is_const(nodes_[a])) return constant(std::log(nodes_[a].value));
    const NodeId p[1] = {a};
    return push(Op::Ln, p);
}

NodeId Graph::tanh(NodeId a) {
    check_in_graph(a, "tanh");
    if (is_const(nodes_[a])) return constant(std::tanh(nodes_[a].value));
    const NodeId p[1] = {a};
    return push(Op::Tanh, p);
}

NodeId Graph::relu(NodeId a) {
    check_in_graph(a, "relu");
    if (is_const(nodes_[a]))
        return constant(nodes_[a].value > 0.0 ? nodes_[a].value : 0.0);
    const NodeId p[1] = {a};
    return push(Op::Relu, p);
}

NodeId Graph::max(NodeId a, NodeId b) {
    check_in_graph(a, "max");
    check_in_graph(b, "max");
    if (is_const(nodes_[a]) && is_const(nodes_[b]))
        return constant(std::max(nodes_[a].value, nodes_[b].value));
    const NodeId p[2] = {a, b};
    return push(Op::Max, p);
}

NodeId Graph::pow_const(NodeId a, double exponent) {
    check_in_graph(a, "pow-const");
    if (exponent == 0.0) return constant(1.0);
    if (exponent == 1.0) return a;
    if (is_const(nodes_[a])) return constant(std::pow(nodes_[a].value, exponent));
    const NodeId p[1] = {a};
    return push(Op::PowConst, p, exponent);
}

NodeId Graph::sum(std::span<const NodeId> terms) {
    double const_acc = 0.0;
    std::vector<NodeId> kept;
    kept.reserve(terms.size());
    for (NodeId t : terms) {
        check_in_graph(t, "sum");
        if (is_const(nodes_[t]))
            const_acc += nodes_[t].value;
        else
            kept.push_back(t);
    }
    if (const_acc != 0.0) kept.push_back(constant(const_acc));
    if (kept.empty()) return constant(0.0);
    if (kept.size() == 1) return kept.front();
    if (kept.size() == 2) return add(kept[0], kept[1]);
    return push(Op::Sum, kept);
}

NodeId Graph::dot(std::span<const NodeId> a, std::span<const NodeId> b) {
    if (a.size() != b.size())
        throw Error("shape mismatch: dot of lengths " + std::to_string(a.size()) +
                    " and " + std::to_string(b.size()));
    double const_acc = 0.0;
    std::vector<NodeId> ka, kb;
    ka.reserve(a.size());
    kb.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        check_in_graph(a[i], "dot");
        check_in_graph(b[i], "dot");
        const Node &na = nodes_[a[i]], &nb = nodes_[b[i]];
        if (is_const(na) && is_const(nb)) {
            const_acc += na.value * nb.value;
            continue;
        }
        if ((is_const(na) && na.value == 0.0) || (is_const(nb) && nb.value == 0.0))
            continue;
        ka.push_back(a[i]);
        kb.push_back(b[i]);
    }
    NodeId result;
    if (ka.empty()) {
        result = constant(const_acc);
        return result;
    }
    if (ka.size() == 1) {
        result = mul(ka[0], kb[0]);
    } else {
        std::vector<NodeId> p(ka);
        p.insert(p.end(), kb.begin(), kb.end());
        result = push(Op::Dot, p);
    }
    if (const_acc != 0.0) result = add(result, constant(const_acc));
    return result;
}

NodeId Graph::step(NodeId a) {
    check_in_graph(a, "step");
    if (is_const(nodes_[a]))
        return constant(nodes_[a].value > 0.0 ? 1.0 : 0.0);
    const NodeId p[1] = {a};
    return push(Op::Step, p);
}

// --- evaluation ---------------------------------------------------------------

void Graph::compute(NodeId id) {
    Node& n = nodes_[id];
    const NodeId* p = parent_pool_.data() + n.parent_off;
    switch (n.op) {
        case Op::Leaf:
            if (!n.bound)
                throw Error("unbound input: leaf node " + std::to_string(id) +
                            " has no value");
            break;
        case Op::Const:
            break;
        case Op::Add:
            n.value = nodes_[p[0]].value + nodes_[p[1]].value;
            break;
        case Op::Mul:
            n.value = nodes_[p[0]].value * nodes_[p[1]].value;
            break;
        case Op::Neg:
            n.value = -nodes_[p[0]].value;
            break;
        case Op::Exp:
            n.value = std::exp(nodes_[p[0]].value);
            break;
        case Op::Ln:
            n.value = std::log(nodes_[p[0]].value);
            break;
        case Op::Tanh:
            n.value = std::tanh(nodes_[p[0]].value);
            break;
        case Op::Relu:
            n.value = nodes_[p[0]].value > 0.0 ? nodes_[p[0]].value : 0.0;
            break;
        case Op::Max:
            n.value = std::max(nodes_[p[0]].value, nodes_[p[1]].value);
            break;
        case Op::PowConst:
            n.value = std::pow(nodes_[p[0]].value, n.aux);
            break;
        case Op::Sum: {
            double acc = 0.0;
            for (std::uint32_t i = 0; i < n.parent_cnt; ++i)
                acc += nodes_[p[i]].value;
            n.value = acc;
            break;
        }
        case Op::Dot: {
            const std::uint32_t half = n.parent_cnt / 2;
            double acc = 0.0;
            for (std::uint32_t i = 0; i < half; ++i)
                acc += nodes_[p[i]].value * nodes_[p[half + i]].value;
            n.value = acc;
            break;
        }
        case Op::Step:
            n.value = nodes_[p[0]].value > 0.0 ? 1.0 : 0.0;
            break;
    }
    computed_[id] = 1;
}

double Graph::evaluate(NodeId root) {
    check_in_graph(root, "evaluate");
    if (computed_[root]) return nodes_[root].value;
    // Iterative post-order over uncomputed ancestors. The high bit marks a
    // node whose parents are already scheduled.
    constexpr NodeId kExpandedBit = 0x80000000u;
    dfs_stack_.clear();
    dfs_stack_.push_back(root);
    while (!dfs_stack_.empty()) {
        NodeId top = dfs_stack_.back();
        dfs_stack_.pop_back();
        if (top & kExpandedBit) {
            compute(top & ~kExpandedBit);
            continue;
        }
        if (computed_[top]) continue;
        dfs_stack_.push_back(top | kExpandedBit);
        for (NodeId p : parents(top))
            if (!computed_[p]) dfs_stack_.push_back(p);
    }
    return nodes_[root].value;
}

double Graph::value(NodeId id) const {
    if (id >= nodes_.size() || !computed_[id])
        throw Error("value requested for unevaluated node " + std::to_string(id));
    return nodes_[id].value;
}

double Graph::recompute_value(NodeId id) const {
    const Node& n = nodes_[id];
    const NodeId* p = parent_pool_.data() + n.parent_off;
    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            return n.value;
        case Op::Add:
            return nodes_[p[0]].value + nodes_[p[1]].value;
        case Op::Mul:
            return nodes_[p[0]].value * nodes_[p[1]].value;
        case Op::Neg:
            return -nodes_[p[0]].value;
        case Op::Exp:
            return std::exp(nodes_[p[0]].value);
        case Op::Ln:
            return std::log(nodes_[p[0]].value);
        case Op::Tanh:
            return std::tanh(nodes_[p[0]].value);
        case Op::Relu:
            return nodes_[p[0]].value > 0.0 ? nodes_[p[0]].value : 0.0;
        case Op::Max:
            return std::max(nodes_[p[0]].value, nodes_[p[1]].value);
        case Op::PowConst:
            return std::pow(nodes_[p[0]].value, n.aux);
        case Op::Sum: {
            double acc = 0.0;
            for (std::uint32_t i = 0; i < n.parent_cnt; ++i)
                acc += nodes_[p[i]].value;
            return acc;
        }
        case Op::Dot: {
            const std::uint32_t half = n.parent_cnt / 2;
            double acc = 0.0;
            for (std::uint32_t i = 0; i < half; ++i)
                acc += nodes_[p[i]].value * nodes_[p[half + i]].value;
            return acc;
        }
        case Op::Step:
            return nodes_[p[0]].value > 0.0 ? 1.0 : 0.0;
    }
    return n.value;
}

// --- reverse mode --------------------------------------------------------------

std::vector<NodeId> Graph::gradient(NodeId root, std::span<const NodeId> wrt) {
    check_in_graph(root, "gradient root");
    for (NodeId w : wrt) check_in_graph(w, "gradient wrt");

    const std::size_t n = static_cast<std::size_t>(root) + 1;

    // desc: depends on some wrt entry; anc: root depends on it.
    std::vector<std::uint8_t> desc(n, 0), anc(n, 0);
    for (NodeId w : wrt)
        if (w <= root) desc[w] = 1;
    for (std::size_t i = 0; i < n; ++i) {
        if (desc[i]) continue;
        for (NodeId p : parents(static_cast<NodeId>(i)))
            if (desc[p]) {
                desc[i] = 1;
                break;
            }
    }
    anc[root] = 1;
    for (std::size_t i = n; i-- > 0;) {
        if (!anc[i]) continue;
        for (NodeId p : parents(static_cast<NodeId>(i))) anc[p] = 1;
    }
    auto live = [&](NodeId id) { return id < n && desc[id] && anc[id]; };

    // Count adjoint contributions per live node, then lay them out flat.
    std::vector<std::uint32_t> cnt(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        if (!live(static_cast<NodeId>(j))) continue;
        for (NodeId p : parents(static_cast<NodeId>(j)))
            if (live(p)) ++cnt[p];
    }
    std::vector<std::uint32_t> off(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) off[i + 1] = off[i] + cnt[i];
    std::vector<NodeId> slots(off[n], kInvalidNode);
    std::vector<std::uint32_t> cursor(off.begin(), off.end() - 1);
    std::vector<NodeId> adjoint(n, kInvalidNode);

    for (std::size_t ip = n; ip-- > 0;) {
        const NodeId i = static_cast<NodeId>(ip);
        if (!live(i)) continue;

        NodeId g;
        if (i == root) {
            g = constant(1.0);
        } else {
            std::span<const NodeId> contrib{slots.data() + off[ip], cnt[ip]};
            for (NodeId c : contrib)
                if (c == kInvalidNode)
                    throw Error("internal: adjoint slot left unfilled");
            g = sum(contrib);
        }
        adjoint[ip] = g;

        // Emission appends nodes, so nodes_ and parent_pool_ may reallocate
        // mid-switch; read the node by value and parents by index. Each
        // contribution is only built when its target is live, so every
        // emitted node stays reachable from the returned derivatives.
        const Node nd = nodes_[i];
        auto P = [&](std::uint32_t k) { return parent_pool_[nd.parent_off + k]; };
        auto deposit = [&](NodeId p, NodeId contribution) {
            slots[cursor[p]++] = contribution;
        };
        switch (nd.op) {
            case Op::Leaf:
            case Op::Const:
                break;
            case Op::Add:
                if (live(P(0))) deposit(P(0), g);
                if (live(P(1))) deposit(P(1), g);
                break;
            case Op::Mul:
                if (live(P(0))) deposit(P(0), mul(g, P(1)));
                if (live(P(1))) deposit(P(1), mul(g, P(0)));
                break;
            case Op::Neg:
                if (live(P(0))) deposit(P(0), neg(g));
                break;
            case Op::Exp:
                if (live(P(0))) deposit(P(0), mul(g, i)); // d exp(x) = exp(x)
                break;
            case Op::Ln:
                if (live(P(0))) deposit(P(0), mul(g, pow_const(P(0), -1.0)));
                break;
            case Op::Tanh:
                // d tanh(x) = 1 - tanh(x)^2, reusing the tanh node itself
                if (live(P(0)))
                    deposit(P(0), mul(g, sub(constant(1.0), mul(i, i))));
                break;
            case Op::Relu:
                if (live(P(0))) deposit(P(0), mul(g, step(P(0))));
                break;
            case Op::Max:
                if (live(P(0))) deposit(P(0), mul(g, step(sub(P(0), P(1)))));
                if (live(P(1))) deposit(P(1), mul(g, step(sub(P(1), P(0)))));
                break;
            case Op::PowConst:
                if (live(P(0)))
                    deposit(P(0), mul(mul(g, constant(nd.aux)),
                                      pow_const(P(0), nd.aux - 1.0)));
                break;
            case Op::Sum:
                for (std::uint32_t k = 0; k < nd.parent_cnt; ++k)
                    if (live(P(k))) deposit(P(k), g);
                break;
            case Op::Dot: {
                const std::uint32_t half = nd.parent_cnt / 2;
                for (std::uint32_t k = 0; k < half; ++k) {
                    if (live(P(k))) deposit(P(k), mul(g, P(half + k)));
                    if (live(P(half + k))) deposit(P(half + k), mul(g, P(k)));
                }
                break;
            }
            case Op::Step:
                if (live(P(0))) deposit(P(0), constant(0.0));
                break;
        }
    }

    std::vector<NodeId> result;
    result.reserve(wrt.size());
    for (NodeId w : wrt) {
        if (w <= root && adjoint[w] != kInvalidNode)
            result.push_back(adjoint[w]);
        else
            result.push_back(constant(0.0));
    }
    return result;
}

// --- free functions -------------------------------------------------------------

std::vector<double> hvp(const LossBuilder& loss, std::span<const double> z,
                        std::span<const double> v) {
    if (z.size() != v.size())
        throw Error("shape mismatch: hvp direction has length " +
                    std::to_string(v.size()) + ", latent has " +
                    std::to_string(z.size()));
    Graph g;
    std::vector<NodeId> zn(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) zn[i] = g.leaf(z[i]);
    NodeId root = loss(g, zn);
    std::vector<NodeId> grad = g.gradient(root, zn);
    std::vector<NodeId> vn(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) vn[i] = g.constant(v[i]);
    NodeId directional = g.dot(grad, vn);
    std::vector<NodeId> hv = g.gradient(directional, zn);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = g.evaluate(hv[i]);
    return out;
}

std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> z, double h) {
    if (!(h > 0.0)) throw Error("finite difference step must be positive");
    std::vector<double> probe(z.begin(), z.end());
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double zi = probe[i];
        probe[i] = zi + h;
        const double fp = f(probe);
        probe[i] = zi - h;
        const double fm = f(probe);
        probe[i] = zi;
        out[i] = (fp - fm) / (2.0 * h);
    }
    return out;
}

} // namespace grlsm::ad
