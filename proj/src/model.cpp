#include "grlsm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "grlsm/numfmt.hpp"
#include "grlsm/rng.hpp"

namespace grlsm {

using ad::Graph;
using ad::NodeId;

namespace {

constexpr const char* kWeightNames[9] = {
    "embedding", "enc_w1", "enc_b1", "enc_wz", "enc_bz",
    "dec_w1",    "dec_b1", "dec_wo", "dec_bo",
};

void check_token(int id, std::size_t vocab_size) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
        throw Error("unknown token id " + std::to_string(id));
}

double lse_shifted(std::span<const double> logits) {
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double acc = 0.0;
    for (double l : logits) acc += std::exp(l - m);
    return m + std::log(acc);
}

} // namespace

void ModelDims::validate() const {
    if (window < 1 || embed_dim < 1 || hidden_dim < 1 || latent_dim < 1)
        throw ConfigError("model dimensions must all be >= 1");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
    reg.validate();
}

bool ModelParams::operator==(const ModelParams& o) const {
    return vocab == o.vocab && dims.window == o.dims.window &&
           dims.embed_dim == o.dims.embed_dim &&
           dims.hidden_dim == o.dims.hidden_dim &&
           dims.latent_dim == o.dims.latent_dim && embedding == o.embedding &&
           enc_w1 == o.enc_w1 && enc_b1 == o.enc_b1 && enc_wz == o.enc_wz &&
           enc_bz == o.enc_bz && dec_w1 == o.dec_w1 && dec_b1 == o.dec_b1 &&
           dec_wo == o.dec_wo && dec_bo == o.dec_bo;
}

ModelParams init_model(const Vocab& vocab, const ModelDims& dims,
                       std::uint64_t seed) {
    dims.validate();
    if (vocab.size() < 2)
        throw ConfigError("vocabulary needs at least pad plus one symbol");
    const int v = static_cast<int>(vocab.size());
    const int w = dims.window, e = dims.embed_dim, h = dims.hidden_dim,
              d = dims.latent_dim;

    ModelParams p;
    p.vocab = vocab;
    p.dims = dims;
    p.embedding = Matrix::zeros(v, e);
    p.enc_w1 = Matrix::zeros(h, w * e);
    p.enc_b1.assign(std::size_t(h), 0.0);
    p.enc_wz = Matrix::zeros(d, h);
    p.enc_bz.assign(std::size_t(d), 0.0);
    p.dec_w1 = Matrix::zeros(h, d);
    p.dec_b1.assign(std::size_t(h), 0.0);
    p.dec_wo = Matrix::zeros(v, h);
    p.dec_bo.assign(std::size_t(v), 0.0);

    auto rng = Xoshiro256pp::stream(seed, kStreamInit);
    auto fill = [&](std::vector<double>& data, int fan_in) {
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : data) x = rng.uniform(-s, s);
    };
    fill(p.embedding.data, e);
    fill(p.enc_w1.data, w * e);
    fill(p.enc_b1, w * e);
    fill(p.enc_wz.data, h);
    fill(p.enc_bz, h);
    fill(p.dec_w1.data, d);
    fill(p.dec_b1, d);
    fill(p.dec_wo.data, h);
    fill(p.dec_bo, h);
    return p;
}

// --- numeric forward ----------------------------------------------------------

std::vector<double> embed_window(const ModelParams& p,
                                 std::span<const int> window_tokens) {
    const int w = p.dims.window, e = p.dims.embed_dim;
    if (static_cast<int>(window_tokens.size()) != w)
        throw Error("shape mismatch: window length " +
                    std::to_string(window_tokens.size()) + ", expected " +
                    std::to_string(w));
    std::vector<double> out(std::size_t(w) * e);
    for (int i = 0; i < w; ++i) {
        check_token(window_tokens[i], p.vocab.size());
        for (int j = 0; j < e; ++j)
            out[std::size_t(i) * e + j] = p.embedding.at(window_tokens[i], j);
    }
    return out;
}

LatentVector encode_from_embedding(const ModelParams& p,
                                   std::span<const double> embedded) {
    const int h = p.dims.hidden_dim, d = p.dims.latent_dim;
    const int in = p.dims.window * p.dims.embed_dim;
    if (static_cast<int>(embedded.size()) != in)
        throw Error("shape mismatch: embedded input length " +
                    std::to_string(embedded.size()) + ", expected " +
                    std::to_string(in));
    std::vector<double> h1(std::size_t(h));
    for (int i = 0; i < h; ++i) {
        double acc = 0.0;
        for (int j = 0; j < in; ++j) acc += p.enc_w1.at(i, j) * embedded[j];
        h1[std::size_t(i)] = std::tanh(acc + p.enc_b1[std::size_t(i)]);
    }
    LatentVector z(std::size_t(d));
    for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) acc += p.enc_wz.at(k, i) * h1[std::size_t(i)];
        z[std::size_t(k)] = acc + p.enc_bz[std::size_t(k)];
    }
    return z;
}

LatentVector encode(const ModelParams& p, std::span<const int> window_tokens) {
    return encode_from_embedding(p, embed_window(p, window_tokens));
}

std::vector<double> decode(const ModelParams& p, const LatentVector& z) {
    const int h = p.dims.hidden_dim, d = p.dims.latent_dim;
    const int v = static_cast<int>(p.vocab.size());
    if (static_cast<int>(z.size()) != d)
        throw Error("shape mismatch: latent length " + std::to_string(z.size()) +
                    ", expected " + std::to_string(d));
    std::vector<double> h2(std::size_t(h));
    for (int i = 0; i < h; ++i) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += p.dec_w1.at(i, k) * z[std::size_t(k)];
        h2[std::size_t(i)] = std::tanh(acc + p.dec_b1[std::size_t(i)]);
    }
    std::vector<double> logits(std::size_t(v));
    for (int o = 0; o < v; ++o) {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) acc += p.dec_wo.at(o, i) * h2[std::size_t(i)];
        logits[std::size_t(o)] = acc + p.dec_bo[std::size_t(o)];
    }
    return logits;
}

double nll_of(const ModelParams& p, std::span<const int> window_tokens,
              int target) {
    check_token(target, p.vocab.size());
    auto logits = decode(p, encode(p, window_tokens));
    return lse_shifted(logits) - logits[std::size_t(target)];
}

std::pair<double, std::vector<LatentVector>> nll_batch(
    const ModelParams& p, std::span<const Example> batch) {
    if (batch.empty()) throw Error("empty batch");
    double acc = 0.0;
    std::vector<LatentVector> latents;
    latents.reserve(batch.size());
    for (const auto& ex : batch) {
        check_token(ex.target, p.vocab.size());
        LatentVector z = encode(p, ex.window);
        auto logits = decode(p, z);
        acc += lse_shifted(logits) - logits[std::size_t(ex.target)];
        latents.push_back(std::move(z));
    }
    return {acc / static_cast<double>(batch.size()), std::move(latents)};
}

std::vector<int> generate(const ModelParams& p, std::span<const int> prompt,
                          int max_len, double temperature, std::uint64_t seed) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    const int w = p.dims.window;
    for (int id : prompt) check_token(id, p.vocab.size());

    std::vector<int> window(std::size_t(w), p.vocab.pad_id());
    const std::size_t take = std::min<std::size_t>(prompt.size(), std::size_t(w));
    for (std::size_t i = 0; i < take; ++i)
        window[std::size_t(w) - take + i] = prompt[prompt.size() - take + i];

    auto rng = Xoshiro256pp::stream(seed, kStreamSample);
    std::vector<int> out;
    out.reserve(std::size_t(max_len));
    for (int n = 0; n < max_len; ++n) {
        auto logits = decode(p, encode(p, window));
        int next = 0;
        if (temperature == 0.0) {
            for (std::size_t i = 1; i < logits.size(); ++i)
                if (logits[i] > logits[std::size_t(next)])
                    next = static_cast<int>(i);
        } else {
            double mx = logits[0];
            for (double l : logits) mx = std::max(mx, l);
            double zsum = 0.0;
            for (double l : logits) zsum += std::exp((l - mx) / temperature);
            const double u = rng.uniform01() * zsum;
            double cum = 0.0;
            next = static_cast<int>(logits.size()) - 1;
            for (std::size_t i = 0; i < logits.size(); ++i) {
                cum += std::exp((logits[i] - mx) / temperature);
                if (cum >= u) {
                    next = static_cast<int>(i);
                    break;
                }
            }
        }
        out.push_back(next);
        window.erase(window.begin());
        window.push_back(next);
    }
    return out;
}

ad::LossBuilder decoder_nll_builder(const ModelParams& p, int target) {
    check_token(target, p.vocab.size());
    struct Dec {
        Matrix w1, wo;
        std::vector<double> b1, bo;
        int hidden, latent, vocab;
    };
    Dec dec{p.dec_w1, p.dec_wo, p.dec_b1, p.dec_bo,
            p.dims.hidden_dim, p.dims.latent_dim,
            static_cast<int>(p.vocab.size())};
    return [dec = std::move(dec), target](Graph& g,
                                          std::span<const NodeId> z) {
        if (static_cast<int>(z.size()) != dec.latent)
            throw Error("shape mismatch: latent length " +
                        std::to_string(z.size()));
        std::vector<NodeId> h2(std::size_t(dec.hidden));
        for (int i = 0; i < dec.hidden; ++i) {
            std::vector<NodeId> row(std::size_t(dec.latent));
            for (int k = 0; k < dec.latent; ++k)
                row[std::size_t(k)] = g.constant(dec.w1.at(i, k));
            h2[std::size_t(i)] = g.tanh(
                g.add(g.dot(row, z), g.constant(dec.b1[std::size_t(i)])));
        }
        std::vector<NodeId> exps(std::size_t(dec.vocab));
        NodeId target_logit = ad::kInvalidNode;
        for (int o = 0; o < dec.vocab; ++o) {
            std::vector<NodeId> row(std::size_t(dec.hidden));
            for (int i = 0; i < dec.hidden; ++i)
                row[std::size_t(i)] = g.constant(dec.wo.at(o, i));
            NodeId logit =
                g.add(g.dot(row, h2), g.constant(dec.bo[std::size_t(o)]));
            exps[std::size_t(o)] = g.exp(logit);
            if (o == target) target_logit = logit;
        }
        return g.sub(g.ln(g.sum(exps)), target_logit);
    };
}

double mean_latent_grad_penalty(const ModelParams& p,
                                std::span<const Example> batch) {
    if (batch.empty()) throw Error("empty batch");
    double acc = 0.0;
    for (const auto& ex : batch) {
        LatentVector z = encode(p, ex.window);
        acc += grad_penalty(decoder_nll_builder(p, ex.target), z);
    }
    return acc / static_cast<double>(batch.size());
}

// --- parameter flattening --------------------------------------------------------

namespace {

template <class Fn>
void for_each_tensor(const ModelParams& p, Fn&& fn) {
    fn(kWeightNames[0], p.embedding.data);
    fn(kWeightNames[1], p.enc_w1.data);
    fn(kWeightNames[2], p.enc_b1);
    fn(kWeightNames[3], p.enc_wz.data);
    fn(kWeightNames[4], p.enc_bz);
    fn(kWeightNames[5], p.dec_w1.data);
    fn(kWeightNames[6], p.dec_b1);
    fn(kWeightNames[7], p.dec_wo.data);
    fn(kWeightNames[8], p.dec_bo);
}

template <class Fn>
void for_each_tensor_mut(ModelParams& p, Fn&& fn) {
    fn(p.embedding.data);
    fn(p.enc_w1.data);
    fn(p.enc_b1);
    fn(p.enc_wz.data);
    fn(p.enc_bz);
    fn(p.dec_w1.data);
    fn(p.dec_b1);
    fn(p.dec_wo.data);
    fn(p.dec_bo);
}

} // namespace

std::vector<double> flatten_params(const ModelParams& p) {
    std::vector<double> out;
    for_each_tensor(p, [&](const char*, const std::vector<double>& t) {
        out.insert(out.end(), t.begin(), t.end());
    });
    return out;
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for_each_tensor(p, [&](const char*, const std::vector<double>& t) {
        n += t.size();
    });
    return n;
}

// --- graph construction ------------------------------------------------------------

namespace {

// All parameters as graph leaves, in flatten_params order, plus the model
// forward pass emitted symbolically.
struct GraphModel {
    Graph& g;
    const ModelParams& p;
    std::vector<NodeId> all;
    std::size_t off[9];

    GraphModel(Graph& graph, const ModelParams& params) : g(graph), p(params) {
        std::size_t i = 0;
        for_each_tensor(p, [&](const char*, const std::vector<double>& t) {
            off[i++] = all.size();
            for (double x : t) all.push_back(g.leaf(x));
        });
    }

    std::span<const NodeId> tensor(int idx, std::size_t count) const {
        return {all.data() + off[idx], count};
    }

    std::vector<NodeId> encode_nodes(std::span<const int> window) const {
        const int w = p.dims.window, e = p.dims.embed_dim,
                  h = p.dims.hidden_dim, d = p.dims.latent_dim;
        auto embedding = tensor(0, p.embedding.data.size());
        auto enc_w1 = tensor(1, p.enc_w1.data.size());
        auto enc_b1 = tensor(2, p.enc_b1.size());
        auto enc_wz = tensor(3, p.enc_wz.data.size());
        auto enc_bz = tensor(4, p.enc_bz.size());

        std::vector<NodeId> emb(std::size_t(w) * e);
        for (int i = 0; i < w; ++i) {
            check_token(window[std::size_t(i)], p.vocab.size());
            for (int j = 0; j < e; ++j)
                emb[std::size_t(i) * e + j] =
                    embedding[std::size_t(window[std::size_t(i)]) * e + j];
        }
        std::vector<NodeId> h1(std::size_t(h));
        for (int i = 0; i < h; ++i) {
            auto row = enc_w1.subspan(std::size_t(i) * w * e, std::size_t(w) * e);
            h1[std::size_t(i)] =
                g.tanh(g.add(g.dot(row, emb), enc_b1[std::size_t(i)]));
        }
        std::vector<NodeId> z(std::size_t(d));
        for (int k = 0; k < d; ++k) {
            auto row = enc_wz.subspan(std::size_t(k) * h, std::size_t(h));
            z[std::size_t(k)] = g.add(g.dot(row, h1), enc_bz[std::size_t(k)]);
        }
        return z;
    }

    NodeId nll_node(std::span<const NodeId> z, int target) const {
        const int h = p.dims.hidden_dim, d = p.dims.latent_dim;
        const int v = static_cast<int>(p.vocab.size());
        check_token(target, p.vocab.size());
        auto dec_w1 = tensor(5, p.dec_w1.data.size());
        auto dec_b1 = tensor(6, p.dec_b1.size());
        auto dec_wo = tensor(7, p.dec_wo.data.size());
        auto dec_bo = tensor(8, p.dec_bo.size());

        std::vector<NodeId> h2(std::size_t(h));
        for (int i = 0; i < h; ++i) {
            auto row = dec_w1.subspan(std::size_t(i) * d, std::size_t(d));
            h2[std::size_t(i)] =
                g.tanh(g.add(g.dot(row, z), dec_b1[std::size_t(i)]));
        }
        std::vector<NodeId> exps(std::size_t(v));
        NodeId target_logit = ad::kInvalidNode;
        for (int o = 0; o < v; ++o) {
            auto row = dec_wo.subspan(std::size_t(o) * h, std::size_t(h));
            NodeId logit = g.add(g.dot(row, h2), dec_bo[std::size_t(o)]);
            exps[std::size_t(o)] = g.exp(logit);
            if (o == target) target_logit = logit;
        }
        return g.sub(g.ln(g.sum(exps)), target_logit);
    }
};

} // namespace

BatchStep batch_loss_and_grads(const ModelParams& p,
                               std::span<const Example> batch,
                               std::span<const std::uint64_t> latent_keys,
                               const RegConfig& reg, std::uint64_t seed,
                               Graph& scratch) {
    if (batch.empty()) throw Error("empty batch");
    if (batch.size() != latent_keys.size())
        throw Error("latent_keys must match the batch size");
    scratch.clear();
    GraphModel gm(scratch, p);

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<NodeId> nlls;
    std::vector<NodeId> regs;
    nlls.reserve(batch.size());
    double reg_value_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto z = gm.encode_nodes(batch[i].window);
        NodeId nll = gm.nll_node(z, batch[i].target);
        nlls.push_back(nll);
        if (reg.lambda > 0.0) {
            RegTerm term =
                regularizer_node(scratch, nll, z, reg, seed, latent_keys[i]);
            regs.push_back(term.node);
            reg_value_sum += term.value;
        }
    }
    NodeId base = scratch.mul(scratch.constant(inv_b), scratch.sum(nlls));
    NodeId total = base;
    if (!regs.empty())
        total = scratch.add(
            base, scratch.mul(scratch.constant(reg.lambda * inv_b),
                              scratch.sum(regs)));

    BatchStep out;
    out.loss = scratch.evaluate(total);
    out.base_loss = scratch.evaluate(base);
    out.reg_mean = regs.empty() ? 0.0 : reg_value_sum * inv_b;

    auto grads = scratch.gradient(total, gm.all);
    out.grads.resize(grads.size());
    for (std::size_t i = 0; i < grads.size(); ++i)
        out.grads[i] = scratch.evaluate(grads[i]);
    return out;
}

namespace {

void apply_update(ModelParams& p, std::span<const double> grads, double lr) {
    std::size_t i = 0;
    for_each_tensor_mut(p, [&](std::vector<double>& t) {
        for (auto& x : t) x -= lr * grads[i++];
    });
}

} // namespace

TrainResult train(ModelParams& p, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();

    // per-document example ranges (examples are in document order)
    const std::size_t ndocs = data.docs.size();
    std::vector<std::size_t> doc_begin(ndocs + 1, 0);
    for (std::size_t i = 0; i < ndocs; ++i) {
        const std::size_t toks = data.docs[i].tokens.size();
        doc_begin[i + 1] = doc_begin[i] + (toks > 0 ? toks - 1 : 0);
    }
    if (doc_begin[ndocs] != data.examples.size())
        throw Error("dataset examples do not line up with documents");

    // 90/10 split by document, from the split stream
    std::vector<std::size_t> order(ndocs);
    for (std::size_t i = 0; i < ndocs; ++i) order[i] = i;
    auto split_rng = Xoshiro256pp::stream(cfg.seed, kStreamSplit);
    split_rng.shuffle(order);
    const std::size_t n_val = ndocs >= 2 ? std::max<std::size_t>(1, ndocs / 10) : 0;
    if (cfg.patience > 0 && n_val == 0)
        throw ConfigError("early stopping needs >= 2 documents for a validation split");
    std::vector<std::size_t> val_docs(order.end() - n_val, order.end());
    std::vector<std::size_t> train_docs(order.begin(), order.end() - n_val);
    std::sort(val_docs.begin(), val_docs.end());
    std::sort(train_docs.begin(), train_docs.end());

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t d : train_docs)
        for (std::size_t k = doc_begin[d]; k < doc_begin[d + 1]; ++k)
            train_idx.push_back(k);
    for (std::size_t d : val_docs)
        for (std::size_t k = doc_begin[d]; k < doc_begin[d + 1]; ++k)
            val_idx.push_back(k);
    if (train_idx.empty()) throw DataError("corpus yields no training batches");

    std::vector<Example> val_examples;
    val_examples.reserve(val_idx.size());
    for (std::size_t k : val_idx) val_examples.push_back(data.examples[k]);

    auto batch_rng = Xoshiro256pp::stream(cfg.seed, kStreamBatch);
    Graph scratch;
    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int fails = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        batch_rng.shuffle(train_idx);
        double loss_sum = 0.0, reg_sum = 0.0;
        const std::size_t nb = std::size_t(cfg.batch);
        for (std::size_t start = 0; start < train_idx.size(); start += nb) {
            const std::size_t count =
                std::min(nb, train_idx.size() - start);
            std::vector<Example> batch;
            std::vector<std::uint64_t> keys;
            batch.reserve(count);
            keys.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch.push_back(data.examples[train_idx[start + i]]);
                keys.push_back(train_idx[start + i]);
            }
            BatchStep step = batch_loss_and_grads(p, batch, keys, cfg.reg,
                                                  cfg.seed, scratch);
            if (!std::isfinite(step.loss))
                throw Error("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(start / nb));
            apply_update(p, step.grads, cfg.lr);
            loss_sum += step.loss * static_cast<double>(count);
            reg_sum += step.reg_mean * static_cast<double>(count);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
        rec.reg_mean =
            cfg.reg.lambda * reg_sum / static_cast<double>(train_idx.size());
        rec.val_loss = val_examples.empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : nll_batch(p, val_examples).first;
        result.history.push_back(rec);

        if (cfg.patience > 0) {
            if (rec.val_loss < best_val - cfg.min_delta) {
                best_val = rec.val_loss;
                fails = 0;
            } else if (++fails >= cfg.patience) {
                break;
            }
        }
    }
    return result;
}

// --- model file ----------------------------------------------------------------------

namespace {

std::string json_escape_byte(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (c == '"') return "\\\"";
    if (c == '\\') return "\\\\";
    if (u < 0x20 || u >= 0x7F) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "\\u%04x", u);
        return buf;
    }
    return std::string(1, c);
}

char byte_from_json_string(const std::string& s, const char* what) {
    if (s.size() == 1) return s[0];
    // two-byte UTF-8 for codepoints up to 0xFF
    if (s.size() == 2 && (static_cast<unsigned char>(s[0]) & 0xE0) == 0xC0) {
        const int cp = ((static_cast<unsigned char>(s[0]) & 0x1F) << 6) |
                       (static_cast<unsigned char>(s[1]) & 0x3F);
        if (cp <= 0xFF) return static_cast<char>(cp);
    }
    throw DataError(std::string("model parse: ") + what +
                    " must be a single-byte string");
}

void emit_tensor(std::ostream& out, const char* name, int rows, int cols,
                 const std::vector<double>& data) {
    out << "    \"" << name << "\": {\"shape\": [" << rows << ", " << cols
        << "], \"data\": [";
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (i) out << ", ";
        out << fmt_double(data[i]);
    }
    out << "]}";
}

const nlohmann::json& require(const nlohmann::json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end())
        throw DataError(std::string("model parse: missing field '") + field +
                        "'");
    return *it;
}

std::vector<double> parse_tensor(const nlohmann::json& weights,
                                 const char* name, int rows, int cols) {
    auto it = weights.find(name);
    if (it == weights.end())
        throw DataError(std::string("model parse: missing weight '") + name +
                        "'");
    const auto& shape = require(*it, "shape");
    if (!shape.is_array() || shape.size() != 2 ||
        shape[0].get<int>() != rows || shape[1].get<int>() != cols)
        throw DataError(std::string("shape mismatch in weight '") + name +
                        "': expected [" + std::to_string(rows) + ", " +
                        std::to_string(cols) + "]");
    const auto& data = require(*it, "data");
    if (!data.is_array() ||
        data.size() != static_cast<std::size_t>(rows) * cols)
        throw DataError(std::string("shape mismatch in weight '") + name +
                        "': data length " + std::to_string(data.size()) +
                        " != " + std::to_string(std::size_t(rows) * cols));
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& x : data) out.push_back(x.get<double>());
    return out;
}

std::string frobenius_mode_name(FrobeniusMode m) {
    return m == FrobeniusMode::Exact ? "exact" : "hutchinson";
}
std::string reg_mode_name(RegMode m) {
    return m == RegMode::Analysis ? "analysis" : "full";
}

} // namespace

void save_model(const ModelParams& p, const TrainConfig& cfg,
                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);

    out << "{\n  \"vocab\": [";
    for (std::size_t i = 0; i < p.vocab.size(); ++i) {
        if (i) out << ", ";
        out << '"' << json_escape_byte(p.vocab.chars()[i]) << '"';
    }
    out << "],\n";
    out << "  \"window\": " << p.dims.window << ",\n";
    out << "  \"dims\": {\"embed\": " << p.dims.embed_dim
        << ", \"hidden\": " << p.dims.hidden_dim
        << ", \"latent\": " << p.dims.latent_dim << "},\n";
    out << "  \"weights\": {\n";
    const int v = static_cast<int>(p.vocab.size());
    const int w = p.dims.window, e = p.dims.embed_dim, h = p.dims.hidden_dim,
              d = p.dims.latent_dim;
    emit_tensor(out, "embedding", v, e, p.embedding.data);
    out << ",\n";
    emit_tensor(out, "enc_w1", h, w * e, p.enc_w1.data);
    out << ",\n";
    emit_tensor(out, "enc_b1", h, 1, p.enc_b1);
    out << ",\n";
    emit_tensor(out, "enc_wz", d, h, p.enc_wz.data);
    out << ",\n";
    emit_tensor(out, "enc_bz", d, 1, p.enc_bz);
    out << ",\n";
    emit_tensor(out, "dec_w1", h, d, p.dec_w1.data);
    out << ",\n";
    emit_tensor(out, "dec_b1", h, 1, p.dec_b1);
    out << ",\n";
    emit_tensor(out, "dec_wo", v, h, p.dec_wo.data);
    out << ",\n";
    emit_tensor(out, "dec_bo", v, 1, p.dec_bo);
    out << "\n  },\n";
    out << "  \"config\": {\"lr\": " << fmt_double(cfg.lr)
        << ", \"batch\": " << cfg.batch << ", \"epochs\": " << cfg.epochs
        << ", \"patience\": " << cfg.patience
        << ", \"min_delta\": " << fmt_double(cfg.min_delta)
        << ", \"seed\": " << cfg.seed << ", \"reg\": {\"lambda\": "
        << fmt_double(cfg.reg.lambda) << ", \"beta\": " << fmt_double(cfg.reg.beta)
        << ", \"gamma\": " << fmt_double(cfg.reg.gamma)
        << ", \"delta\": " << fmt_double(cfg.reg.delta)
        << ", \"frobenius_mode\": \"" << frobenius_mode_name(cfg.reg.frobenius_mode)
        << "\", \"hutchinson_samples\": " << cfg.reg.hutchinson_samples
        << ", \"power_iters\": " << cfg.reg.power_iters
        << ", \"power_tol\": " << fmt_double(cfg.reg.power_tol)
        << ", \"reg_mode\": \"" << reg_mode_name(cfg.reg.reg_mode) << "\"}}\n";
    out << "}\n";
    if (!out) throw DataError("write failed: " + path);
}

ModelParams load_model(const std::string& path, TrainConfig* cfg_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model parse: ") + e.what());
    }

    try {
        const auto& jv = require(j, "vocab");
        std::vector<char> chars;
        for (const auto& s : jv)
            chars.push_back(
                byte_from_json_string(s.get<std::string>(), "vocab entry"));
        Vocab vocab(std::move(chars));

        ModelDims dims;
        dims.window = require(j, "window").get<int>();
        const auto& jd = require(j, "dims");
        dims.embed_dim = require(jd, "embed").get<int>();
        dims.hidden_dim = require(jd, "hidden").get<int>();
        dims.latent_dim = require(jd, "latent").get<int>();
        dims.validate();

        const auto& jw = require(j, "weights");
        for (auto it = jw.begin(); it != jw.end(); ++it) {
            bool known = false;
            for (const char* name : kWeightNames)
                known = known || it.key() == name;
            if (!known)
                throw DataError("model parse: unknown weight '" + it.key() +
                                "'");
        }
        const int v = static_cast<int>(vocab.size());
        const int w = dims.window, e = dims.embed_dim, h = dims.hidden_dim,
                  d = dims.latent_dim;
        ModelParams p;
        p.vocab = std::move(vocab);
        p.dims = dims;
        p.embedding = Matrix{v, e, parse_tensor(jw, "embedding", v, e)};
        p.enc_w1 = Matrix{h, w * e, parse_tensor(jw, "enc_w1", h, w * e)};
        p.enc_b1 = parse_tensor(jw, "enc_b1", h, 1);
        p.enc_wz = Matrix{d, h, parse_tensor(jw, "enc_wz", d, h)};
        p.enc_bz = parse_tensor(jw, "enc_bz", d, 1);
        p.dec_w1 = Matrix{h, d, parse_tensor(jw, "dec_w1", h, d)};
        p.dec_b1 = parse_tensor(jw, "dec_b1", h, 1);
        p.dec_wo = Matrix{v, h, parse_tensor(jw, "dec_wo", v, h)};
        p.dec_bo = parse_tensor(jw, "dec_bo", v, 1);

        if (cfg_out) {
            const auto& jc = require(j, "config");
            TrainConfig cfg;
            cfg.lr = require(jc, "lr").get<double>();
            cfg.batch = require(jc, "batch").get<int>();
            cfg.epochs = require(jc, "epochs").get<int>();
            cfg.patience = require(jc, "patience").get<int>();
            cfg.min_delta = require(jc, "min_delta").get<double>();
            cfg.seed = require(jc, "seed").get<std::uint64_t>();
            const auto& jr = require(jc, "reg");
            cfg.reg.lambda = require(jr, "lambda").get<double>();
            cfg.reg.beta = require(jr, "beta").get<double>();
            cfg.reg.gamma = require(jr, "gamma").get<double>();
            cfg.reg.delta = require(jr, "delta").get<double>();
            const std::string fm =
                require(jr, "frobenius_mode").get<std::string>();
            if (fm == "exact")
                cfg.reg.frobenius_mode = FrobeniusMode::Exact;
            else if (fm == "hutchinson")
                cfg.reg.frobenius_mode = FrobeniusMode::Hutchinson;
            else
                throw DataError("model parse: bad frobenius_mode '" + fm + "'");
            cfg.reg.hutchinson_samples =
                require(jr, "hutchinson_samples").get<int>();
            cfg.reg.power_iters = require(jr, "power_iters").get<int>();
            cfg.reg.power_tol = require(jr, "power_tol").get<double>();
            const std::string rm = require(jr, "reg_mode").get<std::string>();
            if (rm == "analysis")
                cfg.reg.reg_mode = RegMode::Analysis;
            else if (rm == "full")
                cfg.reg.reg_mode = RegMode::Full;
            else
                throw DataError("model parse: bad reg_mode '" + rm + "'");
            *cfg_out = cfg;
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model parse: ") + e.what());
    }
}

} // namespace grlsm
