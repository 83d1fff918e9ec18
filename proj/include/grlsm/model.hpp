#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "grlsm/autodiff.hpp"
#include "grlsm/corpus.hpp"
#include "grlsm/regularizer.hpp"

namespace grlsm {

struct ModelDims {
    int window = 8;
    int embed_dim = 4;
    int hidden_dim = 16;
    int latent_dim = 8;

    void validate() const;
};

struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> data; // row-major

    static Matrix zeros(int r, int c) {
        return Matrix{r, c, std::vector<double>(std::size_t(r) * c, 0.0)};
    }
    double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
    double at(int r, int c) const { return data[std::size_t(r) * cols + c]; }
    bool operator==(const Matrix&) const = default;
};

// Windowed encoder -> linear latent bottleneck z -> decoder over the
// vocabulary:
//   e  = concat of embedding rows for the window tokens
//   h1 = tanh(enc_w1 e + enc_b1)
//   z  = enc_wz h1 + enc_bz                (linear bottleneck)
//   h2 = tanh(dec_w1 z + dec_b1)
//   l  = dec_wo h2 + dec_bo                (logits)
struct ModelParams {
    Vocab vocab;
    ModelDims dims;
    Matrix embedding;            // |vocab| x embed_dim
    Matrix enc_w1;               // hidden x (window*embed)
    std::vector<double> enc_b1;  // hidden
    Matrix enc_wz;               // latent x hidden
    std::vector<double> enc_bz;  // latent
    Matrix dec_w1;               // hidden x latent
    std::vector<double> dec_b1;  // hidden
    Matrix dec_wo;               // |vocab| x hidden
    std::vector<double> dec_bo;  // |vocab|

    bool operator==(const ModelParams&) const;
};

struct TrainConfig {
    double lr = 0.05;
    int batch = 16;
    int epochs = 5;
    int patience = 0;     // 0 disables early stopping
    double min_delta = 0.0;
    std::uint64_t seed = 1;
    RegConfig reg;

    void validate() const;
};

// Initialization: every tensor is drawn uniform(-s, s) with s = 1/sqrt(fan_in)
// from the (seed, init) stream, row-major, in the fixed order embedding,
// enc_w1, enc_b1, enc_wz, enc_bz, dec_w1, dec_b1, dec_wo, dec_bo. fan_in is
// embed_dim for the embedding and the input dimension of the layer otherwise
// (biases use their layer's fan_in).
ModelParams init_model(const Vocab& vocab, const ModelDims& dims,
                       std::uint64_t seed);

// --- numeric forward paths ---------------------------------------------------

// Concatenated embedding rows for a token window; length window*embed_dim.
std::vector<double> embed_window(const ModelParams& p,
                                 std::span<const int> window_tokens);
// Encoder from an already-embedded input (the perturbation hook).
LatentVector encode_from_embedding(const ModelParams& p,
                                   std::span<const double> embedded);
LatentVector encode(const ModelParams& p, std::span<const int> window_tokens);
std::vector<double> decode(const ModelParams& p, const LatentVector& z);

// Next-token negative log-likelihood of one example, log-sum-exp shifted.
double nll_of(const ModelParams& p, std::span<const int> window_tokens,
              int target);
// Mean NLL over a batch plus the batch latents.
std::pair<double, std::vector<LatentVector>> nll_batch(
    const ModelParams& p, std::span<const Example> batch);

// Autoregressive continuation of prompt; prompts shorter than the window
// are left-padded with the pad symbol. temperature == 0 is greedy argmax
// (ties to the lowest id); otherwise softmax sampling from the
// (seed, sample) stream. Returns exactly max_len generated ids.
std::vector<int> generate(const ModelParams& p, std::span<const int> prompt,
                          int max_len, double temperature, std::uint64_t seed);

// Decoder cross-entropy at fixed parameters as a loss builder over z, for
// latent-space analyses (regularizer values at the latent, flow demos).
ad::LossBuilder decoder_nll_builder(const ModelParams& p, int target);

// Mean grad_penalty of the decoder loss at the latents of held-out pairs.
double mean_latent_grad_penalty(const ModelParams& p,
                                std::span<const Example> batch);

// --- training -----------------------------------------------------------------

// Flattened parameter vector in the documented init order.
std::vector<double> flatten_params(const ModelParams& p);
std::size_t param_count(const ModelParams& p);

struct BatchStep {
    double loss = 0.0;      // base + lambda * mean R
    double base_loss = 0.0; // mean NLL
    double reg_mean = 0.0;  // mean R value over the batch (0 when lambda == 0)
    std::vector<double> grads; // d loss / d params, flattened
};

// One GRLSM batch: builds the loss graph (per-example NLL, latent
// regularizer via nested differentiation), differentiates w.r.t. all
// weights. latent_keys are the per-example probe-stream keys (dataset
// indices in the trainer). scratch is reused across calls.
BatchStep batch_loss_and_grads(const ModelParams& p,
                               std::span<const Example> batch,
                               std::span<const std::uint64_t> latent_keys,
                               const RegConfig& reg, std::uint64_t seed,
                               ad::Graph& scratch);

struct EpochRecord {
    int epoch = 0;          // 1-based
    double train_loss = 0.0;
    double reg_mean = 0.0;  // lambda * mean R over the epoch
    double val_loss = 0.0;  // mean NLL on the validation split (NaN if none)
};

struct TrainResult {
    std::vector<EpochRecord> history;
};

// Plain SGD on the regularized loss. 90/10 train/validation split by
// document from the (seed, split) stream; per-epoch shuffling from the
// (seed, batch) stream; early stopping once validation loss fails to
// improve by min_delta for patience consecutive epochs.
TrainResult train(ModelParams& p, const Dataset& data, const TrainConfig& cfg);

// --- model file -----------------------------------------------------------------

// Single JSON document: vocab (single-character strings), window, dims
// {embed, hidden, latent}, weights (name -> {shape: [r, c], data: flat
// row-major}), config (the TrainConfig used). Floats carry 17 significant
// digits, so load(save(p)) == p bit-exactly.
void save_model(const ModelParams& p, const TrainConfig& cfg,
                const std::string& path);
ModelParams load_model(const std::string& path, TrainConfig* cfg_out = nullptr);

} // namespace grlsm
