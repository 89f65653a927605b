#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pktseer/tensor.hpp"

namespace pktseer::nn {

struct ModelConfig {
    int64_t vocab_size = 512;
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t n_enc_layers = 2;
    int64_t n_dec_layers = 2;
    int64_t d_ff = 256;
    int64_t max_seq_len = 192;
    float dropout_prob = 0.1f;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter store for one model. Ordered map so checkpoint layout and
// optimizer iteration are deterministic.
struct ModelParams {
    std::string kind;  // "predictor" | "assessor" | "classifier"
    ModelConfig config;
    std::string vocab_digest;                 // hex digest of the vocabulary file contents
    std::vector<std::string> kept_features;  // serialization contract the model was trained on
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

ModelParams init_params(const std::string& kind, const ModelConfig& cfg, uint64_t seed);

// deep copy of values (fresh graph leaves, grads zeroed)
ModelParams clone_params(const ModelParams& p);

void zero_grads(ModelParams& p);

// dropout context: null rng means evaluation mode
struct ForwardCtx {
    DetRng* rng = nullptr;
    float dropout_prob = 0.0f;
};

// softmax(Q K^T / sqrt(d_k) (+ -inf at masked)) V
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttnMask& mask = nullptr);

// h heads over learned projections from the `prefix` parameter group
// (Wq/bq/Wk/bk/Wv/bv/Wo/bo)
Tensor multi_head_attention(const ModelParams& p, const std::string& prefix, const Tensor& x_q,
                            const Tensor& x_kv, const AttnMask& mask);

// row i = W_e[ids[i]] + W_p[i]
Tensor embed(const std::vector<int32_t>& ids, const Tensor& w_e, const Tensor& w_p);

// Pre-norm residual block: self-attention, optional cross-attention over
// cross_context, then a GELU feed-forward.
Tensor transformer_block(const ModelParams& p, const std::string& prefix, const Tensor& h_prev,
                         const AttnMask& self_mask, const Tensor* cross_context = nullptr,
                         const AttnMask& cross_mask = nullptr, const ForwardCtx& ctx = {});

Tensor encoder_forward(const ModelParams& p, const std::vector<int32_t>& ids,
                       const ForwardCtx& ctx = {});
Tensor decoder_forward(const ModelParams& p, const std::vector<int32_t>& ids,
                       const Tensor& enc_out, const ForwardCtx& ctx = {});

Tensor lm_logits(const Tensor& hidden, const Tensor& w_v);

// mean over positions of -log softmax(logits[i])[targets[i]]
Tensor autoregressive_nll(const Tensor& logits, const std::vector<int32_t>& targets);

// single-example categorical cross-entropy; optional class weight scales it
Tensor classification_loss(const Tensor& logits, int32_t label, float class_weight = 1.0f);

struct MlmLoss {
    Tensor loss;
    bool empty_mask = false;  // no masked positions; loss defined as 0
};

// mean NLL over masked positions only
MlmLoss mlm_loss(const Tensor& hidden, const Tensor& w_v,
                 const std::vector<size_t>& masked_positions,
                 const std::vector<int32_t>& target_ids);

// --- optimizer ----------------------------------------------------------------

struct AdamState {
    int64_t t = 0;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments;
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// one bias-corrected update from the accumulated gradients
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg);

// --- checkpoints ----------------------------------------------------------------

// Versioned binary container: magic PKTSEER1, a length-prefixed JSON config,
// then per-parameter records (length-prefixed name, rank, dims as u64 LE,
// float32 LE data). Round-trips bit-exactly.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);

void save_checkpoint_file(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint_file(const std::string& path);

}  // namespace pktseer::nn
