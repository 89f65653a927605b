#include "pktseer/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace pktseer::nn {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
        throw UsageError("model config: d_model must be a positive multiple of n_heads");
    if (max_seq_len < 2) throw UsageError("model config: max_seq_len must be at least 2");
    if (vocab_size < 2 || d_ff <= 0 || n_enc_layers < 0 || n_dec_layers < 0)
        throw UsageError("model config: bad dimensions");
    if (dropout_prob < 0.0f || dropout_prob >= 1.0f)
        throw UsageError("model config: dropout_prob must be in [0,1)");
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw UsageError("model params: unknown tensor: " + name);
    return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw UsageError("model params: unknown tensor: " + name);
    return it->second;
}

namespace {

Tensor init_normal(std::vector<int64_t> shape, DetRng& rng, float std_dev) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = static_cast<float>(rng.normal(0.0, std_dev));
    return t;
}

Tensor init_const(std::vector<int64_t> shape, float value) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = value;
    return t;
}

void add_layer_norm(ModelParams& p, const std::string& prefix, int64_t d) {
    p.tensors[prefix + ".g"] = init_const({d}, 1.0f);
    p.tensors[prefix + ".b"] = init_const({d}, 0.0f);
}

void add_attention(ModelParams& p, const std::string& prefix, int64_t d, DetRng& rng) {
    for (const char* w : {"Wq", "Wk", "Wv", "Wo"})
        p.tensors[prefix + "." + w] = init_normal({d, d}, rng, 0.02f);
    for (const char* b : {"bq", "bk", "bv", "bo"})
        p.tensors[prefix + "." + b] = init_const({d}, 0.0f);
}

void add_ffn(ModelParams& p, const std::string& prefix, int64_t d, int64_t d_ff, DetRng& rng) {
    p.tensors[prefix + ".W1"] = init_normal({d, d_ff}, rng, 0.02f);
    p.tensors[prefix + ".b1"] = init_const({d_ff}, 0.0f);
    p.tensors[prefix + ".W2"] = init_normal({d_ff, d}, rng, 0.02f);
    p.tensors[prefix + ".b2"] = init_const({d}, 0.0f);
}

}  // namespace

ModelParams init_params(const std::string& kind, const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (kind != "predictor" && kind != "assessor" && kind != "classifier")
        throw UsageError("init_params: unknown model kind: " + kind);

    ModelParams p;
    p.kind = kind;
    p.config = cfg;
    DetRng rng(mix_seed(seed, 0x696e6974));  // "init"

    p.tensors["tok_emb.W"] = init_normal({cfg.vocab_size, cfg.d_model}, rng, 0.02f);
    p.tensors["pos_emb.W"] = init_normal({cfg.max_seq_len, cfg.d_model}, rng, 0.02f);

    for (int64_t i = 0; i < cfg.n_enc_layers; ++i) {
        std::string pre = "enc." + std::to_string(i);
        add_layer_norm(p, pre + ".ln1", cfg.d_model);
        add_attention(p, pre + ".attn", cfg.d_model, rng);
        add_layer_norm(p, pre + ".ln2", cfg.d_model);
        add_ffn(p, pre + ".ffn", cfg.d_model, cfg.d_ff, rng);
    }

    bool wants_decoder = kind == "predictor" || kind == "classifier";
    if (wants_decoder) {
        for (int64_t i = 0; i < cfg.n_dec_layers; ++i) {
            std::string pre = "dec." + std::to_string(i);
            add_layer_norm(p, pre + ".ln1", cfg.d_model);
            add_attention(p, pre + ".self_attn", cfg.d_model, rng);
            add_layer_norm(p, pre + ".lnc", cfg.d_model);
            add_attention(p, pre + ".cross_attn", cfg.d_model, rng);
            add_layer_norm(p, pre + ".ln2", cfg.d_model);
            add_ffn(p, pre + ".ffn", cfg.d_model, cfg.d_ff, rng);
        }
    }

    if (kind == "predictor")
        p.tensors["lm_head.W"] = init_normal({cfg.d_model, cfg.vocab_size}, rng, 0.02f);
    if (kind == "assessor") {
        p.tensors["mlm_head.W"] = init_normal({cfg.d_model, cfg.vocab_size}, rng, 0.02f);
        p.tensors["pair_head.W"] = init_normal({cfg.d_model, 2}, rng, 0.02f);
        p.tensors["pair_head.b"] = init_const({2}, 0.0f);
    }
    if (kind == "classifier") {
        p.tensors["cls_head.W"] = init_normal({cfg.d_model, 2}, rng, 0.02f);
        p.tensors["cls_head.b"] = init_const({2}, 0.0f);
    }
    return p;
}

ModelParams clone_params(const ModelParams& p) {
    ModelParams out;
    out.kind = p.kind;
    out.config = p.config;
    out.vocab_digest = p.vocab_digest;
    out.kept_features = p.kept_features;
    for (const auto& [name, t] : p.tensors)
        out.tensors[name] = Tensor::from_data(t.shape(), t.data(), true);
    return out;
}

void zero_grads(ModelParams& p) {
    for (auto& [name, t] : p.tensors) t.zero_grad();
}

// ---------------------------------------------------------------------------
// forward ops

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttnMask& mask) {
    if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2 ||
        q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
        throw UsageError("attention: shape mismatch");
    float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(q.dim(1)));
    Tensor scores = scale(matmul_nt(q, k), inv_sqrt_dk);
    Tensor weights = softmax_rows(scores, mask);
    return matmul(weights, v);
}

Tensor multi_head_attention(const ModelParams& p, const std::string& prefix, const Tensor& x_q,
                            const Tensor& x_kv, const AttnMask& mask) {
    const ModelConfig& cfg = p.config;
    if (x_q.dim(1) != cfg.d_model || x_kv.dim(1) != cfg.d_model)
        throw UsageError("multi_head_attention: input width != d_model");
    Tensor q = add_bias(matmul(x_q, p.at(prefix + ".Wq")), p.at(prefix + ".bq"));
    Tensor k = add_bias(matmul(x_kv, p.at(prefix + ".Wk")), p.at(prefix + ".bk"));
    Tensor v = add_bias(matmul(x_kv, p.at(prefix + ".Wv")), p.at(prefix + ".bv"));

    int64_t d_head = cfg.d_model / cfg.n_heads;
    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg.n_heads));
    for (int64_t h = 0; h < cfg.n_heads; ++h) {
        int64_t c0 = h * d_head, c1 = c0 + d_head;
        heads.push_back(
            attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1), slice_cols(v, c0, c1), mask));
    }
    Tensor merged = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
    return add_bias(matmul(merged, p.at(prefix + ".Wo")), p.at(prefix + ".bo"));
}

Tensor embed(const std::vector<int32_t>& ids, const Tensor& w_e, const Tensor& w_p) {
    if (static_cast<int64_t>(ids.size()) > w_p.dim(0))
        throw UsageError("embed: sequence longer than max_seq_len");
    std::vector<int32_t> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    return add(gather_rows(w_e, ids), gather_rows(w_p, positions));
}

namespace {

Tensor ln(const ModelParams& p, const std::string& prefix, const Tensor& x) {
    return layer_norm(x, p.at(prefix + ".g"), p.at(prefix + ".b"));
}

Tensor ffn(const ModelParams& p, const std::string& prefix, const Tensor& x) {
    Tensor inner = gelu(add_bias(matmul(x, p.at(prefix + ".W1")), p.at(prefix + ".b1")));
    return add_bias(matmul(inner, p.at(prefix + ".W2")), p.at(prefix + ".b2"));
}

Tensor maybe_dropout(const Tensor& t, const ForwardCtx& ctx) {
    return dropout(t, ctx.dropout_prob, ctx.rng);
}

}  // namespace

Tensor transformer_block(const ModelParams& p, const std::string& prefix, const Tensor& h_prev,
                         const AttnMask& self_mask, const Tensor* cross_context,
                         const AttnMask& cross_mask, const ForwardCtx& ctx) {
    if (h_prev.dim(1) != p.config.d_model)
        throw UsageError("transformer_block: input width != d_model");
    std::string attn_name = p.has(prefix + ".attn.Wq") ? ".attn" : ".self_attn";
    Tensor x = h_prev;
    Tensor normed = ln(p, prefix + ".ln1", x);
    Tensor a = multi_head_attention(p, prefix + attn_name, normed, normed, self_mask);
    x = add(x, maybe_dropout(a, ctx));
    if (cross_context) {
        Tensor c = multi_head_attention(p, prefix + ".cross_attn", ln(p, prefix + ".lnc", x),
                                        *cross_context, cross_mask);
        x = add(x, maybe_dropout(c, ctx));
    }
    Tensor f = ffn(p, prefix + ".ffn", ln(p, prefix + ".ln2", x));
    return add(x, maybe_dropout(f, ctx));
}

Tensor encoder_forward(const ModelParams& p, const std::vector<int32_t>& ids,
                       const ForwardCtx& ctx) {
    if (ids.empty()) throw UsageError("encoder_forward: empty sequence");
    for (int32_t id : ids)
        if (id < 0 || id >= p.config.vocab_size)
            throw UsageError("encoder_forward: token id out of range");
    Tensor h = embed(ids, p.at("tok_emb.W"), p.at("pos_emb.W"));
    h = maybe_dropout(h, ctx);
    for (int64_t i = 0; i < p.config.n_enc_layers; ++i)
        h = transformer_block(p, "enc." + std::to_string(i), h, nullptr, nullptr, nullptr, ctx);
    return h;
}

Tensor decoder_forward(const ModelParams& p, const std::vector<int32_t>& ids,
                       const Tensor& enc_out, const ForwardCtx& ctx) {
    if (ids.empty()) throw UsageError("decoder_forward: empty sequence");
    for (int32_t id : ids)
        if (id < 0 || id >= p.config.vocab_size)
            throw UsageError("decoder_forward: token id out of range");
    Tensor h = embed(ids, p.at("tok_emb.W"), p.at("pos_emb.W"));
    h = maybe_dropout(h, ctx);
    AttnMask causal = causal_mask(static_cast<int64_t>(ids.size()));
    for (int64_t i = 0; i < p.config.n_dec_layers; ++i)
        h = transformer_block(p, "dec." + std::to_string(i), h, causal, &enc_out, nullptr, ctx);
    return h;
}

Tensor lm_logits(const Tensor& hidden, const Tensor& w_v) {
    if (hidden.dim(1) != w_v.dim(0)) throw UsageError("lm_logits: shape mismatch");
    return matmul(hidden, w_v);
}

Tensor autoregressive_nll(const Tensor& logits, const std::vector<int32_t>& targets) {
    return nll_rows(logits, targets);
}

Tensor classification_loss(const Tensor& logits, int32_t label, float class_weight) {
    if (logits.shape().size() != 2 || logits.dim(0) != 1)
        throw UsageError("classification_loss: expected a single logits row");
    std::vector<float> w{class_weight};
    return nll_rows(logits, {label}, &w);
}

MlmLoss mlm_loss(const Tensor& hidden, const Tensor& w_v,
                 const std::vector<size_t>& masked_positions,
                 const std::vector<int32_t>& target_ids) {
    if (masked_positions.size() != target_ids.size())
        throw UsageError("mlm_loss: position/target count mismatch");
    if (masked_positions.empty()) return {Tensor::scalar(0.0f), true};
    std::vector<int32_t> rows;
    rows.reserve(masked_positions.size());
    for (size_t pos : masked_positions) {
        if (pos >= static_cast<size_t>(hidden.dim(0)))
            throw UsageError("mlm_loss: masked position out of range");
        rows.push_back(static_cast<int32_t>(pos));
    }
    Tensor picked = gather_rows(hidden, rows);
    return {nll_rows(lm_logits(picked, w_v), target_ids), false};
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
    state.t += 1;
    double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t));
    for (auto& [name, tensor] : params.tensors) {
        auto& [m, v] = state.moments[name];
        size_t n = tensor.data().size();
        if (m.size() != n) m.assign(n, 0.0f);
        if (v.size() != n) v.assign(n, 0.0f);
        const std::vector<float>& g = tensor.grad();
        std::vector<float>& w = tensor.data();
        for (size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
            float mhat = static_cast<float>(m[i] / bc1);
            float vhat = static_cast<float>(v[i] / bc2);
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'K', 'T', 'S', 'E', 'E', 'R', '1'};

void write_u64(std::ostream& out, uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (in.gcount() != 8) throw DataError("checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f32(std::ostream& out, const std::vector<float>& data) {
    std::vector<char> buf(data.size() * 4);
    for (size_t i = 0; i < data.size(); ++i) {
        uint32_t bits = std::bit_cast<uint32_t>(data[i]);
        buf[4 * i] = static_cast<char>(bits & 0xff);
        buf[4 * i + 1] = static_cast<char>((bits >> 8) & 0xff);
        buf[4 * i + 2] = static_cast<char>((bits >> 16) & 0xff);
        buf[4 * i + 3] = static_cast<char>((bits >> 24) & 0xff);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_f32(std::istream& in, size_t count) {
    std::vector<unsigned char> buf(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw DataError("checkpoint: truncated tensor data");
    std::vector<float> data(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                        (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                        (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                        (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
        data[i] = std::bit_cast<float>(bits);
    }
    return data;
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
    out.write(kMagic, 8);
    nlohmann::json cfg{{"kind", params.kind},
                       {"vocab_digest", params.vocab_digest},
                       {"features", params.kept_features},
                       {"vocab_size", params.config.vocab_size},
                       {"d_model", params.config.d_model},
                       {"n_heads", params.config.n_heads},
                       {"n_enc_layers", params.config.n_enc_layers},
                       {"n_dec_layers", params.config.n_dec_layers},
                       {"d_ff", params.config.d_ff},
                       {"max_seq_len", params.config.max_seq_len},
                       {"dropout_prob", params.config.dropout_prob}};
    std::string doc = cfg.dump();
    write_u64(out, doc.size());
    out.write(doc.data(), static_cast<std::streamsize>(doc.size()));

    for (const auto& [name, t] : params.tensors) {
        write_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(out, t.shape().size());
        for (int64_t d : t.shape()) write_u64(out, static_cast<uint64_t>(d));
        write_f32(out, t.data());
    }
}

ModelParams load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic");

    uint64_t doc_len = read_u64(in);
    std::string doc(doc_len, '\0');
    in.read(doc.data(), static_cast<std::streamsize>(doc_len));
    if (in.gcount() != static_cast<std::streamsize>(doc_len))
        throw DataError("checkpoint: truncated config");
    nlohmann::json cfg = nlohmann::json::parse(doc);

    ModelParams p;
    p.kind = cfg.at("kind").get<std::string>();
    p.vocab_digest = cfg.value("vocab_digest", "");
    p.kept_features = cfg.value("features", std::vector<std::string>{});
    p.config.vocab_size = cfg.at("vocab_size").get<int64_t>();
    p.config.d_model = cfg.at("d_model").get<int64_t>();
    p.config.n_heads = cfg.at("n_heads").get<int64_t>();
    p.config.n_enc_layers = cfg.at("n_enc_layers").get<int64_t>();
    p.config.n_dec_layers = cfg.at("n_dec_layers").get<int64_t>();
    p.config.d_ff = cfg.at("d_ff").get<int64_t>();
    p.config.max_seq_len = cfg.at("max_seq_len").get<int64_t>();
    p.config.dropout_prob = cfg.at("dropout_prob").get<float>();
    p.config.validate();

    while (in.peek() != std::char_traits<char>::eof()) {
        uint64_t name_len = read_u64(in);
        if (name_len > 4096) throw DataError("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw DataError("checkpoint: truncated name");
        uint64_t rank = read_u64(in);
        if (rank > 8) throw DataError("checkpoint: implausible rank");
        std::vector<int64_t> shape;
        uint64_t count = 1;
        for (uint64_t i = 0; i < rank; ++i) {
            uint64_t d = read_u64(in);
            shape.push_back(static_cast<int64_t>(d));
            count *= d;
        }
        std::vector<float> data = read_f32(in, count);
        p.tensors[name] = Tensor::from_data(std::move(shape), std::move(data), true);
    }
    return p;
}

void save_checkpoint_file(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    save_checkpoint(out, params);
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    return load_checkpoint(in);
}

}  // namespace pktseer::nn
