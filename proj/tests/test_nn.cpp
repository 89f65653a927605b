#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fd_check.hpp"
#include "pktseer/det_rng.hpp"
#include "pktseer/nn.hpp"

using namespace pktseer;
using namespace pktseer::nn;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.vocab_size = 24;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 2;
    cfg.n_dec_layers = 2;
    cfg.d_ff = 16;
    cfg.max_seq_len = 8;
    cfg.dropout_prob = 0.0f;
    return cfg;
}

Tensor random_tensor(std::vector<int64_t> shape, DetRng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(rng.normal(0, scale));
    return t;
}

void set_identity(Tensor& t) {
    int64_t n = t.dim(0);
    for (auto& v : t.data()) v = 0.0f;
    for (int64_t i = 0; i < n; ++i) t.data()[static_cast<size_t>(i * n + i)] = 1.0f;
}

}  // namespace

TEST_CASE("attention: single key returns V exactly") {
    Tensor q = Tensor::from_data({1, 3}, {0.3f, -1.2f, 0.7f});
    Tensor k = Tensor::from_data({1, 3}, {2.0f, 0.1f, -0.5f});
    Tensor v = Tensor::from_data({1, 2}, {4.5f, -3.25f});
    Tensor out = attention(q, k, v);
    CHECK(out.data()[0] == 4.5f);
    CHECK(out.data()[1] == -3.25f);
}

TEST_CASE("attention: zero queries give uniform attention over unmasked rows") {
    Tensor q = Tensor::zeros({2, 3});
    DetRng rng(8);
    Tensor k = random_tensor({4, 3}, rng);
    Tensor v = random_tensor({4, 2}, rng);
    Tensor out = attention(q, k, v);
    for (int64_t c = 0; c < 2; ++c) {
        double mean = 0;
        for (int64_t r = 0; r < 4; ++r) mean += v.data()[static_cast<size_t>(r * 2 + c)];
        mean /= 4.0;
        CHECK(out.data()[static_cast<size_t>(c)] == doctest::Approx(mean).epsilon(1e-5));
        CHECK(out.data()[static_cast<size_t>(2 + c)] == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("attention: 2x2 hand-computed case") {
    // Q = K = I2, V = [[1,2],[3,4]], d_k = 2: per row the diagonal score is
    // 1/sqrt(2), the off-diagonal 0
    Tensor q = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor v = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = attention(q, q, v);

    double s = 1.0 / std::sqrt(2.0);
    double w = std::exp(s) / (std::exp(s) + std::exp(0.0));
    double expect00 = w * 1 + (1 - w) * 3;
    double expect01 = w * 2 + (1 - w) * 4;
    double expect10 = (1 - w) * 1 + w * 3;
    double expect11 = (1 - w) * 2 + w * 4;
    CHECK(out.data()[0] == doctest::Approx(expect00).epsilon(1e-6));
    CHECK(out.data()[1] == doctest::Approx(expect01).epsilon(1e-6));
    CHECK(out.data()[2] == doctest::Approx(expect10).epsilon(1e-6));
    CHECK(out.data()[3] == doctest::Approx(expect11).epsilon(1e-6));
}

TEST_CASE("attention rejects shape mismatches") {
    CHECK_THROWS_AS(attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}),
                              Tensor::zeros({2, 2})),
                    UsageError);
    CHECK_THROWS_AS(attention(Tensor::zeros({2, 3}), Tensor::zeros({4, 3}),
                              Tensor::zeros({3, 2})),
                    UsageError);
}

TEST_CASE("multi_head_attention: n_heads=1 with identity projections equals attention()") {
    ModelConfig cfg = toy_config();
    cfg.n_heads = 1;
    ModelParams p = init_params("assessor", cfg, 3);
    for (const char* w : {"Wq", "Wk", "Wv", "Wo"}) {
        set_identity(p.at(std::string("enc.0.attn.") + w));
    }
    for (const char* b : {"bq", "bk", "bv", "bo"})
        for (auto& v : p.at(std::string("enc.0.attn.") + b).data()) v = 0.0f;

    DetRng rng(9);
    Tensor x = random_tensor({5, cfg.d_model}, rng);
    Tensor mha = multi_head_attention(p, "enc.0.attn", x, x, nullptr);
    Tensor plain = attention(x, x, x);
    REQUIRE(mha.numel() == plain.numel());
    for (size_t i = 0; i < mha.data().size(); ++i)
        CHECK(mha.data()[i] == doctest::Approx(plain.data()[i]).epsilon(1e-5));
}

TEST_CASE("multi_head_attention keeps [n, d_model] shape") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("assessor", cfg, 4);
    DetRng rng(10);
    for (int64_t n : {1, 3, 7}) {
        Tensor x = random_tensor({n, cfg.d_model}, rng);
        Tensor out = multi_head_attention(p, "enc.0.attn", x, x, nullptr);
        CHECK(out.dim(0) == n);
        CHECK(out.dim(1) == cfg.d_model);
    }
}

TEST_CASE("multi_head_attention projection gradients match finite differences") {
    ModelConfig cfg = toy_config();
    for (uint64_t seed = 0; seed < 20; ++seed) {
        ModelParams p = init_params("assessor", cfg, 100 + seed);
        DetRng rng(200 + seed);
        Tensor x = random_tensor({4, cfg.d_model}, rng);
        std::vector<int32_t> targets{1, 0, 3, 2};
        Tensor head = random_tensor({cfg.d_model, 4}, rng);

        auto forward = [&]() {
            Tensor out = multi_head_attention(p, "enc.0.attn", x, x, nullptr);
            return nll_rows(matmul(out, head), targets);
        };
        zero_grads(p);
        backward(forward());

        fd::CheckStats stats;
        auto loss_value = [&]() { return static_cast<double>(forward().item()); };
        for (const char* w : {"Wq", "Wk", "Wv", "Wo", "bq", "bk", "bv", "bo"}) {
            Tensor& t = p.at(std::string("enc.0.attn.") + w);
            fd::check_tensor(stats, w, t, t.grad(), loss_value);
        }
        INFO("seed ", seed, " worst ", stats.worst_at, " rel ", stats.worst_rel);
        CHECK(stats.failed == 0);
    }
}

TEST_CASE("embed: lookups, positions and the dense one-hot oracle") {
    DetRng rng(21);
    Tensor w_e = random_tensor({10, 4}, rng);
    Tensor w_p = random_tensor({6, 4}, rng);

    SUBCASE("zero positions reduce to table lookups") {
        Tensor zero_p = Tensor::zeros({6, 4});
        Tensor h = embed({3, 3, 9}, w_e, zero_p);
        for (int64_t c = 0; c < 4; ++c) {
            CHECK(h.data()[static_cast<size_t>(c)] == w_e.data()[static_cast<size_t>(3 * 4 + c)]);
            CHECK(h.data()[static_cast<size_t>(8 + c)] ==
                  w_e.data()[static_cast<size_t>(9 * 4 + c)]);
        }
    }
    SUBCASE("equal ids at different positions differ by the position rows") {
        Tensor h = embed({5, 5}, w_e, w_p);
        for (int64_t c = 0; c < 4; ++c) {
            float diff = h.data()[static_cast<size_t>(4 + c)] - h.data()[static_cast<size_t>(c)];
            float expect = w_p.data()[static_cast<size_t>(4 + c)] -
                           w_p.data()[static_cast<size_t>(c)];
            CHECK(diff == doctest::Approx(expect).epsilon(1e-6));
        }
    }
    SUBCASE("dense one-hot matmul oracle") {
        std::vector<int32_t> ids{1, 0, 7, 7, 2};
        Tensor h = embed(ids, w_e, w_p);
        for (size_t r = 0; r < ids.size(); ++r)
            for (int64_t c = 0; c < 4; ++c) {
                double acc = 0;  // (T . W_e)[r,c] with T one-hot
                for (int64_t k = 0; k < 10; ++k)
                    acc += (k == ids[r] ? 1.0 : 0.0) *
                           w_e.data()[static_cast<size_t>(k * 4 + c)];
                acc += w_p.data()[r * 4 + static_cast<size_t>(c)];
                CHECK(h.data()[r * 4 + static_cast<size_t>(c)] ==
                      doctest::Approx(acc).epsilon(1e-6));
            }
    }
    SUBCASE("range errors") {
        CHECK_THROWS_AS(embed({10}, w_e, w_p), UsageError);
        CHECK_THROWS_AS(embed({0, 0, 0, 0, 0, 0, 0}, w_e, w_p), UsageError);
    }
}

TEST_CASE("transformer_block: zero weights pass the input through") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("assessor", cfg, 5);
    for (auto& [name, t] : p.tensors)
        if (name.rfind("enc.0", 0) == 0)
            for (auto& v : t.data()) v = 0.0f;
    DetRng rng(12);
    Tensor x = random_tensor({4, cfg.d_model}, rng);
    Tensor out = transformer_block(p, "enc.0", x, nullptr);
    for (size_t i = 0; i < x.data().size(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("causal mask: future tokens never influence earlier rows (bitwise)") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("predictor", cfg, 6);
    std::vector<int32_t> ids{1, 2, 3, 4, 5};
    DetRng rng(13);
    Tensor enc_out = random_tensor({3, cfg.d_model}, rng);

    Tensor base = decoder_forward(p, ids, enc_out);
    for (size_t j = 0; j < ids.size(); ++j) {
        std::vector<int32_t> perturbed = ids;
        perturbed[j] = 9;  // change token j
        Tensor out = decoder_forward(p, perturbed, enc_out);
        for (size_t i = 0; i < j; ++i)  // strictly earlier rows are identical bits
            for (int64_t c = 0; c < cfg.d_model; ++c)
                CHECK(out.data()[i * cfg.d_model + c] == base.data()[i * cfg.d_model + c]);
    }
}

TEST_CASE("decoder prefix invariance: appending tokens never changes the prefix") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("predictor", cfg, 61);
    DetRng rng(14);
    Tensor enc_out = random_tensor({4, cfg.d_model}, rng);
    std::vector<int32_t> prefix{3, 1, 4};
    Tensor short_out = decoder_forward(p, prefix, enc_out);
    std::vector<int32_t> extended = prefix;
    extended.push_back(7);
    extended.push_back(2);
    Tensor long_out = decoder_forward(p, extended, enc_out);
    for (size_t i = 0; i < prefix.size(); ++i)
        for (int64_t c = 0; c < cfg.d_model; ++c)
            CHECK(long_out.data()[i * cfg.d_model + c] == short_out.data()[i * cfg.d_model + c]);
}

TEST_CASE("encoder/decoder: zero layers reduce to the embedding") {
    ModelConfig cfg = toy_config();
    cfg.n_enc_layers = 0;
    cfg.n_dec_layers = 0;
    ModelParams p = init_params("predictor", cfg, 7);
    std::vector<int32_t> ids{2, 4, 6};
    Tensor h = encoder_forward(p, ids);
    Tensor e = embed(ids, p.at("tok_emb.W"), p.at("pos_emb.W"));
    CHECK(h.data() == e.data());
}

TEST_CASE("forward passes are deterministic with dropout off") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("classifier", cfg, 8);
    std::vector<int32_t> ids{1, 2, 3};
    Tensor a = encoder_forward(p, ids);
    Tensor b = encoder_forward(p, ids);
    CHECK(a.data() == b.data());
    CHECK_THROWS_AS(encoder_forward(p, std::vector<int32_t>(cfg.max_seq_len + 1, 1)),
                    UsageError);
}

TEST_CASE("classification_loss analytics") {
    Tensor logits = Tensor::zeros({1, 2});
    CHECK(classification_loss(logits, 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    Tensor strong = Tensor::from_data({1, 2}, {30.0f, -30.0f});
    CHECK(classification_loss(strong, 0).item() < 1e-6);
    CHECK(classification_loss(strong, 0, 2.5f).item() ==
          doctest::Approx(2.5 * classification_loss(strong, 0).item()).epsilon(1e-5));
    CHECK_THROWS_AS(classification_loss(Tensor::zeros({1, 2}), 2), UsageError);
}

TEST_CASE("mlm_loss: empty mask, saturation equivalence and gradient sparsity") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("assessor", cfg, 9);
    std::vector<int32_t> ids{1, 5, 7, 3};
    Tensor h = encoder_forward(p, ids);

    SUBCASE("empty mask is zero with the warning flag") {
        MlmLoss r = mlm_loss(h, p.at("mlm_head.W"), {}, {});
        CHECK(r.empty_mask);
        CHECK(r.loss.item() == 0.0f);
    }
    SUBCASE("all positions masked equals full-sequence mean NLL") {
        std::vector<size_t> all{0, 1, 2, 3};
        std::vector<int32_t> targets{1, 5, 7, 3};
        MlmLoss r = mlm_loss(h, p.at("mlm_head.W"), all, targets);
        Tensor full = autoregressive_nll(lm_logits(h, p.at("mlm_head.W")), targets);
        CHECK(r.loss.item() == doctest::Approx(full.item()).epsilon(1e-6));
    }
    SUBCASE("gradient flows only through masked positions") {
        // gradient of the hidden state at unmasked positions must be zero
        Tensor hid = Tensor::from_data({4, cfg.d_model},
                                       std::vector<float>(4 * cfg.d_model, 0.1f), true);
        MlmLoss r = mlm_loss(hid, p.at("mlm_head.W"), {1, 3}, {2, 6});
        backward(r.loss);
        for (int64_t c = 0; c < cfg.d_model; ++c) {
            CHECK(hid.grad()[static_cast<size_t>(0 * cfg.d_model + c)] == 0.0f);
            CHECK(hid.grad()[static_cast<size_t>(2 * cfg.d_model + c)] == 0.0f);
        }
        double row1 = 0;
        for (int64_t c = 0; c < cfg.d_model; ++c)
            row1 += std::abs(hid.grad()[static_cast<size_t>(1 * cfg.d_model + c)]);
        CHECK(row1 > 0.0);
    }
}

TEST_CASE("adam: first step matches the hand-derived update") {
    ModelConfig cfg;
    cfg.vocab_size = 4;
    cfg.d_model = 2;
    cfg.n_heads = 1;
    cfg.n_enc_layers = 0;
    cfg.n_dec_layers = 0;
    cfg.d_ff = 2;
    cfg.max_seq_len = 2;
    ModelParams p;
    p.kind = "assessor";
    p.config = cfg;
    p.tensors["w"] = Tensor::from_data({1, 1}, {1.0f}, true);
    p.at("w").grad()[0] = 0.5f;

    AdamState state;
    AdamConfig acfg;
    acfg.lr = 0.1f;
    adam_step(p, state, acfg);

    // t=1: m_hat = g, v_hat = g^2, step = -lr * g / (|g| + eps)
    double expect = 1.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
    CHECK(p.at("w").data()[0] == doctest::Approx(expect).epsilon(1e-6));
    CHECK(state.t == 1);

    // second step with the same gradient keeps moving the same direction
    p.at("w").grad()[0] = 0.5f;
    adam_step(p, state, acfg);
    CHECK(p.at("w").data()[0] < expect);
}

TEST_CASE("whole toy model gradients match finite differences") {
    ModelConfig cfg = toy_config();
    for (uint64_t seed = 0; seed < 3; ++seed) {
        ModelParams p = init_params("predictor", cfg, 400 + seed);
        std::vector<int32_t> enc_ids{1, 4, 2, 9};
        std::vector<int32_t> dec_ids{1, 3, 5};
        std::vector<int32_t> targets{3, 5, 2};

        auto forward = [&]() {
            Tensor enc = encoder_forward(p, enc_ids);
            Tensor h = decoder_forward(p, dec_ids, enc);
            return autoregressive_nll(lm_logits(h, p.at("lm_head.W")), targets);
        };
        zero_grads(p);
        backward(forward());

        fd::CheckStats stats;
        auto loss_value = [&]() { return static_cast<double>(forward().item()); };
        for (auto& [name, t] : p.tensors) fd::check_tensor(stats, name, t, t.grad(), loss_value);
        INFO("seed ", seed, " checked ", stats.checked, " worst ", stats.worst_at, " rel ",
             stats.worst_rel);
        CHECK(stats.failed == 0);
        CHECK(stats.checked > 3000);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig cfg = toy_config();
    ModelParams p = init_params("classifier", cfg, 77);
    p.vocab_digest = "deadbeef";
    p.kept_features = {"ttl", "win"};

    std::ostringstream os(std::ios::binary);
    save_checkpoint(os, p);
    std::string bytes = os.str();
    CHECK(bytes.substr(0, 8) == "PKTSEER1");

    std::istringstream in(bytes, std::ios::binary);
    ModelParams q = load_checkpoint(in);
    CHECK(q.kind == p.kind);
    CHECK(q.config == p.config);
    CHECK(q.vocab_digest == "deadbeef");
    CHECK(q.kept_features == p.kept_features);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (auto& [name, t] : p.tensors) {
        REQUIRE(q.has(name));
        CHECK(q.at(name).shape() == t.shape());
        CHECK(q.at(name).data() == t.data());
    }

    std::ostringstream os2(std::ios::binary);
    save_checkpoint(os2, q);
    CHECK(os2.str() == bytes);

    std::istringstream bad("PKTSEER9 garbage", std::ios::binary);
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
}

TEST_CASE("init_params is deterministic per seed and validates config") {
    ModelConfig cfg = toy_config();
    ModelParams a = init_params("predictor", cfg, 123);
    ModelParams b = init_params("predictor", cfg, 123);
    for (auto& [name, t] : a.tensors) CHECK(t.data() == b.at(name).data());
    ModelParams c = init_params("predictor", cfg, 124);
    CHECK(c.at("tok_emb.W").data() != a.at("tok_emb.W").data());

    ModelConfig bad = cfg;
    bad.d_model = 6;
    bad.n_heads = 4;  // 6 % 4 != 0
    CHECK_THROWS_AS(init_params("predictor", bad, 1), UsageError);
    CHECK_THROWS_AS(init_params("unknown", cfg, 1), UsageError);
}
