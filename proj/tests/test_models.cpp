#include <doctest.h>

#include <cmath>

#include "pktseer/models.hpp"

using namespace pktseer;

namespace {

nn::ModelConfig small_config(int64_t vocab) {
    nn::ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_layers = 1;
    cfg.n_dec_layers = 1;
    cfg.d_ff = 32;
    cfg.max_seq_len = 48;
    cfg.dropout_prob = 0.0f;
    return cfg;
}

BpeVocab tiny_vocab() { return train_bpe({"ttl=64 win=1024", "ttl=65 win=1024"}, 280); }

void zero_head(nn::ModelParams& p, const std::string& name) {
    for (auto& v : p.at(name + ".W").data()) v = 0.0f;
    if (p.has(name + ".b"))
        for (auto& v : p.at(name + ".b").data()) v = 0.0f;
}

PacketRecord record_of(double ttl, double win) {
    PacketRecord r;
    r.flow_key = {"10.0.0.1", "10.0.0.2", 1111, 80, 6};
    r.features = {{"ttl", ttl}, {"win", win}};
    return r;
}

}  // namespace

TEST_CASE("assess_pair: zeroed head splits 50/50 and ties go Successive") {
    BpeVocab vocab = tiny_vocab();
    AssessorModel m{nn::init_params("assessor", small_config(vocab.size()), 1)};
    zero_head(m.params, "pair_head");
    TokenSequence seq = make_pair_input("ttl=64 win=1024", "ttl=65 win=1024", vocab, 48);
    AssessVerdict v = assess_pair(m, seq);
    CHECK(v.label == PairLabel::Successive);
    CHECK(v.probability == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(v.p_successive == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("assess_pair: probabilities sum to one and CLS is required") {
    BpeVocab vocab = tiny_vocab();
    AssessorModel m{nn::init_params("assessor", small_config(vocab.size()), 2)};
    TokenSequence seq = make_pair_input("ttl=64 win=1024", "ttl=65 win=1024", vocab, 48);
    AssessVerdict v = assess_pair(m, seq);
    // probability of the returned label plus the other class must be 1
    double other = 1.0 - v.p_successive;
    CHECK(v.p_successive + other == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(v.probability >= 0.5);

    TokenSequence bad = seq;
    bad.ids[0] = BOS;
    CHECK_THROWS_AS(assess_pair(m, bad), UsageError);
}

TEST_CASE("classify_packet: zeroed head ties resolve to Normal, score in [0,1]") {
    BpeVocab vocab = tiny_vocab();
    ClassifierModel m{nn::init_params("classifier", small_config(vocab.size()), 3)};
    zero_head(m.params, "cls_head");
    TokenSequence seq = encode("ttl=64 win=1024", vocab, true);
    ClassifyVerdict v = classify_packet(m, seq);
    CHECK_FALSE(v.label.malicious);
    CHECK(v.probability == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(v.score == doctest::Approx(0.5).epsilon(1e-6));

    ClassifierModel m2{nn::init_params("classifier", small_config(vocab.size()), 4)};
    ClassifyVerdict v2 = classify_packet(m2, seq);
    CHECK(v2.score >= 0.0);
    CHECK(v2.score <= 1.0);
    CHECK((v2.label.malicious == (v2.score > 0.5)));
}

TEST_CASE("classify_packet rejects over-length sequences") {
    BpeVocab vocab = tiny_vocab();
    ClassifierModel m{nn::init_params("classifier", small_config(vocab.size()), 5)};
    TokenSequence seq;
    seq.ids.assign(49, 7);  // max_seq_len is 48
    CHECK_THROWS_AS(classify_packet(m, seq), UsageError);
}

TEST_CASE("generate_next_packet: determinism and budget") {
    BpeVocab vocab = tiny_vocab();
    PredictorModel m{nn::init_params("predictor", small_config(vocab.size()), 6)};
    TokenSequence cur = encode("ttl=64 win=1024", vocab, true);

    std::string a = generate_next_packet(m, cur, vocab, 16);
    std::string b = generate_next_packet(m, cur, vocab, 16);
    CHECK(a == b);
    CHECK(generate_next_packet(m, cur, vocab, 0).empty());
}

TEST_CASE("pipeline: vocabulary mismatch fails at construction") {
    BpeVocab vocab = tiny_vocab();
    PredictorModel pm{nn::init_params("predictor", small_config(vocab.size()), 7)};
    AssessorModel am{nn::init_params("assessor", small_config(vocab.size()), 8)};
    ClassifierModel cm{nn::init_params("classifier", small_config(vocab.size() + 5), 9)};
    CHECK_THROWS_AS(Pipeline(&pm, &am, &cm, &vocab, {"ttl", "win"}), UsageError);

    // digests must agree when present
    ClassifierModel cm2{nn::init_params("classifier", small_config(vocab.size()), 10)};
    pm.params.vocab_digest = "aaa";
    am.params.vocab_digest = "aaa";
    cm2.params.vocab_digest = "bbb";
    CHECK_THROWS_AS(Pipeline(&pm, &am, &cm2, &vocab, {"ttl", "win"}), UsageError);
    cm2.params.vocab_digest = "aaa";
    CHECK_NOTHROW(Pipeline(&pm, &am, &cm2, &vocab, {"ttl", "win"}));
}

TEST_CASE("pipeline: malformed generations are data, not errors") {
    BpeVocab vocab = tiny_vocab();
    PredictorModel pm{nn::init_params("predictor", small_config(vocab.size()), 11)};
    AssessorModel am{nn::init_params("assessor", small_config(vocab.size()), 12)};
    ClassifierModel cm{nn::init_params("classifier", small_config(vocab.size()), 13)};
    Pipeline pipe(&pm, &am, &cm, &vocab, {"ttl", "win"});

    PredictionOutcome out = pipe.predict(record_of(64, 1024));
    // an untrained model will not emit a well-formed packet; the outcome must
    // still carry all verdicts
    CHECK(out.malformed == !out.predicted_record.has_value());
    CHECK(out.assessor_verdict.probability >= 0.5);
    CHECK(out.classifier_verdict.score >= 0.0);
    CHECK(out.classifier_verdict.score <= 1.0);

    PredictionOutcome again = pipe.predict(record_of(64, 1024));
    CHECK(out.predicted_text == again.predicted_text);
    CHECK(out.malformed == again.malformed);

    std::string json = outcome_to_json(out);
    CHECK(json.find("\"malformed\"") != std::string::npos);
    CHECK(json.find("\"assessor\"") != std::string::npos);
    CHECK(json.find("\"score\"") != std::string::npos);
}

TEST_CASE("pipeline totality over many records") {
    BpeVocab vocab = tiny_vocab();
    PredictorModel pm{nn::init_params("predictor", small_config(vocab.size()), 14)};
    AssessorModel am{nn::init_params("assessor", small_config(vocab.size()), 15)};
    ClassifierModel cm{nn::init_params("classifier", small_config(vocab.size()), 16)};
    Pipeline pipe(&pm, &am, &cm, &vocab, {"ttl", "win"});
    for (int i = 0; i < 10; ++i) {
        PredictionOutcome out = pipe.predict(record_of(30 + i * 20, 64 << i));
        CHECK(out.classifier_verdict.score == out.classifier_verdict.score);  // not NaN
    }
}
