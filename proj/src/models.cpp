#include "pktseer/models.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace pktseer {

namespace {

// softmax over one logits row, computed in double
std::vector<double> softmax_row(const std::vector<float>& logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double denom = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) - mx);
        denom += p[i];
    }
    for (double& v : p) v /= denom;
    return p;
}

std::vector<float> last_row_logits(const nn::Tensor& hidden, const nn::Tensor& w) {
    std::vector<int32_t> last{static_cast<int32_t>(hidden.dim(0) - 1)};
    nn::Tensor logits = nn::lm_logits(nn::gather_rows(hidden, last), w);
    return logits.data();
}

std::vector<int32_t> strip_trailing_pad(const std::vector<TokenId>& ids) {
    size_t n = ids.size();
    while (n > 0 && ids[n - 1] == PAD) --n;
    return std::vector<int32_t>(ids.begin(), ids.begin() + n);
}

}  // namespace

std::string generate_next_packet(const PredictorModel& m, const TokenSequence& current,
                                 const BpeVocab& vocab, size_t max_new) {
    if (current.ids.empty()) throw UsageError("generate_next_packet: empty input sequence");

    std::vector<int32_t> enc_ids(current.ids.begin(), current.ids.end());
    if (enc_ids.size() > static_cast<size_t>(m.params.config.max_seq_len))
        enc_ids.resize(static_cast<size_t>(m.params.config.max_seq_len));
    nn::Tensor enc_out = nn::encoder_forward(m.params, enc_ids);

    std::vector<int32_t> dec_ids{BOS};
    TokenSequence generated;
    for (size_t step = 0; step < max_new; ++step) {
        if (dec_ids.size() >= static_cast<size_t>(m.params.config.max_seq_len)) break;
        nn::Tensor h = nn::decoder_forward(m.params, dec_ids, enc_out);
        std::vector<float> logits = last_row_logits(h, m.params.at("lm_head.W"));
        // argmax, ties to the smallest id
        int32_t best = 0;
        for (size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = static_cast<int32_t>(i);
        if (best == EOS) break;
        dec_ids.push_back(best);
        generated.ids.push_back(best);
    }
    return decode(generated, vocab);
}

AssessVerdict assess_pair(const AssessorModel& m, const TokenSequence& pair_seq) {
    if (pair_seq.ids.empty() || pair_seq.ids[0] != CLS)
        throw UsageError("assess_pair: sequence must start with CLS");
    std::vector<int32_t> ids = strip_trailing_pad(pair_seq.ids);
    if (ids.size() > static_cast<size_t>(m.params.config.max_seq_len))
        ids.resize(static_cast<size_t>(m.params.config.max_seq_len));
    nn::Tensor h = nn::encoder_forward(m.params, ids);
    nn::Tensor logits = nn::add_bias(
        nn::lm_logits(nn::gather_rows(h, {0}), m.params.at("pair_head.W")),
        m.params.at("pair_head.b"));
    std::vector<double> p = softmax_row(logits.data());
    AssessVerdict v;
    v.label = p[0] >= p[1] ? PairLabel::Successive : PairLabel::NonSuccessive;
    v.probability = std::max(p[0], p[1]);
    v.p_successive = p[0];
    return v;
}

ClassifyVerdict classify_packet(const ClassifierModel& m, const TokenSequence& packet_seq) {
    if (packet_seq.ids.empty()) throw UsageError("classify_packet: empty sequence");
    std::vector<int32_t> ids = strip_trailing_pad(packet_seq.ids);
    if (ids.size() > static_cast<size_t>(m.params.config.max_seq_len))
        throw UsageError("classify_packet: sequence exceeds max_seq_len");
    nn::Tensor enc_out = nn::encoder_forward(m.params, ids);
    nn::Tensor h = nn::decoder_forward(m.params, ids, enc_out);
    nn::Tensor logits = nn::add_bias(
        nn::lm_logits(nn::gather_rows(h, {static_cast<int32_t>(h.dim(0) - 1)}),
                      m.params.at("cls_head.W")),
        m.params.at("cls_head.b"));
    std::vector<double> p = softmax_row(logits.data());
    ClassifyVerdict v;
    v.score = p[1];
    if (p[1] > p[0]) {
        v.label = Label::attack("malicious");
        v.probability = p[1];
    } else {
        v.label = Label::normal();
        v.probability = p[0];
    }
    return v;
}

Pipeline::Pipeline(const PredictorModel* predictor, const AssessorModel* assessor,
                   const ClassifierModel* classifier, const BpeVocab* vocab,
                   std::vector<std::string> kept_features)
    : predictor_(predictor),
      assessor_(assessor),
      classifier_(classifier),
      vocab_(vocab),
      kept_features_(std::move(kept_features)) {
    int64_t vs = vocab_->size();
    for (const auto* cfg : {&predictor_->params, &assessor_->params, &classifier_->params})
        if (cfg->config.vocab_size != vs)
            throw UsageError("pipeline: model vocab_size disagrees with the vocabulary");
    const std::string& digest = predictor_->params.vocab_digest;
    if (!digest.empty() &&
        (assessor_->params.vocab_digest != digest || classifier_->params.vocab_digest != digest))
        throw UsageError("pipeline: models were trained against different vocabularies");
    max_new_ = static_cast<size_t>(predictor_->params.config.max_seq_len) - 2;
}

PredictionOutcome Pipeline::predict(const PacketRecord& current) const {
    PredictionOutcome out;
    out.current = current;

    std::string current_text = serialize_packet(current, kept_features_);
    TokenSequence enc_seq = encode(current_text, *vocab_, true);
    out.predicted_text = generate_next_packet(*predictor_, enc_seq, *vocab_, max_new_);

    PacketParseResult parsed = parse_packet_text(out.predicted_text, kept_features_);
    if (parsed.ok()) {
        out.predicted_record = std::move(*parsed.record);
        out.predicted_record->flow_key = current.flow_key;
    } else {
        out.malformed = true;
    }

    size_t pair_len = static_cast<size_t>(assessor_->params.config.max_seq_len);
    TokenSequence pair_seq = make_pair_input(current_text, out.predicted_text, *vocab_, pair_len);
    out.assessor_verdict = assess_pair(*assessor_, pair_seq);

    // the classifier sees the raw generated tokens even when malformed
    TokenSequence cls_seq = encode(out.predicted_text, *vocab_, true);
    size_t limit = static_cast<size_t>(classifier_->params.config.max_seq_len);
    if (cls_seq.ids.size() > limit) cls_seq.ids.resize(limit);
    out.classifier_verdict = classify_packet(*classifier_, cls_seq);
    return out;
}

std::string outcome_to_json(const PredictionOutcome& o) {
    nlohmann::json j;
    j["src"] = o.current.flow_key.src_addr;
    j["dst"] = o.current.flow_key.dst_addr;
    j["src_port"] = o.current.flow_key.src_port;
    j["dst_port"] = o.current.flow_key.dst_port;
    j["proto"] = o.current.flow_key.protocol;
    j["ts"] = o.current.timestamp_us;
    j["predicted"] = o.predicted_text;
    j["malformed"] = o.malformed;
    j["assessor"] = o.assessor_verdict.label == PairLabel::Successive ? "successive"
                                                                      : "non-successive";
    j["assessor_p"] = o.assessor_verdict.probability;
    j["classifier"] = o.classifier_verdict.label.malicious ? "malicious" : "normal";
    j["classifier_p"] = o.classifier_verdict.probability;
    j["score"] = o.classifier_verdict.score;
    return j.dump();
}

}  // namespace pktseer
