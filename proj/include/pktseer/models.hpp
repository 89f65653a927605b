#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pktseer/ingest.hpp"
#include "pktseer/nn.hpp"
#include "pktseer/tokenizer.hpp"

namespace pktseer {

// Seq2seq next-packet predictor; the decoder is always causally masked.
struct PredictorModel {
    nn::ModelParams params;
};

// Bidirectional encoder with an MLM head and a 2-class pair head over CLS.
// Class order is (Successive, NonSuccessive) so an exact tie resolves to
// Successive.
struct AssessorModel {
    nn::ModelParams params;
};

// Encoder-decoder over the same packet tokens with a 2-class head on the
// final decoder position. Class order is (Normal, Malicious); ties resolve
// to Normal.
struct ClassifierModel {
    nn::ModelParams params;
};

struct AssessVerdict {
    PairLabel label = PairLabel::Successive;
    double probability = 0.0;    // probability of the returned label
    double p_successive = 0.0;   // P(Successive), the ROC score
};

struct ClassifyVerdict {
    Label label;
    double probability = 0.0;  // probability of the returned label
    double score = 0.0;        // P(Malicious), the ROC score
};

struct PredictionOutcome {
    PacketRecord current;
    std::string predicted_text;
    std::optional<PacketRecord> predicted_record;  // present iff the text parses
    AssessVerdict assessor_verdict;
    ClassifyVerdict classifier_verdict;
    bool malformed = false;
};

// Greedy autoregressive decoding: encoder consumes `current`, the decoder
// extends from BOS by argmax (ties to the smallest id) until EOS or max_new.
std::string generate_next_packet(const PredictorModel& m, const TokenSequence& current,
                                 const BpeVocab& vocab, size_t max_new);

AssessVerdict assess_pair(const AssessorModel& m, const TokenSequence& pair_seq);

ClassifyVerdict classify_packet(const ClassifierModel& m, const TokenSequence& packet_seq);

class Pipeline {
public:
    // all three models must have been trained against the same vocabulary
    Pipeline(const PredictorModel* predictor, const AssessorModel* assessor,
             const ClassifierModel* classifier, const BpeVocab* vocab,
             std::vector<std::string> kept_features);

    PredictionOutcome predict(const PacketRecord& current) const;

    size_t max_generated_tokens() const { return max_new_; }

private:
    const PredictorModel* predictor_;
    const AssessorModel* assessor_;
    const ClassifierModel* classifier_;
    const BpeVocab* vocab_;
    std::vector<std::string> kept_features_;
    size_t max_new_;
};

// one structured-text record per packet, suitable for line-delimited output
std::string outcome_to_json(const PredictionOutcome& o);

}  // namespace pktseer
