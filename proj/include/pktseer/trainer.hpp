#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pktseer/models.hpp"
#include "pktseer/nn.hpp"

namespace pktseer {

enum class EarlyStopMetric { ValLoss, ValAccuracy };

struct TrainConfig {
    int64_t epochs = 15;
    int64_t batch_size = 128;
    double learning_rate = 5e-5;
    uint64_t seed = 0;
    int64_t early_stop_patience = 3;
    EarlyStopMetric early_stop_metric = EarlyStopMetric::ValLoss;
    double min_delta = 1e-4;
    int64_t max_seq_len = 0;  // >0 overrides the model config
    double val_fraction = 0.2;

    double denoise_fraction = 0.2;   // predictor: fraction of denoising steps
    int64_t mlm_warmup_epochs = 3;   // assessor: MLM epochs before pair training
    double mlm_mask_prob = 0.15;
    bool class_weights = true;       // classifier: inverse-frequency loss weights

    void validate() const;
};

struct EpochStats {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    int64_t wall_ms = 0;
};

using TrainHistory = std::vector<EpochStats>;

struct EvalReport {
    std::array<std::string, 2> class_names;    // index 0/1; rows true, cols predicted
    size_t positive_class = 1;                 // the class the ROC score measures
    std::array<std::array<int64_t, 2>, 2> confusion{{{0, 0}, {0, 0}}};
    double accuracy = 0.0;
    std::array<double, 2> precision{0, 0};
    std::array<double, 2> recall{0, 0};
    std::array<double, 2> f1{0, 0};
    struct RocPoint {
        double fpr, tpr, threshold;
    };
    std::vector<RocPoint> roc_points;
    double auc = 0.0;
    size_t total() const {
        return static_cast<size_t>(confusion[0][0] + confusion[0][1] + confusion[1][0] +
                                   confusion[1][1]);
    }
};

// Builds the full report from (true class, predicted class, positive score)
// triples. ROC sweeps all distinct scores plus sentinels; AUC is trapezoidal.
EvalReport build_eval_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<double>& scores,
                             std::array<std::string, 2> class_names, size_t positive_class);

// Tracks the monitored validation metric; observe() returns true when the
// epoch improved (so its checkpoint should be retained) and should_stop()
// turns true once `patience` non-improving epochs have passed.
struct EarlyStopper {
    EarlyStopMetric metric = EarlyStopMetric::ValLoss;
    int64_t patience = 3;
    double min_delta = 1e-4;
    double best = 0.0;
    bool has_best = false;
    int64_t since_best = 0;

    bool observe(double loss, double accuracy) {
        double v = metric == EarlyStopMetric::ValLoss ? loss : accuracy;
        bool improved;
        if (!has_best) {
            improved = true;
        } else if (metric == EarlyStopMetric::ValLoss) {
            improved = v < best - min_delta;
        } else {
            improved = v > best + min_delta;
        }
        if (improved) {
            best = v;
            has_best = true;
            since_best = 0;
        } else {
            ++since_best;
        }
        return improved;
    }
    bool should_stop() const { return since_best > patience; }
};

// inverse-frequency loss weights: total / (n_classes * count_c)
std::array<double, 2> inverse_class_weights(const std::array<size_t, 2>& counts);

// --- splits ---------------------------------------------------------------

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> val;
};

SplitIndices split_indices(size_t n, double val_fraction, uint64_t seed);

// labels[i] identifies the class of example i; every class keeps its ratio
// within one example in both halves
SplitIndices stratified_split(const std::vector<int>& labels, double val_fraction, uint64_t seed);

// --- training ---------------------------------------------------------------

struct PredictorTrainResult {
    PredictorModel model;
    TrainHistory history;
};

struct AssessorTrainResult {
    AssessorModel model;
    TrainHistory history;
};

struct ClassifierTrainResult {
    ClassifierModel model;
    TrainHistory history;
};

PredictorTrainResult train_predictor(
    const std::vector<std::pair<PacketRecord, PacketRecord>>& pairs,
    const std::vector<std::string>& kept_features, const BpeVocab& vocab,
    nn::ModelConfig model_cfg, const TrainConfig& cfg);

AssessorTrainResult train_assessor(const std::vector<PairExample>& pairs,
                                   const std::vector<std::string>& kept_features,
                                   const BpeVocab& vocab, nn::ModelConfig model_cfg,
                                   const TrainConfig& cfg);

ClassifierTrainResult train_classifier(const std::vector<PacketRecord>& records,
                                       const std::vector<std::string>& kept_features,
                                       const BpeVocab& vocab, nn::ModelConfig model_cfg,
                                       const TrainConfig& cfg);

// --- evaluation ---------------------------------------------------------------

EvalReport evaluate_classifier(const ClassifierModel& m, const std::vector<PacketRecord>& records,
                               const std::vector<std::string>& kept_features,
                               const BpeVocab& vocab);

EvalReport evaluate_assessor(const AssessorModel& m, const std::vector<PairExample>& pairs,
                             const std::vector<std::string>& kept_features, const BpeVocab& vocab);

// --- report emission ---------------------------------------------------------------

std::string eval_report_table(const EvalReport& r);
std::string eval_report_json(const EvalReport& r);
std::string roc_points_csv(const EvalReport& r);  // fpr,tpr,threshold header
void write_history_jsonl(std::ostream& out, const TrainHistory& history);

}  // namespace pktseer
