#include "pktseer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pktseer {

void TrainConfig::validate() const {
    if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
    if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
    if (early_stop_patience < 0) throw UsageError("train config: patience must be >= 0");
    if (learning_rate <= 0) throw UsageError("train config: learning_rate must be > 0");
    if (val_fraction < 0 || val_fraction >= 1)
        throw UsageError("train config: val_fraction must be in [0,1)");
    if (denoise_fraction < 0 || denoise_fraction > 1)
        throw UsageError("train config: denoise_fraction must be in [0,1]");
    if (mlm_warmup_epochs < 0) throw UsageError("train config: mlm_warmup_epochs must be >= 0");
}

std::array<double, 2> inverse_class_weights(const std::array<size_t, 2>& counts) {
    if (counts[0] == 0 || counts[1] == 0)
        throw DataError("inverse_class_weights: both classes must be present");
    double total = static_cast<double>(counts[0] + counts[1]);
    return {total / (2.0 * static_cast<double>(counts[0])),
            total / (2.0 * static_cast<double>(counts[1]))};
}

// ---------------------------------------------------------------------------
// splits

SplitIndices split_indices(size_t n, double val_fraction, uint64_t seed) {
    if (val_fraction <= 0 || val_fraction >= 1)
        throw UsageError("split: val_fraction must be in (0,1)");
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    DetRng rng(mix_seed(seed, 0x73706c6974));  // "split"
    rng.shuffle(idx);
    size_t n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(n)));
    SplitIndices out;
    out.val.assign(idx.begin(), idx.begin() + n_val);
    out.train.assign(idx.begin() + n_val, idx.end());
    return out;
}

SplitIndices stratified_split(const std::vector<int>& labels, double val_fraction,
                              uint64_t seed) {
    if (val_fraction <= 0 || val_fraction >= 1)
        throw UsageError("split: val_fraction must be in (0,1)");
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    DetRng rng(mix_seed(seed, 0x7374726174));  // "strat"
    SplitIndices out;
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < 2)
            throw DataError("stratified split: class " + std::to_string(cls) +
                            " has fewer than 2 examples");
        rng.shuffle(idx);
        size_t n_val =
            static_cast<size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? out.val : out.train).push_back(idx[i]);
    }
    rng.shuffle(out.train);
    rng.shuffle(out.val);
    return out;
}

// ---------------------------------------------------------------------------
// metrics

EvalReport build_eval_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<double>& scores,
                             std::array<std::string, 2> class_names, size_t positive_class) {
    if (truth.size() != predicted.size() || truth.size() != scores.size() || truth.empty())
        throw UsageError("build_eval_report: inconsistent or empty inputs");

    EvalReport r;
    r.class_names = std::move(class_names);
    r.positive_class = positive_class;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] > 1 || predicted[i] < 0 || predicted[i] > 1)
            throw UsageError("build_eval_report: class index out of range");
        r.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])] += 1;
    }

    double total = static_cast<double>(truth.size());
    r.accuracy = static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) / total;
    for (size_t c = 0; c < 2; ++c) {
        double col = static_cast<double>(r.confusion[0][c] + r.confusion[1][c]);
        double row = static_cast<double>(r.confusion[c][0] + r.confusion[c][1]);
        double tp = static_cast<double>(r.confusion[c][c]);
        r.precision[c] = col > 0 ? tp / col : 0.0;
        r.recall[c] = row > 0 ? tp / row : 0.0;
        double pr = r.precision[c] + r.recall[c];
        r.f1[c] = pr > 0 ? 2.0 * r.precision[c] * r.recall[c] / pr : 0.0;
    }

    // ROC sweep: predict positive when score >= threshold; thresholds are all
    // distinct scores plus sentinels 0, 1 and an anchor above every score
    size_t n_pos = 0, n_neg = 0;
    for (int t : truth) (static_cast<size_t>(t) == positive_class ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) {
        r.roc_points = {{0.0, 0.0, 2.0}, {1.0, 1.0, 0.0}};
        r.auc = 0.5;
        return r;
    }

    std::vector<std::pair<double, bool>> scored(truth.size());
    for (size_t i = 0; i < truth.size(); ++i)
        scored[i] = {scores[i], static_cast<size_t>(truth[i]) == positive_class};
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::set<double, std::greater<double>> thresholds{0.0, 1.0, 2.0};
    for (double s : scores) thresholds.insert(s);

    size_t cursor = 0, tp = 0, fp = 0;
    for (double t : thresholds) {
        while (cursor < scored.size() && scored[cursor].first >= t) {
            (scored[cursor].second ? tp : fp) += 1;
            ++cursor;
        }
        r.roc_points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                                static_cast<double>(tp) / static_cast<double>(n_pos), t});
    }

    double auc = 0.0;
    for (size_t i = 1; i < r.roc_points.size(); ++i) {
        const auto& a = r.roc_points[i - 1];
        const auto& b = r.roc_points[i];
        auc += (b.fpr - a.fpr) * (b.tpr + a.tpr) * 0.5;
    }
    r.auc = auc;
    return r;
}

// ---------------------------------------------------------------------------
// training plumbing

namespace {

std::vector<int32_t> to_ids(const std::vector<TokenId>& v) {
    return std::vector<int32_t>(v.begin(), v.end());
}

// core token ids (no specials) of a serialized packet, capped to fit the
// model's sequence budget alongside BOS/EOS
std::vector<int32_t> packet_core_ids(const PacketRecord& rec,
                                     const std::vector<std::string>& kept,
                                     const BpeVocab& vocab, int64_t max_seq_len) {
    std::vector<int32_t> ids = to_ids(encode(serialize_packet(rec, kept), vocab, false).ids);
    size_t cap = static_cast<size_t>(max_seq_len) - 2;
    if (ids.size() > cap) ids.resize(cap);
    return ids;
}

std::vector<int32_t> with_bos_eos(const std::vector<int32_t>& core) {
    std::vector<int32_t> out;
    out.reserve(core.size() + 2);
    out.push_back(BOS);
    out.insert(out.end(), core.begin(), core.end());
    out.push_back(EOS);
    return out;
}

void check_finite(double loss, const char* phase, int64_t epoch, size_t step, size_t example) {
    if (!std::isfinite(loss))
        throw TrainingDivergence(std::string(phase) + ": non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step) +
                                 " example " + std::to_string(example));
}

int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// predictor

PredictorTrainResult train_predictor(
    const std::vector<std::pair<PacketRecord, PacketRecord>>& pairs,
    const std::vector<std::string>& kept_features, const BpeVocab& vocab,
    nn::ModelConfig model_cfg, const TrainConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw DataError("train_predictor: no training pairs");
    if (cfg.max_seq_len > 0) model_cfg.max_seq_len = cfg.max_seq_len;
    model_cfg.vocab_size = std::max<int64_t>(model_cfg.vocab_size, vocab.size());

    struct Example {
        std::vector<int32_t> cur_core, next_core;
    };
    std::vector<Example> ex(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        ex[i].cur_core = packet_core_ids(pairs[i].first, kept_features, vocab,
                                         model_cfg.max_seq_len);
        ex[i].next_core = packet_core_ids(pairs[i].second, kept_features, vocab,
                                          model_cfg.max_seq_len);
    }

    SplitIndices split;
    if (cfg.val_fraction > 0 && ex.size() >= 2) {
        split = split_indices(ex.size(), cfg.val_fraction, cfg.seed);
    } else {
        split.train.resize(ex.size());
        std::iota(split.train.begin(), split.train.end(), 0);
        split.val = split.train;
    }
    if (split.train.empty()) throw DataError("train_predictor: empty training split");

    nn::ModelParams params = init_params("predictor", model_cfg, cfg.seed);
    params.kept_features = kept_features;
    nn::AdamState adam;
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = static_cast<float>(cfg.learning_rate);
    DetRng dropout_rng(mix_seed(cfg.seed, 0x64726f70));  // "drop"

    auto teacher_forced_loss = [&](const Example& e, const std::vector<int32_t>* enc_override,
                                   const nn::ForwardCtx& ctx) {
        const std::vector<int32_t> enc_ids =
            enc_override ? *enc_override : with_bos_eos(e.cur_core);
        std::vector<int32_t> dec_in{BOS};
        dec_in.insert(dec_in.end(), e.next_core.begin(), e.next_core.end());
        std::vector<int32_t> targets(e.next_core.begin(), e.next_core.end());
        targets.push_back(EOS);
        nn::Tensor enc_out = nn::encoder_forward(params, enc_ids, ctx);
        nn::Tensor h = nn::decoder_forward(params, dec_in, enc_out, ctx);
        return nn::autoregressive_nll(nn::lm_logits(h, params.at("lm_head.W")), targets);
    };
    // denoising route: reconstruct the current packet from its span-infilled
    // corruption
    auto denoise_loss = [&](const Example& e, uint64_t step_seed, const nn::ForwardCtx& ctx) {
        TokenSequence orig;
        for (int32_t id : with_bos_eos(e.cur_core)) orig.ids.push_back(id);
        auto [corrupted, original] = make_denoising_corruption(orig, vocab, step_seed);
        Example recon{e.cur_core, e.cur_core};
        std::vector<int32_t> enc_ids = to_ids(corrupted.ids);
        return teacher_forced_loss(recon, &enc_ids, ctx);
    };

    EarlyStopper stopper{cfg.early_stop_metric, cfg.early_stop_patience, cfg.min_delta};
    nn::ModelParams best = clone_params(params);
    TrainHistory history;
    auto t0 = std::chrono::steady_clock::now();

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order = split.train;
        DetRng order_rng(mix_seed(cfg.seed ^ static_cast<uint64_t>(epoch), 0x6f726465));
        order_rng.shuffle(order);
        nn::ForwardCtx ctx{&dropout_rng, model_cfg.dropout_prob};

        double epoch_loss = 0.0;
        size_t step = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size), ++step) {
            size_t bn = std::min(order.size() - b, static_cast<size_t>(cfg.batch_size));
            nn::zero_grads(params);
            for (size_t k = 0; k < bn; ++k) {
                size_t i = order[b + k];
                uint64_t step_seed = mix_seed(cfg.seed, static_cast<uint64_t>(epoch),
                                              static_cast<uint64_t>(i));
                bool denoise = order_rng.bernoulli(cfg.denoise_fraction);
                nn::Tensor loss = denoise ? denoise_loss(ex[i], step_seed, ctx)
                                          : teacher_forced_loss(ex[i], nullptr, ctx);
                check_finite(loss.item(), "train_predictor", epoch, step, i);
                epoch_loss += loss.item();
                nn::backward(nn::scale(loss, 1.0f / static_cast<float>(bn)));
            }
            nn::adam_step(params, adam, adam_cfg);
        }
        epoch_loss /= static_cast<double>(order.size());

        double val_loss = 0.0, val_tokens = 0.0, val_hits = 0.0;
        for (size_t i : split.val) {
            nn::Tensor loss = teacher_forced_loss(ex[i], nullptr, {});
            val_loss += loss.item();
            // token-level greedy accuracy as the accuracy analogue
            std::vector<int32_t> dec_in{BOS};
            dec_in.insert(dec_in.end(), ex[i].next_core.begin(), ex[i].next_core.end());
            std::vector<int32_t> targets(ex[i].next_core.begin(), ex[i].next_core.end());
            targets.push_back(EOS);
            nn::Tensor enc_out = nn::encoder_forward(params, with_bos_eos(ex[i].cur_core), {});
            nn::Tensor h = nn::decoder_forward(params, dec_in, enc_out, {});
            nn::Tensor logits = nn::lm_logits(h, params.at("lm_head.W"));
            int64_t v = logits.dim(1);
            for (size_t r = 0; r < targets.size(); ++r) {
                const float* row = logits.data().data() + static_cast<int64_t>(r) * v;
                int32_t arg = 0;
                for (int64_t c = 1; c < v; ++c)
                    if (row[c] > row[arg]) arg = static_cast<int32_t>(c);
                val_hits += arg == targets[r] ? 1.0 : 0.0;
                val_tokens += 1.0;
            }
        }
        val_loss /= static_cast<double>(split.val.size());
        double val_acc = val_tokens > 0 ? val_hits / val_tokens : 0.0;

        history.push_back({epoch, epoch_loss, val_loss, val_acc, elapsed_ms(t0)});
        if (stopper.observe(val_loss, val_acc)) best = clone_params(params);
        if (stopper.should_stop()) break;
    }
    return {PredictorModel{std::move(best)}, std::move(history)};
}

// ---------------------------------------------------------------------------
// shared encoder-classification loop (assessor pair phase, classifier)

namespace {

struct SupervisedExample {
    std::vector<int32_t> ids;
    int32_t label = 0;
    float weight = 1.0f;
};

struct SupervisedResult {
    nn::ModelParams best;
    TrainHistory history;
};

// forward_logits(params, ids, ctx) must return the single-row class logits
template <typename ForwardFn>
SupervisedResult run_supervised(nn::ModelParams params,
                                const std::vector<SupervisedExample>& ex,
                                const SplitIndices& split, const TrainConfig& cfg,
                                int64_t first_epoch_number, TrainHistory history,
                                DetRng& dropout_rng, nn::AdamState& adam,
                                ForwardFn&& forward_logits, const char* phase) {
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = static_cast<float>(cfg.learning_rate);
    EarlyStopper stopper{cfg.early_stop_metric, cfg.early_stop_patience, cfg.min_delta};
    nn::ModelParams best = clone_params(params);
    auto t0 = std::chrono::steady_clock::now();

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order = split.train;
        DetRng order_rng(mix_seed(cfg.seed ^ static_cast<uint64_t>(epoch), 0x6f726465));
        order_rng.shuffle(order);
        nn::ForwardCtx ctx{&dropout_rng, params.config.dropout_prob};

        double epoch_loss = 0.0;
        size_t step = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size), ++step) {
            size_t bn = std::min(order.size() - b, static_cast<size_t>(cfg.batch_size));
            nn::zero_grads(params);
            for (size_t k = 0; k < bn; ++k) {
                size_t i = order[b + k];
                nn::Tensor logits = forward_logits(params, ex[i].ids, ctx);
                nn::Tensor loss = nn::classification_loss(logits, ex[i].label, ex[i].weight);
                check_finite(loss.item(), phase, epoch, step, i);
                epoch_loss += loss.item();
                nn::backward(nn::scale(loss, 1.0f / static_cast<float>(bn)));
            }
            nn::adam_step(params, adam, adam_cfg);
        }
        epoch_loss /= static_cast<double>(order.size());

        double val_loss = 0.0, val_hits = 0.0;
        for (size_t i : split.val) {
            nn::Tensor logits = forward_logits(params, ex[i].ids, {});
            nn::Tensor loss = nn::classification_loss(logits, ex[i].label, ex[i].weight);
            val_loss += loss.item();
            const auto& row = logits.data();
            int32_t arg = row[1] > row[0] ? 1 : 0;
            val_hits += arg == ex[i].label ? 1.0 : 0.0;
        }
        val_loss /= static_cast<double>(split.val.size());
        double val_acc = val_hits / static_cast<double>(split.val.size());

        history.push_back(
            {first_epoch_number + epoch - 1, epoch_loss, val_loss, val_acc, elapsed_ms(t0)});
        if (stopper.observe(val_loss, val_acc)) best = clone_params(params);
        if (stopper.should_stop()) break;
    }
    return {std::move(best), std::move(history)};
}

}  // namespace

// ---------------------------------------------------------------------------
// assessor

AssessorTrainResult train_assessor(const std::vector<PairExample>& pairs,
                                   const std::vector<std::string>& kept_features,
                                   const BpeVocab& vocab, nn::ModelConfig model_cfg,
                                   const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.max_seq_len > 0) model_cfg.max_seq_len = cfg.max_seq_len;
    model_cfg.vocab_size = std::max<int64_t>(model_cfg.vocab_size, vocab.size());

    bool has_pos = false, has_neg = false;
    for (const auto& p : pairs) {
        (p.label == PairLabel::Successive ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw DataError("train_assessor: both Successive and NonSuccessive examples required");

    std::vector<SupervisedExample> ex(pairs.size());
    std::vector<int> labels(pairs.size());
    size_t max_len = static_cast<size_t>(model_cfg.max_seq_len);
    for (size_t i = 0; i < pairs.size(); ++i) {
        TokenSequence seq = make_pair_input(serialize_packet(pairs[i].first, kept_features),
                                            serialize_packet(pairs[i].second, kept_features),
                                            vocab, max_len);
        // trailing PADs carry nothing for the CLS head; drop them
        size_t n = seq.ids.size();
        while (n > 0 && seq.ids[n - 1] == PAD) --n;
        ex[i].ids.assign(seq.ids.begin(), seq.ids.begin() + n);
        ex[i].label = pairs[i].label == PairLabel::Successive ? 0 : 1;
        labels[i] = ex[i].label;
    }

    SplitIndices split;
    if (cfg.val_fraction > 0) {
        split = stratified_split(labels, cfg.val_fraction, cfg.seed);
    } else {
        split.train.resize(ex.size());
        std::iota(split.train.begin(), split.train.end(), 0);
        split.val = split.train;
    }

    nn::ModelParams params = init_params("assessor", model_cfg, cfg.seed);
    params.kept_features = kept_features;
    nn::AdamState adam;
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = static_cast<float>(cfg.learning_rate);
    DetRng dropout_rng(mix_seed(cfg.seed, 0x64726f70));
    TrainHistory history;
    auto t0 = std::chrono::steady_clock::now();

    // MLM warm-up: the desk-scale stand-in for starting from a pretrained
    // bidirectional encoder
    for (int64_t epoch = 1; epoch <= cfg.mlm_warmup_epochs; ++epoch) {
        std::vector<size_t> order = split.train;
        DetRng order_rng(mix_seed(cfg.seed ^ static_cast<uint64_t>(epoch), 0x776d7570));
        order_rng.shuffle(order);
        nn::ForwardCtx ctx{&dropout_rng, model_cfg.dropout_prob};

        double epoch_loss = 0.0;
        size_t counted = 0, step = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size), ++step) {
            size_t bn = std::min(order.size() - b, static_cast<size_t>(cfg.batch_size));
            nn::zero_grads(params);
            for (size_t k = 0; k < bn; ++k) {
                size_t i = order[b + k];
                TokenSequence seq;
                for (int32_t id : ex[i].ids) seq.ids.push_back(id);
                MaskedBatch masked = make_mlm_corruption(
                    seq, cfg.mlm_mask_prob, vocab,
                    mix_seed(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(i)));
                if (masked.masked_positions.empty()) continue;
                nn::Tensor h = nn::encoder_forward(params, to_ids(masked.corrupted.ids), ctx);
                nn::MlmLoss ml = nn::mlm_loss(h, params.at("mlm_head.W"),
                                              masked.masked_positions,
                                              to_ids(masked.target_ids));
                check_finite(ml.loss.item(), "train_assessor(mlm)", epoch, step, i);
                epoch_loss += ml.loss.item();
                ++counted;
                nn::backward(nn::scale(ml.loss, 1.0f / static_cast<float>(bn)));
            }
            nn::adam_step(params, adam, adam_cfg);
        }
        epoch_loss /= std::max<double>(1.0, static_cast<double>(counted));

        double val_loss = 0.0;
        size_t val_counted = 0;
        for (size_t i : split.val) {
            TokenSequence seq;
            for (int32_t id : ex[i].ids) seq.ids.push_back(id);
            MaskedBatch masked =
                make_mlm_corruption(seq, cfg.mlm_mask_prob, vocab,
                                    mix_seed(cfg.seed, 0x76616c, static_cast<uint64_t>(i)));
            if (masked.masked_positions.empty()) continue;
            nn::Tensor h = nn::encoder_forward(params, to_ids(masked.corrupted.ids), {});
            val_loss += nn::mlm_loss(h, params.at("mlm_head.W"), masked.masked_positions,
                                     to_ids(masked.target_ids))
                            .loss.item();
            ++val_counted;
        }
        val_loss /= std::max<double>(1.0, static_cast<double>(val_counted));
        history.push_back({epoch, epoch_loss, val_loss, 0.0, elapsed_ms(t0)});
    }

    auto forward = [](const nn::ModelParams& p, const std::vector<int32_t>& ids,
                      const nn::ForwardCtx& ctx) {
        nn::Tensor h = nn::encoder_forward(p, ids, ctx);
        return nn::add_bias(nn::lm_logits(nn::gather_rows(h, {0}), p.at("pair_head.W")),
                            p.at("pair_head.b"));
    };
    SupervisedResult res =
        run_supervised(std::move(params), ex, split, cfg, cfg.mlm_warmup_epochs + 1,
                       std::move(history), dropout_rng, adam, forward, "train_assessor");
    return {AssessorModel{std::move(res.best)}, std::move(res.history)};
}

// ---------------------------------------------------------------------------
// classifier

ClassifierTrainResult train_classifier(const std::vector<PacketRecord>& records,
                                       const std::vector<std::string>& kept_features,
                                       const BpeVocab& vocab, nn::ModelConfig model_cfg,
                                       const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.max_seq_len > 0) model_cfg.max_seq_len = cfg.max_seq_len;
    model_cfg.vocab_size = std::max<int64_t>(model_cfg.vocab_size, vocab.size());

    std::vector<SupervisedExample> ex;
    std::vector<int> labels;
    std::array<size_t, 2> counts{0, 0};
    for (const auto& r : records) {
        if (!r.label) throw DataError("train_classifier: unlabeled packet in training data");
        SupervisedExample e;
        e.ids = with_bos_eos(packet_core_ids(r, kept_features, vocab, model_cfg.max_seq_len));
        e.label = r.label->malicious ? 1 : 0;
        counts[static_cast<size_t>(e.label)] += 1;
        labels.push_back(e.label);
        ex.push_back(std::move(e));
    }
    if (counts[0] == 0 || counts[1] == 0)
        throw DataError("train_classifier: both classes required in training data");

    if (cfg.class_weights) {
        std::array<double, 2> w = inverse_class_weights(counts);
        for (auto& e : ex) e.weight = static_cast<float>(w[static_cast<size_t>(e.label)]);
    }

    SplitIndices split;
    if (cfg.val_fraction > 0) {
        split = stratified_split(labels, cfg.val_fraction, cfg.seed);
    } else {
        split.train.resize(ex.size());
        std::iota(split.train.begin(), split.train.end(), 0);
        split.val = split.train;
    }

    nn::ModelParams params = init_params("classifier", model_cfg, cfg.seed);
    params.kept_features = kept_features;
    nn::AdamState adam;
    DetRng dropout_rng(mix_seed(cfg.seed, 0x64726f70));

    auto forward = [](const nn::ModelParams& p, const std::vector<int32_t>& ids,
                      const nn::ForwardCtx& ctx) {
        nn::Tensor enc_out = nn::encoder_forward(p, ids, ctx);
        nn::Tensor h = nn::decoder_forward(p, ids, enc_out, ctx);
        return nn::add_bias(
            nn::lm_logits(nn::gather_rows(h, {static_cast<int32_t>(h.dim(0) - 1)}),
                          p.at("cls_head.W")),
            p.at("cls_head.b"));
    };
    SupervisedResult res = run_supervised(std::move(params), ex, split, cfg, 1, {}, dropout_rng,
                                          adam, forward, "train_classifier");
    return {ClassifierModel{std::move(res.best)}, std::move(res.history)};
}

// ---------------------------------------------------------------------------
// evaluation

EvalReport evaluate_classifier(const ClassifierModel& m, const std::vector<PacketRecord>& records,
                               const std::vector<std::string>& kept_features,
                               const BpeVocab& vocab) {
    if (records.empty()) throw DataError("evaluate_classifier: empty dataset");
    std::vector<int> truth, pred;
    std::vector<double> scores;
    for (const auto& r : records) {
        if (!r.label) throw DataError("evaluate_classifier: unlabeled packet");
        std::vector<int32_t> ids =
            with_bos_eos(packet_core_ids(r, kept_features, vocab, m.params.config.max_seq_len));
        TokenSequence seq;
        for (int32_t id : ids) seq.ids.push_back(id);
        ClassifyVerdict v = classify_packet(m, seq);
        truth.push_back(r.label->malicious ? 1 : 0);
        pred.push_back(v.label.malicious ? 1 : 0);
        scores.push_back(v.score);
    }
    return build_eval_report(truth, pred, scores, {"Normal", "Malicious"}, 1);
}

EvalReport evaluate_assessor(const AssessorModel& m, const std::vector<PairExample>& pairs,
                             const std::vector<std::string>& kept_features,
                             const BpeVocab& vocab) {
    if (pairs.empty()) throw DataError("evaluate_assessor: empty dataset");
    std::vector<int> truth, pred;
    std::vector<double> scores;
    size_t max_len = static_cast<size_t>(m.params.config.max_seq_len);
    for (const auto& p : pairs) {
        TokenSequence seq = make_pair_input(serialize_packet(p.first, kept_features),
                                            serialize_packet(p.second, kept_features), vocab,
                                            max_len);
        AssessVerdict v = assess_pair(m, seq);
        truth.push_back(p.label == PairLabel::Successive ? 0 : 1);
        pred.push_back(v.label == PairLabel::Successive ? 0 : 1);
        scores.push_back(v.p_successive);
    }
    return build_eval_report(truth, pred, scores, {"Successive", "NonSuccessive"}, 0);
}

// ---------------------------------------------------------------------------
// report emission

std::string eval_report_table(const EvalReport& r) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s\n", "", "precision", "recall", "f1-score");
    os << buf;
    for (size_t c = 0; c < 2; ++c) {
        std::snprintf(buf, sizeof buf, "%-14s %9.4f %9.4f %9.4f\n", r.class_names[c].c_str(),
                      r.precision[c], r.recall[c], r.f1[c]);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-14s %29.4f\n", "accuracy", r.accuracy);
    os << buf;
    std::snprintf(buf, sizeof buf, "%-14s %29.4f\n", "auc", r.auc);
    os << buf;
    os << "confusion (rows true, cols predicted):\n";
    for (size_t t = 0; t < 2; ++t) {
        std::snprintf(buf, sizeof buf, "  %-12s %9lld %9lld\n", r.class_names[t].c_str(),
                      static_cast<long long>(r.confusion[t][0]),
                      static_cast<long long>(r.confusion[t][1]));
        os << buf;
    }
    return os.str();
}

std::string eval_report_json(const EvalReport& r) {
    nlohmann::json j;
    j["class_names"] = r.class_names;
    j["positive_class"] = r.positive_class;
    j["confusion"] = {{r.confusion[0][0], r.confusion[0][1]},
                      {r.confusion[1][0], r.confusion[1][1]}};
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["auc"] = r.auc;
    nlohmann::json roc = nlohmann::json::array();
    for (const auto& p : r.roc_points) roc.push_back({p.fpr, p.tpr, p.threshold});
    j["roc_points"] = roc;
    return j.dump(2);
}

std::string roc_points_csv(const EvalReport& r) {
    std::string out = "fpr,tpr,threshold\n";
    for (const auto& p : r.roc_points) {
        out += format_value(p.fpr);
        out += ',';
        out += format_value(p.tpr);
        out += ',';
        out += format_value(p.threshold);
        out += '\n';
    }
    return out;
}

void write_history_jsonl(std::ostream& out, const TrainHistory& history) {
    for (const auto& e : history) {
        nlohmann::json j{{"epoch", e.epoch},
                         {"train_loss", e.train_loss},
                         {"val_loss", e.val_loss},
                         {"val_accuracy", e.val_accuracy},
                         {"wall_ms", e.wall_ms}};
        out << j.dump() << '\n';
    }
}

}  // namespace pktseer
