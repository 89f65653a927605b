// Python bindings over the main pipeline operations: ingestion, feature
// selection, tokenization, training, evaluation and the prediction loop.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "pktseer/cli_support.hpp"
#include "pktseer/featsel.hpp"
#include "pktseer/ingest.hpp"
#include "pktseer/models.hpp"
#include "pktseer/synth.hpp"
#include "pktseer/tokenizer.hpp"
#include "pktseer/trainer.hpp"

namespace py = pybind11;
using namespace pktseer;

namespace {

CsvParseResult parse_csv_text(const std::string& text) {
    std::istringstream in(text);
    return parse_feature_csv(in);
}

std::string records_to_csv(const std::vector<std::string>& names,
                           const std::vector<PacketRecord>& records) {
    std::ostringstream os;
    write_feature_csv(os, names, records);
    return os.str();
}

BpeVocab vocab_from_text(const std::string& text) {
    std::istringstream in(text);
    return load_vocab(in);
}

std::string vocab_to_text(const BpeVocab& v) {
    std::ostringstream os;
    save_vocab(os, v);
    return os.str();
}

}  // namespace

PYBIND11_MODULE(_pktseer, m) {
    m.doc() = "packet-level intrusion prediction with small transformers";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<TrainingDivergence>(m, "TrainingDivergenceError",
                                               PyExc_RuntimeError);

    // --- data types ---
    py::class_<FlowKey>(m, "FlowKey")
        .def(py::init<>())
        .def_readwrite("src_addr", &FlowKey::src_addr)
        .def_readwrite("dst_addr", &FlowKey::dst_addr)
        .def_readwrite("src_port", &FlowKey::src_port)
        .def_readwrite("dst_port", &FlowKey::dst_port)
        .def_readwrite("protocol", &FlowKey::protocol)
        .def("__eq__", [](const FlowKey& a, const FlowKey& b) { return a == b; })
        .def("__repr__", [](const FlowKey& k) {
            return "FlowKey(" + k.src_addr + ":" + std::to_string(k.src_port) + " -> " +
                   k.dst_addr + ":" + std::to_string(k.dst_port) + " proto " +
                   std::to_string(k.protocol) + ")";
        });

    py::class_<Label>(m, "Label")
        .def_readonly("malicious", &Label::malicious)
        .def_readonly("attack_name", &Label::attack_name)
        .def_static("normal", &Label::normal)
        .def_static("attack", &Label::attack);

    py::class_<PacketRecord>(m, "PacketRecord")
        .def(py::init<>())
        .def_readwrite("flow_key", &PacketRecord::flow_key)
        .def_readwrite("timestamp_us", &PacketRecord::timestamp_us)
        .def_readwrite("features", &PacketRecord::features)
        .def_readwrite("label", &PacketRecord::label);

    py::class_<CsvParseResult>(m, "Dataset")
        .def_readonly("records", &CsvParseResult::records)
        .def_readonly("feature_names", &CsvParseResult::feature_names)
        .def_property_readonly("rows_read",
                               [](const CsvParseResult& r) { return r.report.rows_read; })
        .def_property_readonly("rows_skipped",
                               [](const CsvParseResult& r) { return r.report.rows_skipped; })
        .def_property_readonly("missing_cells",
                               [](const CsvParseResult& r) { return r.report.missing_cells; });

    // --- ingest ---
    m.def("parse_feature_csv", &parse_csv_text, py::arg("text"),
          "Parse feature-CSV text into a Dataset");
    m.def("records_to_csv", &records_to_csv, py::arg("feature_names"), py::arg("records"));

    // --- synth ---
    py::class_<SynthScenario>(m, "SynthScenario")
        .def(py::init<>())
        .def_readwrite("n_flows", &SynthScenario::n_flows)
        .def_readwrite("target_rows", &SynthScenario::target_rows)
        .def_readwrite("flow_len_min", &SynthScenario::flow_len_min)
        .def_readwrite("flow_len_max", &SynthScenario::flow_len_max)
        .def_readwrite("malicious_fraction", &SynthScenario::malicious_fraction)
        .def_readwrite("seed", &SynthScenario::seed);
    py::class_<SynthResult>(m, "SynthResult")
        .def_readonly("feature_names", &SynthResult::feature_names)
        .def_readonly("records", &SynthResult::records)
        .def_readonly("malicious_rows", &SynthResult::malicious_rows)
        .def_readonly("flows_emitted", &SynthResult::flows_emitted);
    m.def("generate_synthetic_traffic", &generate_synthetic_traffic, py::arg("scenario"));

    // --- feature selection ---
    py::class_<FeatureMatrix>(m, "FeatureMatrix")
        .def(py::init([](std::vector<std::string> names, std::vector<std::vector<double>> rows) {
                 FeatureMatrix fm;
                 fm.column_names = std::move(names);
                 fm.n_rows = rows.size();
                 for (const auto& row : rows) {
                     if (row.size() != fm.column_names.size())
                         throw UsageError("FeatureMatrix: ragged rows");
                     fm.values.insert(fm.values.end(), row.begin(), row.end());
                 }
                 return fm;
             }),
             py::arg("column_names"), py::arg("rows"))
        .def_readonly("column_names", &FeatureMatrix::column_names)
        .def_property_readonly("n_rows", [](const FeatureMatrix& f) { return f.n_rows; })
        .def("row", [](const FeatureMatrix& f, size_t r) {
            if (r >= f.n_rows) throw UsageError("row index out of range");
            std::vector<double> out(f.n_cols());
            for (size_t c = 0; c < f.n_cols(); ++c) out[c] = f.at(r, c);
            return out;
        });

    py::class_<SelectionReport>(m, "SelectionReport")
        .def_readonly("kept", &SelectionReport::kept)
        .def_property_readonly("dropped_low_variance",
                               [](const SelectionReport& r) { return r.dropped_low_variance; })
        .def_property_readonly("dropped_correlated",
                               [](const SelectionReport& r) {
                                   std::vector<std::tuple<std::string, std::string, double>> out;
                                   for (const auto& d : r.dropped_correlated)
                                       out.emplace_back(d.name, d.partner, d.correlation);
                                   return out;
                               })
        .def_readonly("var_cutoff", &SelectionReport::var_cutoff)
        .def_readonly("corr_threshold", &SelectionReport::corr_threshold);

    m.def("records_to_matrix", &records_to_matrix, py::arg("feature_names"), py::arg("records"));
    m.def("min_max_scale", &min_max_scale, py::arg("matrix"));
    m.def("select_features", &select_features, py::arg("matrix"), py::arg("var_threshold") = 0.25,
          py::arg("corr_threshold") = 0.98);

    // --- tokenizer ---
    py::class_<BpeVocab>(m, "BpeVocab")
        .def_property_readonly("size", &BpeVocab::size)
        .def_property_readonly("n_merges",
                               [](const BpeVocab& v) { return v.merges().size(); })
        .def("to_text", &vocab_to_text)
        .def_static("from_text", &vocab_from_text, py::arg("text"));

    m.def("train_bpe", &train_bpe, py::arg("corpus"), py::arg("vocab_size") = 512);
    m.def(
        "encode",
        [](const std::string& text, const BpeVocab& vocab, bool add_bos_eos) {
            return encode(text, vocab, add_bos_eos).ids;
        },
        py::arg("text"), py::arg("vocab"), py::arg("add_bos_eos") = false);
    m.def(
        "decode",
        [](const std::vector<TokenId>& ids, const BpeVocab& vocab) {
            TokenSequence seq;
            seq.ids = ids;
            return decode(seq, vocab);
        },
        py::arg("ids"), py::arg("vocab"));
    m.def("serialize_packet", &serialize_packet, py::arg("record"), py::arg("kept_features"));
    m.def(
        "parse_packet_text",
        [](const std::string& text, const std::vector<std::string>& kept)
            -> std::optional<PacketRecord> {
            PacketParseResult r = parse_packet_text(text, kept);
            if (r.ok()) return r.record;
            return std::nullopt;
        },
        py::arg("text"), py::arg("kept_features"),
        "Returns the parsed record, or None when the text is malformed");

    // --- training / evaluation ---
    py::class_<nn::ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("vocab_size", &nn::ModelConfig::vocab_size)
        .def_readwrite("d_model", &nn::ModelConfig::d_model)
        .def_readwrite("n_heads", &nn::ModelConfig::n_heads)
        .def_readwrite("n_enc_layers", &nn::ModelConfig::n_enc_layers)
        .def_readwrite("n_dec_layers", &nn::ModelConfig::n_dec_layers)
        .def_readwrite("d_ff", &nn::ModelConfig::d_ff)
        .def_readwrite("max_seq_len", &nn::ModelConfig::max_seq_len)
        .def_readwrite("dropout_prob", &nn::ModelConfig::dropout_prob);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience)
        .def_readwrite("val_fraction", &TrainConfig::val_fraction)
        .def_readwrite("denoise_fraction", &TrainConfig::denoise_fraction)
        .def_readwrite("mlm_warmup_epochs", &TrainConfig::mlm_warmup_epochs);

    py::class_<EpochStats>(m, "EpochStats")
        .def_readonly("epoch", &EpochStats::epoch)
        .def_readonly("train_loss", &EpochStats::train_loss)
        .def_readonly("val_loss", &EpochStats::val_loss)
        .def_readonly("val_accuracy", &EpochStats::val_accuracy);

    py::class_<EvalReport>(m, "EvalReport")
        .def_property_readonly("confusion",
                               [](const EvalReport& r) {
                                   return std::vector<std::vector<int64_t>>{
                                       {r.confusion[0][0], r.confusion[0][1]},
                                       {r.confusion[1][0], r.confusion[1][1]}};
                               })
        .def_readonly("accuracy", &EvalReport::accuracy)
        .def_readonly("auc", &EvalReport::auc)
        .def_property_readonly("precision",
                               [](const EvalReport& r) {
                                   return std::vector<double>{r.precision[0], r.precision[1]};
                               })
        .def_property_readonly(
            "recall",
            [](const EvalReport& r) { return std::vector<double>{r.recall[0], r.recall[1]}; })
        .def_property_readonly(
            "f1", [](const EvalReport& r) { return std::vector<double>{r.f1[0], r.f1[1]}; })
        .def("table", &eval_report_table)
        .def("json", &eval_report_json);

    py::class_<PredictorModel>(m, "PredictorModel");
    py::class_<AssessorModel>(m, "AssessorModel");
    py::class_<ClassifierModel>(m, "ClassifierModel");

    m.def(
        "train_classifier",
        [](const std::vector<PacketRecord>& records, const std::vector<std::string>& kept,
           const BpeVocab& vocab, const nn::ModelConfig& mc, const TrainConfig& tc) {
            ClassifierTrainResult r = train_classifier(records, kept, vocab, mc, tc);
            return py::make_tuple(std::move(r.model), r.history);
        },
        py::arg("records"), py::arg("kept_features"), py::arg("vocab"), py::arg("model_config"),
        py::arg("train_config"));
    m.def(
        "train_assessor",
        [](const std::vector<PairExample>& pairs, const std::vector<std::string>& kept,
           const BpeVocab& vocab, const nn::ModelConfig& mc, const TrainConfig& tc) {
            AssessorTrainResult r = train_assessor(pairs, kept, vocab, mc, tc);
            return py::make_tuple(std::move(r.model), r.history);
        },
        py::arg("pairs"), py::arg("kept_features"), py::arg("vocab"), py::arg("model_config"),
        py::arg("train_config"));
    m.def(
        "train_predictor",
        [](const std::vector<std::pair<PacketRecord, PacketRecord>>& pairs,
           const std::vector<std::string>& kept, const BpeVocab& vocab,
           const nn::ModelConfig& mc, const TrainConfig& tc) {
            PredictorTrainResult r = train_predictor(pairs, kept, vocab, mc, tc);
            return py::make_tuple(std::move(r.model), r.history);
        },
        py::arg("pairs"), py::arg("kept_features"), py::arg("vocab"), py::arg("model_config"),
        py::arg("train_config"));

    py::class_<PairExample>(m, "PairExample")
        .def_readonly("first", &PairExample::first)
        .def_readonly("second", &PairExample::second)
        .def_property_readonly("successive", [](const PairExample& p) {
            return p.label == PairLabel::Successive;
        });

    m.def(
        "make_pair_dataset",
        [](const std::vector<PacketRecord>& records, double negative_ratio, uint64_t seed) {
            return make_pair_dataset(assemble_flows(records), negative_ratio, seed);
        },
        py::arg("records"), py::arg("negative_ratio") = 1.0, py::arg("seed") = 0);
    m.def(
        "make_next_packet_pairs",
        [](const std::vector<PacketRecord>& records) {
            return make_next_packet_pairs(assemble_flows(records));
        },
        py::arg("records"));

    m.def("evaluate_classifier", &evaluate_classifier, py::arg("model"), py::arg("records"),
          py::arg("kept_features"), py::arg("vocab"));
    m.def("evaluate_assessor", &evaluate_assessor, py::arg("model"), py::arg("pairs"),
          py::arg("kept_features"), py::arg("vocab"));

    // --- checkpoints ---
    m.def("save_checkpoint", [](const std::string& path, const PredictorModel& m_) {
        nn::save_checkpoint_file(path, m_.params);
    });
    m.def("save_checkpoint", [](const std::string& path, const AssessorModel& m_) {
        nn::save_checkpoint_file(path, m_.params);
    });
    m.def("save_checkpoint", [](const std::string& path, const ClassifierModel& m_) {
        nn::save_checkpoint_file(path, m_.params);
    });
    m.def("load_predictor", [](const std::string& path) {
        return PredictorModel{nn::load_checkpoint_file(path)};
    });
    m.def("load_assessor", [](const std::string& path) {
        return AssessorModel{nn::load_checkpoint_file(path)};
    });
    m.def("load_classifier", [](const std::string& path) {
        return ClassifierModel{nn::load_checkpoint_file(path)};
    });

    // --- pipeline ---
    py::class_<PredictionOutcome>(m, "PredictionOutcome")
        .def_readonly("predicted_text", &PredictionOutcome::predicted_text)
        .def_readonly("malformed", &PredictionOutcome::malformed)
        .def_property_readonly("assessed_successive",
                               [](const PredictionOutcome& o) {
                                   return o.assessor_verdict.label == PairLabel::Successive;
                               })
        .def_property_readonly("malicious",
                               [](const PredictionOutcome& o) {
                                   return o.classifier_verdict.label.malicious;
                               })
        .def_property_readonly(
            "score", [](const PredictionOutcome& o) { return o.classifier_verdict.score; })
        .def("json", &outcome_to_json);

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init([](const PredictorModel& p, const AssessorModel& a,
                         const ClassifierModel& c, const BpeVocab& v,
                         std::vector<std::string> kept) {
                 return Pipeline(&p, &a, &c, &v, std::move(kept));
             }),
             py::arg("predictor"), py::arg("assessor"), py::arg("classifier"), py::arg("vocab"),
             py::arg("kept_features"), py::keep_alive<1, 2>(), py::keep_alive<1, 3>(),
             py::keep_alive<1, 4>(), py::keep_alive<1, 5>())
        .def("predict", &Pipeline::predict, py::arg("record"));

    m.attr("__version__") = "0.1.0";
}
