// pktseer command-line tool: synthesize traffic, ingest captures or feature
// CSVs, run feature selection, train the BPE tokenizer and the three models,
// evaluate them, and run the streaming predict->assess->classify loop.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pktseer/cli_support.hpp"
#include "pktseer/featsel.hpp"
#include "pktseer/ingest.hpp"
#include "pktseer/models.hpp"
#include "pktseer/synth.hpp"
#include "pktseer/tokenizer.hpp"
#include "pktseer/trainer.hpp"

namespace pk = pktseer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct GlobalOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_given = false;
    std::string manifest_path;
    pk::ConfigFile config;
};

pk::CsvSchema schema_from_config(const pk::ConfigFile& cfg) {
    pk::CsvSchema s;
    s.src_addr = cfg.get("csv.src_addr", s.src_addr);
    s.dst_addr = cfg.get("csv.dst_addr", s.dst_addr);
    s.src_port = cfg.get("csv.src_port", s.src_port);
    s.dst_port = cfg.get("csv.dst_port", s.dst_port);
    s.protocol = cfg.get("csv.protocol", s.protocol);
    s.timestamp = cfg.get("csv.timestamp", s.timestamp);
    s.label = cfg.get("csv.label", s.label);
    return s;
}

pk::CsvParseResult load_dataset(const std::string& path, const pk::ConfigFile& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pk::DataError("cannot open dataset: " + path);
    return pk::parse_feature_csv(in, schema_from_config(cfg));
}

pk::BpeVocab load_vocab_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pk::DataError("cannot open vocabulary: " + path);
    return pk::load_vocab(in);
}

void write_dataset(const std::string& path, const std::vector<std::string>& names,
                   const std::vector<pk::PacketRecord>& records) {
    std::ostringstream os;
    pk::write_feature_csv(os, names, records);
    pk::write_file(path, os.str());
}

std::string default_manifest_path(const GlobalOpts& g, const std::string& primary_out) {
    if (!g.manifest_path.empty()) return g.manifest_path;
    return primary_out + ".manifest.json";
}

// runs the body, writing the manifest on both success and failure
int run_command(GlobalOpts& g, pk::RunManifest& manifest, const std::string& manifest_out,
                const std::function<void()>& body) {
    manifest.seed = g.seed;
    manifest.started_at = pk::iso8601_utc_now();
    int code = kExitOk;
    try {
        body();
    } catch (const pk::UsageError& e) {
        manifest.status = "error";
        manifest.error = e.what();
        code = kExitUsage;
    } catch (const pk::TrainingDivergence& e) {
        manifest.status = "error";
        manifest.error = e.what();
        code = kExitDiverged;
    } catch (const pk::DataError& e) {
        manifest.status = "error";
        manifest.error = e.what();
        code = kExitData;
    } catch (const std::exception& e) {
        manifest.status = "error";
        manifest.error = e.what();
        code = kExitData;
    }
    manifest.finished_at = pk::iso8601_utc_now();
    try {
        manifest.write(manifest_out);
    } catch (const std::exception& e) {
        std::cerr << "warning: could not write manifest: " << e.what() << "\n";
    }
    if (code != kExitOk) std::cerr << "error: " << manifest.error << "\n";
    return code;
}

std::vector<pk::PacketRecord> matrix_to_records(const pk::FeatureMatrix& m,
                                                const std::vector<pk::PacketRecord>& originals) {
    std::vector<pk::PacketRecord> out = originals;
    for (size_t r = 0; r < out.size(); ++r) {
        out[r].features.clear();
        for (size_t c = 0; c < m.n_cols(); ++c)
            out[r].features.emplace_back(m.column_names[c], m.at(r, c));
    }
    return out;
}

nlohmann::json selection_report_json(const pk::SelectionReport& rep) {
    nlohmann::json j;
    j["kept"] = rep.kept;
    nlohmann::json lv = nlohmann::json::array();
    for (const auto& [name, var] : rep.dropped_low_variance) lv.push_back({name, var});
    j["dropped_low_variance"] = lv;
    nlohmann::json dc = nlohmann::json::array();
    for (const auto& d : rep.dropped_correlated) dc.push_back({d.name, d.partner, d.correlation});
    j["dropped_correlated"] = dc;
    j["var_threshold"] = rep.var_threshold;
    j["var_cutoff"] = rep.var_cutoff;
    j["corr_threshold"] = rep.corr_threshold;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"packet-level intrusion prediction with small transformers"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "key=value config file");
    auto* seed_opt = app.add_option("--seed", g.seed, "global seed (fallback: PKTSEER_SEED)");
    app.add_option("--manifest", g.manifest_path, "run manifest path override");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate labeled synthetic traffic");
    synth->fallthrough();
    std::string synth_out, synth_test_out;
    size_t synth_flows = 0, synth_rows = 0;
    size_t synth_len_min = 4, synth_len_max = 12;
    double synth_mal = 0.3, synth_test_fraction = 0.0;
    synth->add_option("--out", synth_out, "output feature CSV")->required();
    synth->add_option("--flows", synth_flows, "number of flows");
    synth->add_option("--rows", synth_rows, "exact number of packets");
    synth->add_option("--len-min", synth_len_min, "minimum flow length");
    synth->add_option("--len-max", synth_len_max, "maximum flow length");
    synth->add_option("--malicious-fraction", synth_mal, "fraction of malicious rows");
    synth->add_option("--test-fraction", synth_test_fraction,
                      "hold out this row fraction (flow-level) into --test-out");
    synth->add_option("--test-out", synth_test_out, "held-out CSV path");

    // ---- ingest ----
    auto* ingest = app.add_subcommand("ingest", "parse a capture or feature CSV into a dataset");
    ingest->fallthrough();
    std::string ingest_in, ingest_out, ingest_format = "csv";
    ingest->add_option("--in", ingest_in, "input file")->required();
    ingest->add_option("--out", ingest_out, "output dataset CSV")->required();
    ingest->add_option("--format", ingest_format, "csv | capture")
        ->check(CLI::IsMember({"csv", "capture"}));

    // ---- select-features ----
    auto* select = app.add_subcommand("select-features",
                                      "variance + Pearson feature selection");
    select->fallthrough();
    std::string sel_in, sel_out, sel_report, sel_apply;
    double sel_var = 0.25, sel_corr = 0.98;
    select->add_option("--in", sel_in, "input dataset CSV")->required();
    select->add_option("--out", sel_out, "reduced dataset CSV")->required();
    select->add_option("--var-threshold", sel_var, "variance threshold (fraction of max 0.25)");
    select->add_option("--corr-threshold", sel_corr, "absolute Pearson threshold");
    select->add_option("--report", sel_report, "selection report JSON path");
    select->add_option("--apply", sel_apply, "apply a previous selection report instead");

    // ---- train-tokenizer ----
    auto* traintok = app.add_subcommand("train-tokenizer", "learn the BPE vocabulary");
    traintok->fallthrough();
    std::string tok_in, tok_out;
    int64_t tok_vocab_size = 512;
    traintok->add_option("--in", tok_in, "input dataset CSV")->required();
    traintok->add_option("--out", tok_out, "vocabulary file")->required();
    traintok->add_option("--vocab-size", tok_vocab_size, "target vocabulary size");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the predictor, assessor or classifier");
    train->fallthrough();
    std::string train_model, train_data, train_vocab, train_out, train_history;
    pk::TrainConfig tc;
    bool tc_epochs_given = false, tc_lr_given = false, tc_batch_given = false,
         tc_metric_accuracy = false, no_class_weights = false;
    double train_negative_ratio = 1.0;
    pk::nn::ModelConfig mc;
    train->add_option("model", train_model, "predictor | assessor | classifier")
        ->required()
        ->check(CLI::IsMember({"predictor", "assessor", "classifier"}));
    train->add_option("--data", train_data, "training dataset CSV")->required();
    train->add_option("--vocab", train_vocab, "vocabulary file")->required();
    train->add_option("--out", train_out, "checkpoint path")->required();
    train->add_option("--history", train_history, "history JSONL path");
    train->add_option("--epochs", tc.epochs)->each([&](const std::string&) {
        tc_epochs_given = true;
    });
    train->add_option("--batch", tc.batch_size)->each([&](const std::string&) {
        tc_batch_given = true;
    });
    train->add_option("--lr", tc.learning_rate)->each([&](const std::string&) {
        tc_lr_given = true;
    });
    train->add_option("--val-fraction", tc.val_fraction, "validation split fraction");
    train->add_option("--patience", tc.early_stop_patience, "early-stopping patience");
    train->add_option("--min-delta", tc.min_delta, "early-stopping minimum improvement");
    train->add_flag("--metric-accuracy", tc_metric_accuracy,
                    "monitor val accuracy instead of val loss");
    train->add_option("--max-seq-len", tc.max_seq_len, "override model max sequence length");
    train->add_option("--denoise-fraction", tc.denoise_fraction,
                      "predictor: fraction of denoising steps");
    train->add_option("--mlm-warmup", tc.mlm_warmup_epochs, "assessor: MLM warm-up epochs");
    train->add_option("--negative-ratio", train_negative_ratio,
                      "assessor: non-successive pairs per successive pair");
    train->add_flag("--no-class-weights", no_class_weights,
                    "classifier: disable inverse-frequency loss weights");
    train->add_option("--d-model", mc.d_model);
    train->add_option("--heads", mc.n_heads);
    train->add_option("--enc-layers", mc.n_enc_layers);
    train->add_option("--dec-layers", mc.n_dec_layers);
    train->add_option("--d-ff", mc.d_ff);
    train->add_option("--dropout", mc.dropout_prob);
    train->add_option("--model-max-seq-len", mc.max_seq_len, "model position-table size");

    // ---- evaluate ----
    auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a labeled dataset");
    eval->fallthrough();
    std::string eval_ckpt, eval_data, eval_vocab, eval_prefix;
    double eval_negative_ratio = 1.0;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--data", eval_data, "evaluation dataset CSV")->required();
    eval->add_option("--vocab", eval_vocab, "vocabulary file")->required();
    eval->add_option("--out-prefix", eval_prefix, "writes <prefix>.txt/.json/.roc.csv")
        ->required();
    eval->add_option("--negative-ratio", eval_negative_ratio,
                     "assessor: non-successive pairs per successive pair");

    // ---- predict ----
    auto* predict = app.add_subcommand("predict", "run the predict->assess->classify loop");
    predict->fallthrough();
    std::string pr_predictor, pr_assessor, pr_classifier, pr_vocab, pr_in, pr_out;
    bool pr_stream = false;
    predict->add_option("--predictor", pr_predictor, "predictor checkpoint")->required();
    predict->add_option("--assessor", pr_assessor, "assessor checkpoint")->required();
    predict->add_option("--classifier", pr_classifier, "classifier checkpoint")->required();
    predict->add_option("--vocab", pr_vocab, "vocabulary file")->required();
    predict->add_option("--in", pr_in, "input packets CSV")->required();
    predict->add_option("--out", pr_out, "output JSONL (default stdout)");
    predict->add_flag("--stream", pr_stream, "flush each outcome as it is produced");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (!g.config_path.empty()) g.config = pk::ConfigFile::load(g.config_path);
        g.seed_given = seed_opt->count() > 0;
        if (!g.seed_given && g.config.has("seed")) {
            g.seed = static_cast<uint64_t>(g.config.get_number("seed", 0));
            g.seed_given = true;
        }
        g.seed = pk::resolve_seed(g.seed_given, g.seed);
    } catch (const pk::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    // ------------------------------------------------------------------ synth
    if (synth->parsed()) {
        pk::RunManifest m;
        m.command = "synth";
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, synth_out), [&] {
            pk::SynthScenario sc;
            sc.seed = g.seed;
            sc.flow_len_min = static_cast<size_t>(
                g.config.get_number("synth.len_min", static_cast<double>(synth_len_min)));
            sc.flow_len_max = static_cast<size_t>(
                g.config.get_number("synth.len_max", static_cast<double>(synth_len_max)));
            sc.malicious_fraction = g.config.get_number("synth.malicious_fraction", synth_mal);
            sc.benign.len_step =
                g.config.get_number("synth.benign_len_step", sc.benign.len_step);
            sc.benign.win_step =
                g.config.get_number("synth.benign_win_step", sc.benign.win_step);
            sc.malicious.attack_name =
                g.config.get("synth.attack_name", sc.malicious.attack_name);
            if (synth->count("--len-min")) sc.flow_len_min = synth_len_min;
            if (synth->count("--len-max")) sc.flow_len_max = synth_len_max;
            if (synth->count("--malicious-fraction")) sc.malicious_fraction = synth_mal;
            sc.n_flows = synth_flows;
            sc.target_rows = synth_rows;

            pk::SynthResult res = pk::generate_synthetic_traffic(sc);
            m.config["malicious_fraction"] = pk::format_value(sc.malicious_fraction);
            m.counters["rows"] = static_cast<int64_t>(res.records.size());
            m.counters["malicious_rows"] = static_cast<int64_t>(res.malicious_rows);
            m.counters["flows"] = static_cast<int64_t>(res.flows_emitted);

            if (synth_test_fraction > 0) {
                if (synth_test_out.empty())
                    throw pk::UsageError("synth: --test-fraction requires --test-out");
                // flow-level holdout so pair tasks never straddle the split
                pk::FlowMap flows = pk::assemble_flows(res.records);
                std::vector<const std::vector<pk::PacketRecord>*> flow_list;
                for (const auto& [key, pkts] : flows) flow_list.push_back(&pkts);
                std::vector<size_t> order(flow_list.size());
                std::iota(order.begin(), order.end(), 0);
                pk::DetRng rng(pk::mix_seed(g.seed, 0x74657374));
                rng.shuffle(order);
                size_t want = static_cast<size_t>(
                    std::llround(synth_test_fraction * static_cast<double>(res.records.size())));
                std::vector<pk::PacketRecord> test_records, train_records;
                size_t test_rows = 0;
                for (size_t idx : order) {
                    auto& flow = *flow_list[idx];
                    if (test_rows < want) {
                        test_records.insert(test_records.end(), flow.begin(), flow.end());
                        test_rows += flow.size();
                    } else {
                        train_records.insert(train_records.end(), flow.begin(), flow.end());
                    }
                }
                write_dataset(synth_out, res.feature_names, train_records);
                write_dataset(synth_test_out, res.feature_names, test_records);
                m.add_artifact(synth_test_out);
                m.counters["test_rows"] = static_cast<int64_t>(test_records.size());
            } else {
                write_dataset(synth_out, res.feature_names, res.records);
            }
            m.add_artifact(synth_out);
        });
    }

    // ------------------------------------------------------------------ ingest
    if (ingest->parsed()) {
        pk::RunManifest m;
        m.command = "ingest";
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, ingest_out), [&] {
            m.add_input(ingest_in);
            std::vector<std::string> names;
            std::vector<pk::PacketRecord> records;
            pk::IngestReport report;
            if (ingest_format == "csv") {
                pk::CsvParseResult res = load_dataset(ingest_in, g.config);
                names = std::move(res.feature_names);
                records = std::move(res.records);
                report = res.report;
            } else {
                std::ifstream in(ingest_in, std::ios::binary);
                if (!in) throw pk::DataError("cannot open capture: " + ingest_in);
                pk::CaptureParseResult res = pk::parse_raw_capture(in);
                names = std::move(res.feature_names);
                records = std::move(res.records);
                report = res.report;
            }
            write_dataset(ingest_out, names, records);
            m.add_artifact(ingest_out);
            m.counters["rows_read"] = static_cast<int64_t>(report.rows_read);
            m.counters["rows_skipped"] = static_cast<int64_t>(report.rows_skipped);
            m.counters["missing_cells"] = static_cast<int64_t>(report.missing_cells);
            m.counters["truncated"] = static_cast<int64_t>(report.truncated);
            m.counters["records"] = static_cast<int64_t>(records.size());
            std::cerr << "ingest: " << records.size() << " records, " << report.rows_skipped
                      << " skipped, " << report.missing_cells << " missing cells defaulted";
            if (report.truncated) std::cerr << ", input truncated";
            std::cerr << "\n";
        });
    }

    // ------------------------------------------------------------ select-features
    if (select->parsed()) {
        pk::RunManifest m;
        m.command = "select-features";
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, sel_out), [&] {
            m.add_input(sel_in);
            pk::CsvParseResult data = load_dataset(sel_in, g.config);
            pk::FeatureMatrix matrix = pk::records_to_matrix(data.feature_names, data.records);

            std::vector<std::string> kept;
            if (!sel_apply.empty()) {
                m.add_input(sel_apply);
                nlohmann::json j = nlohmann::json::parse(pk::read_file(sel_apply));
                kept = j.at("kept").get<std::vector<std::string>>();
                for (const auto& k : kept)
                    if (std::find(data.feature_names.begin(), data.feature_names.end(), k) ==
                        data.feature_names.end())
                        throw pk::DataError("selection refers to missing column: " + k);
            } else {
                auto [reduced, rep] = pk::select_features(matrix, sel_var, sel_corr);
                kept = rep.kept;
                std::cout << pk::selection_report_table(rep);
                if (!sel_report.empty()) {
                    pk::write_file(sel_report, selection_report_json(rep).dump(2) + "\n");
                    m.add_artifact(sel_report);
                }
                m.counters["dropped_low_variance"] =
                    static_cast<int64_t>(rep.dropped_low_variance.size());
                m.counters["dropped_correlated"] =
                    static_cast<int64_t>(rep.dropped_correlated.size());
            }

            std::vector<pk::PacketRecord> out_records = data.records;
            for (auto& r : out_records) {
                std::vector<std::pair<std::string, double>> feats;
                for (const auto& k : kept) {
                    const double* v = r.find_feature(k);
                    if (!v) throw pk::DataError("record missing selected feature: " + k);
                    feats.emplace_back(k, *v);
                }
                r.features = std::move(feats);
            }
            write_dataset(sel_out, kept, out_records);
            m.add_artifact(sel_out);
            m.counters["kept"] = static_cast<int64_t>(kept.size());
            m.counters["rows"] = static_cast<int64_t>(out_records.size());
        });
    }

    // ------------------------------------------------------------- train-tokenizer
    if (traintok->parsed()) {
        pk::RunManifest m;
        m.command = "train-tokenizer";
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, tok_out), [&] {
            m.add_input(tok_in);
            pk::CsvParseResult data = load_dataset(tok_in, g.config);
            std::vector<std::string> corpus;
            corpus.reserve(data.records.size());
            for (const auto& r : data.records)
                corpus.push_back(pk::serialize_packet(r, data.feature_names));
            pk::BpeVocab vocab =
                pk::train_bpe(corpus, static_cast<pk::TokenId>(tok_vocab_size));
            std::ostringstream os;
            pk::save_vocab(os, vocab);
            pk::write_file(tok_out, os.str());
            m.add_artifact(tok_out);
            m.counters["vocab_size"] = vocab.size();
            m.counters["merges"] = static_cast<int64_t>(vocab.merges().size());
            m.counters["corpus_lines"] = static_cast<int64_t>(corpus.size());
        });
    }

    // ----------------------------------------------------------------- train
    if (train->parsed()) {
        pk::RunManifest m;
        m.command = "train " + train_model;
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, train_out), [&] {
            m.add_input(train_data);
            m.add_input(train_vocab);
            pk::CsvParseResult data = load_dataset(train_data, g.config);
            pk::BpeVocab vocab = load_vocab_file(train_vocab);

            tc.seed = g.seed;
            tc.early_stop_metric = tc_metric_accuracy ? pk::EarlyStopMetric::ValAccuracy
                                                      : pk::EarlyStopMetric::ValLoss;
            tc.class_weights = !no_class_weights;
            mc.vocab_size = vocab.size();
            if (train_model == "classifier") {
                if (!tc_epochs_given) tc.epochs = 4;
                if (!tc_batch_given) tc.batch_size = 2;
                if (!train->count("--metric-accuracy"))
                    tc.early_stop_metric = pk::EarlyStopMetric::ValAccuracy;
            }
            // predictor defaults mirror the assessor schedule
            (void)tc_lr_given;

            pk::TrainHistory history;
            pk::nn::ModelParams* trained = nullptr;
            std::optional<pk::PredictorTrainResult> pres;
            std::optional<pk::AssessorTrainResult> ares;
            std::optional<pk::ClassifierTrainResult> cres;
            if (train_model == "predictor") {
                pk::FlowMap flows = pk::assemble_flows(data.records);
                auto pairs = pk::make_next_packet_pairs(flows);
                m.counters["pairs"] = static_cast<int64_t>(pairs.size());
                pres = pk::train_predictor(pairs, data.feature_names, vocab, mc, tc);
                trained = &pres->model.params;
                history = pres->history;
            } else if (train_model == "assessor") {
                pk::FlowMap flows = pk::assemble_flows(data.records);
                auto pairs = pk::make_pair_dataset(flows, train_negative_ratio, g.seed);
                m.counters["pairs"] = static_cast<int64_t>(pairs.size());
                ares = pk::train_assessor(pairs, data.feature_names, vocab, mc, tc);
                trained = &ares->model.params;
                history = ares->history;
            } else {
                cres = pk::train_classifier(data.records, data.feature_names, vocab, mc, tc);
                trained = &cres->model.params;
                history = cres->history;
            }

            trained->vocab_digest = pk::sha256_file_hex(train_vocab);
            pk::nn::save_checkpoint_file(train_out, *trained);
            m.add_artifact(train_out);
            if (!train_history.empty()) {
                std::ostringstream os;
                pk::write_history_jsonl(os, history);
                pk::write_file(train_history, os.str());
                m.add_artifact(train_history);
            }
            m.counters["rows"] = static_cast<int64_t>(data.records.size());
            m.counters["epochs_run"] = static_cast<int64_t>(history.size());
            if (!history.empty()) {
                std::cerr << "train " << train_model << ": " << history.size()
                          << " epochs, final val_loss " << history.back().val_loss
                          << ", val_accuracy " << history.back().val_accuracy << "\n";
            }
        });
    }

    // -------------------------------------------------------------- evaluate
    if (eval->parsed()) {
        pk::RunManifest m;
        m.command = "evaluate";
        m.argv.assign(argv, argv + argc);
        return run_command(g, m, default_manifest_path(g, eval_prefix), [&] {
            m.add_input(eval_ckpt);
            m.add_input(eval_data);
            m.add_input(eval_vocab);
            pk::nn::ModelParams params = pk::nn::load_checkpoint_file(eval_ckpt);
            pk::CsvParseResult data = load_dataset(eval_data, g.config);
            pk::BpeVocab vocab = load_vocab_file(eval_vocab);
            const std::vector<std::string> kept =
                params.kept_features.empty() ? data.feature_names : params.kept_features;

            pk::EvalReport report;
            if (params.kind == "classifier") {
                pk::ClassifierModel model{std::move(params)};
                report = pk::evaluate_classifier(model, data.records, kept, vocab);
            } else if (params.kind == "assessor") {
                pk::FlowMap flows = pk::assemble_flows(data.records);
                auto pairs = pk::make_pair_dataset(flows, eval_negative_ratio, g.seed);
                pk::AssessorModel model{std::move(params)};
                report = pk::evaluate_assessor(model, pairs, kept, vocab);
            } else {
                throw pk::UsageError(
                    "evaluate supports assessor and classifier checkpoints; use `predict` to "
                    "exercise the predictor");
            }

            std::string table = pk::eval_report_table(report);
            std::cout << table;
            pk::write_file(eval_prefix + ".txt", table);
            pk::write_file(eval_prefix + ".json", pk::eval_report_json(report) + "\n");
            pk::write_file(eval_prefix + ".roc.csv", pk::roc_points_csv(report));
            m.add_artifact(eval_prefix + ".txt");
            m.add_artifact(eval_prefix + ".json");
            m.add_artifact(eval_prefix + ".roc.csv");
            m.counters["examples"] = static_cast<int64_t>(report.total());
        });
    }

    // --------------------------------------------------------------- predict
    if (predict->parsed()) {
        pk::RunManifest m;
        m.command = "predict";
        m.argv.assign(argv, argv + argc);
        std::string manifest_out =
            default_manifest_path(g, pr_out.empty() ? std::string("predict") : pr_out);
        return run_command(g, m, manifest_out, [&] {
            m.add_input(pr_predictor);
            m.add_input(pr_assessor);
            m.add_input(pr_classifier);
            m.add_input(pr_vocab);
            m.add_input(pr_in);

            pk::PredictorModel predictor{pk::nn::load_checkpoint_file(pr_predictor)};
            pk::AssessorModel assessor{pk::nn::load_checkpoint_file(pr_assessor)};
            pk::ClassifierModel classifier{pk::nn::load_checkpoint_file(pr_classifier)};
            pk::BpeVocab vocab = load_vocab_file(pr_vocab);
            pk::CsvParseResult data = load_dataset(pr_in, g.config);

            std::vector<std::string> kept = predictor.params.kept_features.empty()
                                                ? data.feature_names
                                                : predictor.params.kept_features;
            pk::Pipeline pipeline(&predictor, &assessor, &classifier, &vocab, kept);

            std::ofstream file_out;
            std::ostream* out = &std::cout;
            if (!pr_out.empty()) {
                file_out.open(pr_out, std::ios::binary);
                if (!file_out) throw pk::DataError("cannot open output: " + pr_out);
                out = &file_out;
            }

            size_t n = 0, malformed = 0, successive = 0, flagged = 0;
            for (const auto& rec : data.records) {
                pk::PredictionOutcome outcome = pipeline.predict(rec);
                (*out) << pk::outcome_to_json(outcome) << '\n';
                if (pr_stream) out->flush();
                ++n;
                malformed += outcome.malformed ? 1 : 0;
                successive +=
                    outcome.assessor_verdict.label == pk::PairLabel::Successive ? 1 : 0;
                flagged += outcome.classifier_verdict.label.malicious ? 1 : 0;
            }
            double validity =
                n > 0 ? static_cast<double>(successive) / static_cast<double>(n) : 0.0;
            std::cerr << "predict: " << n << " packets, validity rate "
                      << pk::format_value(validity) << " (" << successive
                      << " assessed successive), " << malformed << " malformed, " << flagged
                      << " flagged malicious\n";
            m.counters["packets"] = static_cast<int64_t>(n);
            m.counters["malformed"] = static_cast<int64_t>(malformed);
            m.counters["assessed_successive"] = static_cast<int64_t>(successive);
            m.counters["flagged_malicious"] = static_cast<int64_t>(flagged);
            if (!pr_out.empty()) {
                file_out.close();
                m.add_artifact(pr_out);
            }
        });
    }

    return kExitUsage;
}
