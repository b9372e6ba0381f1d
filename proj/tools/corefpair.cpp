// corefpair: staged command-line pipeline for the mention-pair classifiers.
//
//   synth -> ingest -> featurize -> train -> predict -> tune / calibrate -> eval
//                                        \-> report (all model kinds at once)
//
// Every command writes a JSON manifest next to its outputs. `replay` reruns
// the argument list recorded in a manifest.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coref/checkpoint.hpp"
#include "coref/corpus.hpp"
#include "coref/embeddings.hpp"
#include "coref/error.hpp"
#include "coref/eval.hpp"
#include "coref/features.hpp"
#include "coref/neural.hpp"
#include "coref/synth.hpp"
#include "coref/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace coref;

namespace {

constexpr const char* kConfigEnv = "COREFPAIR_CONFIG";

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kIo = 3,
    kParse = 4,
    kValidation = 5,
    kFormat = 6,
    kConfig = 7,
    kNumeric = 8,
    kUndefinedMetric = 9,
};

// ---------------------------------------------------------------- helpers

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

std::vector<fs::path> to_paths(const std::vector<std::string>& strings) {
    return {strings.begin(), strings.end()};
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

nlohmann::json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Temp file plus rename, so a manifest is either complete or absent.
void write_atomic(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_text(tmp, text);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f%%", 100.0 * v);
    return buf;
}

class Run {
public:
    Run(std::string command, std::vector<std::string> args)
        : command_(std::move(command)), args_(std::move(args)), start_(std::chrono::steady_clock::now()) {}

    ordered_json config = ordered_json::object();
    ordered_json seeds = ordered_json::object();
    ordered_json inputs = ordered_json::object();
    ordered_json outputs = ordered_json::object();
    ordered_json extra = ordered_json::object();

    void finish(const fs::path& manifest_path) const {
        ordered_json m;
        m["command"] = command_;
        m["argv"] = args_;
        m["config"] = config;
        m["seeds"] = seeds;
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        m["versions"] = {{"feature_schema", kFeatureSchemaVersion}, {"checkpoint", kCheckpointVersion}};
        for (const auto& item : extra.items()) m[item.key()] = item.value();
        m["duration_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_atomic(manifest_path, m.dump(2) + "\n");
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::chrono::steady_clock::time_point start_;
};

fs::path manifest_for(const std::string& given, const fs::path& fallback) {
    return given.empty() ? fallback : fs::path(given);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
    fs::path out = p;
    out += suffix;
    return out;
}

// Full-corpus counts for calibration, either explicit or from an ingest manifest.
struct Counts {
    std::optional<double> positives;
    std::optional<double> negatives;
    std::optional<double> rate;
    std::string counts_file;

    void add_options(CLI::App* cmd) {
        cmd->add_option("--positives", positives, "Positive pairs in the full (not downsampled) training set");
        cmd->add_option("--negatives", negatives, "Negative pairs in the full training set");
        cmd->add_option("--rate", rate, "Negative downsampling rate used for the training shards");
        cmd->add_option("--counts", counts_file, "Ingest manifest supplying positives, negatives and rate")
            ->check(CLI::ExistingFile);
    }

    bool complete() {
        if (!counts_file.empty()) {
            const auto m = read_json(counts_file);
            if (!m.contains("counts")) throw FormatError(counts_file + ": not an ingest manifest");
            const auto& c = m.at("counts");
            if (!positives) positives = c.at("positives").get<double>();
            if (!negatives) negatives = c.at("negatives").get<double>();
            if (!rate) rate = c.at("negative_rate").get<double>();
        }
        return positives && negatives && rate;
    }
};

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out_dir;
    std::size_t train_docs = 300;
    std::size_t dev_docs = 100;
    std::size_t test_docs = 100;
    std::uint64_t seed = 0;
    SynthSpec spec;
    std::string manifest;
};

int cmd_synth(const SynthArgs& a, Run& run) {
    SynthSpec spec = a.spec;
    spec.documents = a.train_docs + a.dev_docs + a.test_docs;
    const auto docs = synth_corpus(spec, a.seed);
    const auto table = synth_embeddings(spec, a.seed);
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);

    std::size_t offset = 0;
    for (const auto& [name, count] : {std::pair<std::string, std::size_t>{"train", a.train_docs},
                                      {"dev", a.dev_docs},
                                      {"test", a.test_docs}}) {
        if (count == 0) continue;
        std::vector<Document> part(docs.begin() + static_cast<std::ptrdiff_t>(offset),
                                   docs.begin() + static_cast<std::ptrdiff_t>(offset + count));
        offset += count;
        const fs::path path = dir / (name + ".jsonl");
        write_corpus(part, path);
        run.outputs[name] = path.string();
        std::cout << name << ": " << count << " documents -> " << path.string() << "\n";
    }
    const fs::path emb = dir / "embeddings.txt";
    write_embeddings(table, emb);
    run.outputs["embeddings"] = emb.string();
    std::cout << "embeddings: " << table.size() << " words x " << table.dim() << " -> " << emb.string() << "\n";

    run.seeds["seed"] = a.seed;
    run.config = {{"train_docs", a.train_docs},
                  {"dev_docs", a.dev_docs},
                  {"test_docs", a.test_docs},
                  {"mentions_per_document", spec.mentions_per_document},
                  {"synonym_noise", spec.synonym_noise},
                  {"name_noise", spec.name_noise},
                  {"confuser_rate", spec.confuser_rate},
                  {"dim", spec.dim}};
    run.finish(manifest_for(a.manifest, dir / "synth.manifest.json"));
    return kOk;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
    std::string corpus;
    std::string out_dir;
    std::string stem;
    double rate = 0.02;
    std::size_t shards = 1;
    std::uint64_t seed = 0;
    std::string head_match = "relaxed";
    bool keep_head_match = false;
    bool any_anaphor = false;
    bool nominal_antecedent = false;
    std::string manifest;
};

int cmd_ingest(const IngestArgs& a, Run& run) {
    PairFilterConfig filter;
    filter.head_match_mode = parse_head_match_mode(a.head_match);
    filter.exclude_head_match = !a.keep_head_match;
    filter.require_nominal_anaphor = !a.any_anaphor;
    filter.require_nominal_antecedent = a.nominal_antecedent;
    if (a.shards < 1) throw ArgumentError("--shards must be at least 1");

    const auto docs = load_corpus(a.corpus);
    std::vector<MentionPair> all;
    for (const auto& doc : docs) {
        auto pairs = enumerate_pairs(doc, filter);
        all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
    }
    const auto count_positive = [](const std::vector<MentionPair>& pairs) {
        return static_cast<std::size_t>(
            std::count_if(pairs.begin(), pairs.end(), [](const MentionPair& p) { return p.label; }));
    };
    const std::size_t pos = count_positive(all);
    const std::size_t neg = all.size() - pos;

    const auto kept = downsample(all, a.rate, a.seed);
    const std::size_t kept_pos = count_positive(kept);
    const std::size_t kept_neg = kept.size() - kept_pos;

    const auto rate_of = [](std::size_t p, std::size_t n) {
        return p + n == 0 ? 0.0 : static_cast<double>(p) / static_cast<double>(p + n);
    };
    std::cout << "documents: " << docs.size() << "\n"
              << "candidate pairs: " << all.size() << " (positive " << pos << ", negative " << neg
              << ", positive rate " << percent(rate_of(pos, neg)) << ")\n"
              << "after downsampling negatives at " << format_double(a.rate) << ": " << kept.size() << " (positive "
              << kept_pos << ", negative " << kept_neg << ", positive rate " << percent(rate_of(kept_pos, kept_neg))
              << ")\n";

    const std::string stem = a.stem.empty() ? fs::path(a.corpus).stem().string() : a.stem;
    const auto paths = shard_pairs(kept, a.shards, a.out_dir, stem);
    for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";

    run.seeds["seed"] = a.seed;
    run.inputs["corpus"] = a.corpus;
    run.outputs["shards"] = path_strings(paths);
    run.config = {{"negative_rate", a.rate},
                  {"shards", a.shards},
                  {"stem", stem},
                  {"head_match", to_string(filter.head_match_mode)},
                  {"exclude_head_match", filter.exclude_head_match},
                  {"require_nominal_anaphor", filter.require_nominal_anaphor},
                  {"require_nominal_antecedent", filter.require_nominal_antecedent}};
    run.extra["counts"] = {{"documents", docs.size()},
                           {"positives", pos},
                           {"negatives", neg},
                           {"positive_rate", rate_of(pos, neg)},
                           {"negative_rate", a.rate},
                           {"kept_positives", kept_pos},
                           {"kept_negatives", kept_neg},
                           {"kept_positive_rate", rate_of(kept_pos, kept_neg)}};
    run.finish(manifest_for(a.manifest, fs::path(a.out_dir) / (stem + ".ingest.manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
    std::string corpus;
    std::string embeddings;
    std::vector<std::string> pairs;
    std::string out_dir;
    std::size_t dim = kDefaultEmbeddingDim;
    bool no_similarity = false;
    std::string manifest;
};

int cmd_featurize(const FeaturizeArgs& a, Run& run) {
    const auto docs = load_corpus(a.corpus);
    std::vector<std::string> warnings;
    const auto table = load_embeddings(a.embeddings, a.dim, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    const auto schema = FeatureSchema::standard(a.dim);
    FeaturizeOptions options;
    options.similarity = !a.no_similarity;

    std::vector<std::string> outputs;
    for (const auto& in : a.pairs) {
        const auto pairs = read_pair_file(in);
        const auto shard = featurize_pairs(pairs, docs, table, schema, options);
        const fs::path out = fs::path(a.out_dir) / (fs::path(in).stem().string() + ".feat");
        fs::create_directories(a.out_dir);
        write_feature_shard(shard, out);
        outputs.push_back(out.string());
        std::cout << "wrote " << out.string() << " (" << shard.rows() << " rows x " << shard.dim << ")\n";
    }
    run.inputs = {{"corpus", a.corpus}, {"embeddings", a.embeddings}, {"pairs", a.pairs}};
    run.outputs["shards"] = outputs;
    run.config = {{"dim", a.dim}, {"similarity", options.similarity}, {"feature_dim", schema.total_dim}};
    run.finish(manifest_for(a.manifest, fs::path(a.out_dir) / (fs::path(a.pairs.front()).stem().string() + ".featurize.manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config_file;
    std::string out;
    std::string history;
    std::string manifest;
    std::optional<std::string> kind;
    std::optional<std::size_t> epochs;
    std::optional<double> learning_rate;
    std::optional<double> momentum;
    std::optional<std::size_t> batch_size;
    std::optional<double> positive_weight;
    std::optional<double> dropout_rate;
    std::optional<std::vector<std::size_t>> dropout_layers;
    std::optional<std::uint64_t> seed;
    std::optional<std::vector<std::string>> train_shards;
    std::optional<std::vector<std::string>> dev_shards;
    std::optional<std::vector<std::size_t>> hidden_sizes;
    std::optional<bool> evaluate_each_epoch;
};

TrainConfig resolve_train_config(const TrainArgs& a, std::string& config_source) {
    std::string path = a.config_file;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
    }
    TrainConfig c;
    if (!path.empty()) {
        c = TrainConfig::from_json(read_json(path));
        config_source = path;
    }
    if (a.kind) c.kind = parse_model_kind(*a.kind);
    if (a.epochs) c.epochs = *a.epochs;
    if (a.learning_rate) c.learning_rate = *a.learning_rate;
    if (a.momentum) c.momentum = *a.momentum;
    if (a.batch_size) c.batch_size = *a.batch_size;
    if (a.positive_weight) c.positive_weight = *a.positive_weight;
    if (a.dropout_rate) c.dropout.rate = *a.dropout_rate;
    if (a.dropout_layers) c.dropout.apply_layers = {a.dropout_layers->begin(), a.dropout_layers->end()};
    if (a.seed) c.seed = *a.seed;
    if (a.train_shards) c.shard_paths = to_paths(*a.train_shards);
    if (a.dev_shards) c.dev_paths = to_paths(*a.dev_shards);
    if (a.hidden_sizes) c.hidden_sizes = *a.hidden_sizes;
    if (a.evaluate_each_epoch) c.evaluate_each_epoch = *a.evaluate_each_epoch;
    if (c.shard_paths.empty()) throw ConfigError("no training shards: pass --train-shards or set train_shards");
    return c;
}

int cmd_train(const TrainArgs& a, Run& run) {
    std::string config_source;
    const TrainConfig config = resolve_train_config(a, config_source);
    const auto result = train(config, [](const EpochRecord& r) {
        std::cout << "epoch " << r.epoch << "  loss " << fixed3(r.train_loss) << "  train P/R/F1 "
                  << fixed3(r.train_precision) << "/" << fixed3(r.train_recall) << "/" << fixed3(r.train_f1)
                  << " @ " << fixed3(r.tuned_threshold) << "  P/R @0.5 " << fixed3(r.precision_at_half) << "/"
                  << fixed3(r.recall_at_half);
        if (r.dev_f1) std::cout << "  dev F1 " << fixed3(*r.dev_f1);
        std::cout << "\n";
    });
    save_checkpoint(result.params, a.out);
    const fs::path history = a.history.empty() ? with_suffix(a.out, ".history.json") : fs::path(a.history);
    write_text(history, history_json(result.history).dump(2) + "\n");
    std::cout << "wrote " << a.out << " (" << to_string(config.kind) << ", " << result.params.parameter_count()
              << " parameters, " << result.updates << " updates)\n";

    run.config = config.to_json();
    if (!config_source.empty()) run.inputs["config_file"] = config_source;
    run.inputs["train_shards"] = path_strings(config.shard_paths);
    run.inputs["dev_shards"] = path_strings(config.dev_paths);
    run.seeds["seed"] = config.seed;
    run.outputs = {{"checkpoint", a.out}, {"history", history.string()}};
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
    std::string model;
    std::vector<std::string> shards;
    std::string out;
    std::string manifest;
};

int cmd_predict(const PredictArgs& a, Run& run) {
    const auto params = load_checkpoint(a.model);
    check_shards(to_paths(a.shards));
    const auto preds = predict_shards(params, to_paths(a.shards));
    write_predictions(preds, a.out);
    std::cout << "wrote " << preds.size() << " predictions to " << a.out << "\n";
    run.inputs = {{"model", a.model}, {"shards", a.shards}};
    run.outputs["predictions"] = a.out;
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- tune

struct TuneArgs {
    std::string predictions;
    std::string out;
    std::string manifest;
};

int cmd_tune(const TuneArgs& a, Run& run) {
    const auto preds = read_predictions(a.predictions);
    const auto choice = tune_threshold(preds);
    const auto m = prf1(confusion(preds, choice.threshold));
    ordered_json j = {{"threshold", choice.threshold},
                      {"f1", choice.f1},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"source", "tune"}};
    write_text(a.out, j.dump(2) + "\n");
    std::cout << "threshold " << format_double(choice.threshold) << "  F1 " << fixed3(choice.f1) << "  (P "
              << fixed3(m.precision) << ", R " << fixed3(m.recall) << ")\n";
    run.inputs["predictions"] = a.predictions;
    run.outputs["threshold"] = a.out;
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::string predictions;
    Counts counts;
    std::string mode = "weighted";
    std::string out;
    std::string manifest;
};

int cmd_calibrate(CalibrateArgs& a, Run& run) {
    if (!a.counts.complete()) throw ArgumentError("calibrate needs --positives, --negatives and --rate (or --counts)");
    const auto preds = read_predictions(a.predictions);
    const auto result =
        calibrate(preds, *a.counts.rate, *a.counts.positives, *a.counts.negatives, parse_calibration_mode(a.mode));
    std::cout << format_calibration(result);
    if (result.warning) std::cerr << "warning: " << *result.warning << "\n";

    ordered_json j = {{"threshold", result.threshold},
                      {"mode", to_string(result.mode)},
                      {"target_rate", result.target_rate},
                      {"achieved_rate", result.achieved_rate},
                      {"effective_sample_size", result.effective_sample_size},
                      {"downsampled_positive_rate", result.targets.downsampled_positive_rate},
                      {"product_rate", result.targets.product_rate},
                      {"warning", result.warning ? ordered_json(*result.warning) : ordered_json(nullptr)},
                      {"source", "calibrate"}};
    write_text(a.out, j.dump(2) + "\n");
    run.inputs["predictions"] = a.predictions;
    if (!a.counts.counts_file.empty()) run.inputs["counts"] = a.counts.counts_file;
    run.config = {{"positives", *a.counts.positives},
                  {"negatives", *a.counts.negatives},
                  {"negative_rate", *a.counts.rate},
                  {"mode", a.mode}};
    run.outputs["threshold"] = a.out;
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string predictions;
    std::optional<double> threshold;
    std::string threshold_file;
    std::string out;
    std::string curves;
    std::string manifest;
};

int cmd_eval(const EvalArgs& a, Run& run) {
    double threshold = 0.5;
    if (a.threshold) {
        threshold = *a.threshold;
    } else if (!a.threshold_file.empty()) {
        const auto j = read_json(a.threshold_file);
        if (!j.contains("threshold") || !j.at("threshold").is_number()) {
            throw FormatError(a.threshold_file + ": no numeric 'threshold' field");
        }
        threshold = j.at("threshold").get<double>();
        run.inputs["threshold_file"] = a.threshold_file;
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");

    const auto preds = read_predictions(a.predictions);
    const auto report = evaluate(preds, threshold);
    std::cout << format_report(report);
    write_text(a.out, report_json(report));
    run.inputs["predictions"] = a.predictions;
    run.config["threshold"] = threshold;
    run.outputs["report"] = a.out;
    if (!a.curves.empty()) {
        emit_curves(preds, a.curves);
        run.outputs["roc_curve"] = a.curves + ".roc.csv";
        run.outputs["pr_curve"] = a.curves + ".pr.csv";
    }
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> models;  // kind=path
    std::vector<std::string> train_shards;
    std::vector<std::string> dev_shards;
    std::vector<std::string> test_shards;
    Counts counts;
    std::string out;
    std::string table;
    std::string manifest;
};

std::string display_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::lr: return "Logistic Regression";
        case ModelKind::m1: return "Model 1";
        case ModelKind::m2: return "Model 2";
        case ModelKind::m3: return "Model 3";
        case ModelKind::m4: return "Model 4";
    }
    return "?";
}

int cmd_report(ReportArgs& a, Run& run) {
    const bool calibrated = a.counts.complete();
    std::map<ModelKind, std::string> checkpoints;
    for (const auto& spec : a.models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ArgumentError("--model expects kind=path, got '" + spec + "'");
        const ModelKind kind = parse_model_kind(spec.substr(0, eq));
        if (!checkpoints.emplace(kind, spec.substr(eq + 1)).second) {
            throw ArgumentError("model kind '" + std::string(to_string(kind)) + "' given twice");
        }
    }
    for (const auto* set : {&a.train_shards, &a.dev_shards, &a.test_shards}) check_shards(to_paths(*set));

    ordered_json rows = ordered_json::array();
    std::ostringstream table;
    table << "Model                 Train F1   Dev F1   Test F1   Test AUC   Calibrated F1\n";
    for (const auto& [kind, path] : checkpoints) {
        const auto params = load_checkpoint(path);
        if (params.arch.kind != kind) {
            throw ConfigError("checkpoint '" + path + "' holds a " + std::string(to_string(params.arch.kind)) +
                              " model, not " + std::string(to_string(kind)));
        }
        const auto train_preds = predict_shards(params, to_paths(a.train_shards));
        const auto dev_preds = predict_shards(params, to_paths(a.dev_shards));
        const auto test_preds = predict_shards(params, to_paths(a.test_shards));
        const double threshold = tune_threshold(train_preds).threshold;
        const auto f1_at = [](const std::vector<Prediction>& preds, double t) { return prf1(confusion(preds, t)).f1; };

        ordered_json row = {{"kind", to_string(kind)},
                            {"checkpoint", path},
                            {"threshold", threshold},
                            {"train_f1", f1_at(train_preds, threshold)},
                            {"dev_f1", f1_at(dev_preds, threshold)},
                            {"test_f1", f1_at(test_preds, threshold)}};
        std::optional<double> auc;
        try {
            auc = auc_roc(test_preds);
        } catch (const UndefinedMetricError&) {
        }
        row["test_auc"] = auc ? ordered_json(*auc) : ordered_json(nullptr);
        std::optional<double> calibrated_f1;
        if (calibrated) {
            const auto cal = calibrate(train_preds, *a.counts.rate, *a.counts.positives, *a.counts.negatives);
            calibrated_f1 = f1_at(test_preds, cal.threshold);
            row["calibrated_threshold"] = cal.threshold;
            row["calibrated_test_f1"] = *calibrated_f1;
        }
        rows.push_back(row);

        char line[160];
        std::snprintf(line, sizeof line, "%-20s %9s %8s %9s %10s %15s\n", display_name(kind).c_str(),
                      fixed3(row["train_f1"].get<double>()).c_str(), fixed3(row["dev_f1"].get<double>()).c_str(),
                      fixed3(row["test_f1"].get<double>()).c_str(), auc ? fixed3(*auc).c_str() : "-",
                      calibrated_f1 ? fixed3(*calibrated_f1).c_str() : "-");
        table << line;
    }
    table << "F1 at the threshold tuned on the training predictions; calibrated F1 uses the rate-matching threshold.\n";
    std::cout << table.str();

    ordered_json j = {{"models", rows}};
    write_text(a.out, j.dump(2) + "\n");
    run.outputs["report"] = a.out;
    if (!a.table.empty()) {
        write_text(a.table, table.str());
        run.outputs["table"] = a.table;
    }
    run.inputs = {{"models", a.models},
                  {"train_shards", a.train_shards},
                  {"dev_shards", a.dev_shards},
                  {"test_shards", a.test_shards}};
    if (calibrated) {
        run.config = {{"positives", *a.counts.positives},
                      {"negatives", *a.counts.negatives},
                      {"negative_rate", *a.counts.rate}};
    }
    run.finish(manifest_for(a.manifest, with_suffix(a.out, ".manifest.json")));
    return kOk;
}

// ---------------------------------------------------------------- dispatch

int run_cli(std::vector<std::string> args);

int classify(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return kIo;
    if (dynamic_cast<const ParseError*>(&e)) return kParse;
    if (dynamic_cast<const ValidationError*>(&e)) return kValidation;
    if (dynamic_cast<const FormatError*>(&e)) return kFormat;
    if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const UndefinedMetricError*>(&e)) return kUndefinedMetric;
    if (dynamic_cast<const ArgumentError*>(&e)) return kUsage;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
    return kInternal;
}

int run_cli(std::vector<std::string> args) {
    CLI::App app{"Mention-pair coreference pipeline: synth, ingest, featurize, train, predict, tune, calibrate, eval, report"};
    app.require_subcommand(1);
    const std::vector<std::string> recorded(args.begin(), args.end());

    SynthArgs synth_a;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus split and its embedding table");
    synth->add_option("--out-dir", synth_a.out_dir, "Output directory")->required();
    synth->add_option("--train-docs", synth_a.train_docs, "Documents in train.jsonl")->capture_default_str();
    synth->add_option("--dev-docs", synth_a.dev_docs, "Documents in dev.jsonl")->capture_default_str();
    synth->add_option("--test-docs", synth_a.test_docs, "Documents in test.jsonl")->capture_default_str();
    synth->add_option("--mentions-per-document", synth_a.spec.mentions_per_document)->capture_default_str();
    synth->add_option("--synonym-noise", synth_a.spec.synonym_noise, "Spread of synonym vectors around their concept")
        ->capture_default_str();
    synth->add_option("--name-noise", synth_a.spec.name_noise)->capture_default_str();
    synth->add_option("--confuser-rate", synth_a.spec.confuser_rate,
                      "Chance a singleton reuses a chain entity's concept")
        ->capture_default_str();
    synth->add_option("--seed", synth_a.seed)->capture_default_str();
    synth->add_option("--manifest", synth_a.manifest, "Manifest path (default <out-dir>/synth.manifest.json)");

    IngestArgs ingest_a;
    auto* ingest = app.add_subcommand("ingest", "Enumerate, filter, downsample and shard mention pairs");
    ingest->add_option("--corpus", ingest_a.corpus, "JSONL corpus")->required();
    ingest->add_option("--out-dir", ingest_a.out_dir)->required();
    ingest->add_option("--stem", ingest_a.stem, "Shard file stem (default: corpus file stem)");
    ingest->add_option("--rate", ingest_a.rate, "Fraction of negative pairs kept")->capture_default_str();
    ingest->add_option("--shards", ingest_a.shards)->capture_default_str();
    ingest->add_option("--seed", ingest_a.seed)->capture_default_str();
    ingest->add_option("--head-match", ingest_a.head_match, "exact or relaxed")
        ->check(CLI::IsMember({"exact", "relaxed"}))
        ->capture_default_str();
    ingest->add_flag("--keep-head-match", ingest_a.keep_head_match, "Keep pairs whose heads match");
    ingest->add_flag("--any-anaphor", ingest_a.any_anaphor, "Do not require a nominal anaphor");
    ingest->add_flag("--nominal-antecedent", ingest_a.nominal_antecedent, "Also require a nominal antecedent");
    ingest->add_option("--manifest", ingest_a.manifest);

    FeaturizeArgs feat_a;
    auto* feat = app.add_subcommand("featurize", "Turn pair files into half-precision feature shards");
    feat->add_option("--corpus", feat_a.corpus)->required();
    feat->add_option("--embeddings", feat_a.embeddings)->required();
    feat->add_option("--pairs", feat_a.pairs, "One or more .pairs files")->required();
    feat->add_option("--out-dir", feat_a.out_dir)->required();
    feat->add_option("--dim", feat_a.dim, "Embedding dimension")->capture_default_str();
    feat->add_flag("--no-similarity", feat_a.no_similarity, "Write zeros into the similarity section");
    feat->add_option("--manifest", feat_a.manifest);

    TrainArgs train_a;
    auto* tr = app.add_subcommand("train", "Train one model over feature shards");
    tr->add_option("--config", train_a.config_file,
                   std::string("JSON training config (also read from $") + kConfigEnv + ")");
    tr->add_option("--out", train_a.out, "Checkpoint path")->required();
    tr->add_option("--history", train_a.history, "Per-epoch history (default <out>.history.json)");
    tr->add_option("--manifest", train_a.manifest);
    tr->add_option("--kind", train_a.kind, "lr, m1, m2, m3 or m4");
    tr->add_option("--epochs", train_a.epochs);
    tr->add_option("--learning-rate", train_a.learning_rate);
    tr->add_option("--momentum", train_a.momentum);
    tr->add_option("--batch-size", train_a.batch_size);
    tr->add_option("--positive-weight", train_a.positive_weight);
    tr->add_option("--dropout-rate", train_a.dropout_rate);
    tr->add_option("--dropout-layers", train_a.dropout_layers, "Hidden layer indices that get dropout");
    tr->add_option("--seed", train_a.seed);
    tr->add_option("--train-shards", train_a.train_shards);
    tr->add_option("--dev-shards", train_a.dev_shards);
    tr->add_option("--hidden-sizes", train_a.hidden_sizes);
    tr->add_option("--evaluate-each-epoch", train_a.evaluate_each_epoch, "true or false");

    PredictArgs pred_a;
    auto* pred = app.add_subcommand("predict", "Score feature shards with a checkpoint");
    pred->add_option("--model", pred_a.model)->required();
    pred->add_option("--shards", pred_a.shards)->required();
    pred->add_option("--out", pred_a.out, "Predictions TSV")->required();
    pred->add_option("--manifest", pred_a.manifest);

    TuneArgs tune_a;
    auto* tune = app.add_subcommand("tune", "Pick the F1-maximizing threshold");
    tune->add_option("--predictions", tune_a.predictions)->required();
    tune->add_option("--out", tune_a.out, "Threshold JSON")->required();
    tune->add_option("--manifest", tune_a.manifest);

    CalibrateArgs cal_a;
    auto* cal = app.add_subcommand("calibrate", "Pick a threshold that restores the full-population positive rate");
    cal->add_option("--predictions", cal_a.predictions, "Predictions on the downsampled training set")->required();
    cal_a.counts.add_options(cal);
    cal->add_option("--mode", cal_a.mode, "weighted or naive")
        ->check(CLI::IsMember({"weighted", "naive"}))
        ->capture_default_str();
    cal->add_option("--out", cal_a.out, "Threshold JSON")->required();
    cal->add_option("--manifest", cal_a.manifest);

    EvalArgs eval_a;
    auto* ev = app.add_subcommand("eval", "Confusion counts, precision, recall, F1 and AUC");
    ev->add_option("--predictions", eval_a.predictions)->required();
    auto* thr = ev->add_option("--threshold", eval_a.threshold, "Decision threshold (default 0.5)");
    ev->add_option("--threshold-file", eval_a.threshold_file, "JSON from tune or calibrate")->excludes(thr);
    ev->add_option("--out", eval_a.out, "Report JSON")->required();
    ev->add_option("--curves", eval_a.curves, "Prefix for ROC and PR CSV files");
    ev->add_option("--manifest", eval_a.manifest);

    ReportArgs rep_a;
    auto* rep = app.add_subcommand("report", "Train/dev/test F1 table for several checkpoints");
    rep->add_option("--model", rep_a.models, "kind=checkpoint, repeatable")->required();
    rep->add_option("--train-shards", rep_a.train_shards)->required();
    rep->add_option("--dev-shards", rep_a.dev_shards)->required();
    rep->add_option("--test-shards", rep_a.test_shards)->required();
    rep_a.counts.add_options(rep);
    rep->add_option("--out", rep_a.out, "Report JSON")->required();
    rep->add_option("--table", rep_a.table, "Also write the text table here");
    rep->add_option("--manifest", rep_a.manifest);

    std::string replay_manifest;
    auto* replay = app.add_subcommand("replay", "Rerun the command recorded in a manifest");
    replay->add_option("manifest", replay_manifest)->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    auto sub = app.get_subcommands().front();
    Run run(sub->get_name(), recorded);
    try {
        if (sub == synth) return cmd_synth(synth_a, run);
        if (sub == ingest) return cmd_ingest(ingest_a, run);
        if (sub == feat) return cmd_featurize(feat_a, run);
        if (sub == tr) return cmd_train(train_a, run);
        if (sub == pred) return cmd_predict(pred_a, run);
        if (sub == tune) return cmd_tune(tune_a, run);
        if (sub == cal) return cmd_calibrate(cal_a, run);
        if (sub == ev) return cmd_eval(eval_a, run);
        if (sub == rep) return cmd_report(rep_a, run);
        if (sub == replay) {
            const auto m = read_json(replay_manifest);
            if (!m.contains("argv") || !m.at("argv").is_array()) {
                throw FormatError(replay_manifest + ": manifest has no argv");
            }
            auto replay_args = m.at("argv").get<std::vector<std::string>>();
            if (!replay_args.empty() && replay_args.front() == "replay") {
                throw FormatError(replay_manifest + ": refusing to replay a replay");
            }
            return run_cli(std::move(replay_args));
        }
    } catch (const std::exception& e) {
        std::cerr << "corefpair " << sub->get_name() << ": error: " << e.what() << "\n";
        return classify(e);
    }
    return kInternal;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run_cli(std::move(args));
    } catch (const std::exception& e) {
        std::cerr << "corefpair: error: " << e.what() << "\n";
        return classify(e);
    }
}
