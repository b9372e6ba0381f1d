#include "coref/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "coref/error.hpp"
#include "coref/rng.hpp"

namespace coref {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kOrderStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

const std::set<std::string> kConfigKeys = {
    "kind",         "epochs",         "learning_rate", "momentum",      "batch_size",
    "positive_weight", "dropout_rate", "dropout_layers", "seed",        "train_shards",
    "dev_shards",   "hidden_sizes",   "evaluate_each_epoch"};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    LossSpec{positive_weight}.validate();
    dropout.validate();
    if (hidden_sizes && kind == ModelKind::lr && !hidden_sizes->empty()) {
        throw ConfigError("logistic regression takes no hidden sizes");
    }
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& item : j.items()) {
        if (!kConfigKeys.count(item.key())) throw ConfigError("unknown training config key '" + item.key() + "'");
    }
    TrainConfig c;
    try {
        if (j.contains("kind")) c.kind = parse_model_kind(j.at("kind").get<std::string>());
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("positive_weight")) c.positive_weight = j.at("positive_weight").get<double>();
        if (j.contains("dropout_rate")) c.dropout.rate = j.at("dropout_rate").get<double>();
        if (j.contains("dropout_layers")) {
            const auto layers = j.at("dropout_layers").get<std::vector<std::size_t>>();
            c.dropout.apply_layers = std::set<std::size_t>(layers.begin(), layers.end());
        }
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("train_shards")) {
            for (const auto& p : j.at("train_shards").get<std::vector<std::string>>()) c.shard_paths.emplace_back(p);
        }
        if (j.contains("dev_shards")) {
            for (const auto& p : j.at("dev_shards").get<std::vector<std::string>>()) c.dev_paths.emplace_back(p);
        }
        if (j.contains("hidden_sizes")) c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
        if (j.contains("evaluate_each_epoch")) c.evaluate_each_epoch = j.at("evaluate_each_epoch").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad training config value: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = to_string(kind);
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["momentum"] = momentum;
    j["batch_size"] = batch_size;
    j["positive_weight"] = positive_weight;
    j["dropout_rate"] = dropout.rate;
    j["dropout_layers"] = std::vector<std::size_t>(dropout.apply_layers.begin(), dropout.apply_layers.end());
    j["seed"] = seed;
    std::vector<std::string> train, dev;
    for (const auto& p : shard_paths) train.push_back(p.string());
    for (const auto& p : dev_paths) dev.push_back(p.string());
    j["train_shards"] = train;
    j["dev_shards"] = dev;
    if (hidden_sizes) j["hidden_sizes"] = *hidden_sizes;
    j["evaluate_each_epoch"] = evaluate_each_epoch;
    return j;
}

Architecture architecture_for(ModelKind kind, std::size_t feature_dim,
                              const std::optional<std::vector<std::size_t>>& hidden) {
    const std::size_t fixed = kDistanceDim + kPairFlagDim + kSimilarityDim;
    if (feature_dim <= fixed || (feature_dim - fixed) % (2 * kWordSlots) != 0) {
        throw ConfigError("feature dimension " + std::to_string(feature_dim) + " does not match the pair schema");
    }
    Architecture arch = Architecture::standard(kind, FeatureSchema::standard((feature_dim - fixed) / (2 * kWordSlots)));
    if (hidden && kind != ModelKind::lr) arch.hidden = *hidden;
    arch.validate();
    return arch;
}

FeatureShardHeader check_shards(const std::vector<std::filesystem::path>& shards) {
    if (shards.empty()) throw ConfigError("no feature shards given");
    const FeatureShardHeader first = read_feature_shard_header(shards.front());
    for (const auto& path : shards) {
        const FeatureShardHeader h = read_feature_shard_header(path);
        if (h.schema_version != first.schema_version || h.dim != first.dim) {
            throw ConfigError("feature shard '" + path.string() + "' has schema version " +
                              std::to_string(h.schema_version) + " / dimension " + std::to_string(h.dim) +
                              ", expected " + std::to_string(first.schema_version) + " / " + std::to_string(first.dim));
        }
    }
    if (first.schema_version != kFeatureSchemaVersion) {
        throw ConfigError("feature shards have schema version " + std::to_string(first.schema_version) +
                          ", this build reads version " + std::to_string(kFeatureSchemaVersion));
    }
    return first;
}

namespace {

Matrix<float> gather_batch(const FeatureShard& shard, std::span<const std::size_t> rows) {
    Matrix<float> x(static_cast<Eigen::Index>(shard.dim), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c) {
        const auto src = shard.row(rows[c]);
        std::copy(src.begin(), src.end(), x.col(static_cast<Eigen::Index>(c)).data());
    }
    return x;
}

}  // namespace

std::vector<Prediction> predict(const ModelParams<float>& params, const FeatureShard& shard, std::size_t batch_size) {
    std::vector<Prediction> preds;
    preds.reserve(shard.rows());
    std::vector<std::size_t> rows;
    for (std::size_t begin = 0; begin < shard.rows(); begin += batch_size) {
        const std::size_t end = std::min(shard.rows(), begin + batch_size);
        rows.resize(end - begin);
        std::iota(rows.begin(), rows.end(), begin);
        const auto result = forward(params, gather_batch(shard, rows));
        for (std::size_t i = begin; i < end; ++i) {
            preds.push_back({shard.pair_ids[i], result.probability[i - begin], shard.labels[i] != 0});
        }
    }
    return preds;
}

std::vector<Prediction> predict_shards(const ModelParams<float>& params,
                                       const std::vector<std::filesystem::path>& shards) {
    std::vector<Prediction> preds;
    for (const auto& path : shards) {
        const FeatureShard shard = read_feature_shard(path);
        if (shard.dim != params.arch.input_dim) {
            throw ConfigError("feature shard '" + path.string() + "' has dimension " + std::to_string(shard.dim) +
                              ", model expects " + std::to_string(params.arch.input_dim));
        }
        auto part = predict(params, shard);
        preds.insert(preds.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return preds;
}

TrainResult train(const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    std::vector<std::filesystem::path> all = config.shard_paths;
    all.insert(all.end(), config.dev_paths.begin(), config.dev_paths.end());
    const FeatureShardHeader header = check_shards(all);

    TrainResult result{init_params<float>(architecture_for(config.kind, header.dim, config.hidden_sizes),
                                          mix_seed(config.seed, kInitStream)),
                       {},
                       0,
                       0};
    ModelParams<float> velocity = ModelParams<float>::zeros_like(result.params.arch);
    const LossSpec loss_spec{config.positive_weight};
    Rng order_rng(mix_seed(config.seed, kOrderStream));
    const std::uint64_t dropout_seed = mix_seed(config.seed, kDropoutStream);

    std::vector<std::size_t> shard_order(config.shard_paths.size());
    std::iota(shard_order.begin(), shard_order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(shard_order));
        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t batch_index = 0;
        for (std::size_t s : shard_order) {
            const FeatureShard shard = read_feature_shard(config.shard_paths[s]);
            result.max_resident_rows = std::max(result.max_resident_rows, shard.rows());
            std::vector<std::size_t> rows(shard.rows());
            std::iota(rows.begin(), rows.end(), std::size_t{0});
            order_rng.shuffle(std::span<std::size_t>(rows));

            for (std::size_t begin = 0; begin < rows.size(); begin += config.batch_size) {
                const std::size_t end = std::min(rows.size(), begin + config.batch_size);
                const std::span<const std::size_t> batch_rows(rows.data() + begin, end - begin);
                std::vector<std::uint8_t> labels;
                labels.reserve(batch_rows.size());
                for (std::size_t r : batch_rows) labels.push_back(shard.labels[r]);

                const auto fwd = forward(result.params, gather_batch(shard, batch_rows), Mode::train, config.dropout,
                                         mix_seed(dropout_seed, result.updates));
                const double loss = batch_loss(fwd, labels, config.kind, loss_spec);
                if (!std::isfinite(loss)) {
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(batch_index));
                }
                const auto grads = backward(result.params, fwd, labels, loss_spec);
                sgd_step(result.params, grads, velocity, config.learning_rate, config.momentum);
                loss_sum += loss * static_cast<double>(labels.size());
                seen += labels.size();
                ++batch_index;
                ++result.updates;
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        if (config.evaluate_each_epoch || epoch == config.epochs) {
            std::vector<Prediction> train_preds;
            for (const auto& path : config.shard_paths) {
                const FeatureShard shard = read_feature_shard(path);
                auto part = predict(result.params, shard);
                train_preds.insert(train_preds.end(), part.begin(), part.end());
            }
            if (!train_preds.empty()) {
                const ThresholdChoice tuned = tune_threshold(train_preds);
                const auto at_tuned = prf1(confusion(train_preds, tuned.threshold));
                const auto at_half = prf1(confusion(train_preds, 0.5));
                record.tuned_threshold = tuned.threshold;
                record.train_precision = at_tuned.precision;
                record.train_recall = at_tuned.recall;
                record.train_f1 = at_tuned.f1;
                record.precision_at_half = at_half.precision;
                record.recall_at_half = at_half.recall;
                record.f1_at_half = at_half.f1;
            }
            if (!config.dev_paths.empty()) {
                const auto dev_preds = predict_shards(result.params, config.dev_paths);
                record.dev_f1 = prf1(confusion(dev_preds, record.tuned_threshold)).f1;
                const auto dev_half = prf1(confusion(dev_preds, 0.5));
                record.dev_precision_at_half = dev_half.precision;
                record.dev_recall_at_half = dev_half.recall;
            }
        }
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    return result;
}

nlohmann::ordered_json history_json(const TrainHistory& history) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const EpochRecord& r : history) {
        nlohmann::ordered_json e;
        e["epoch"] = r.epoch;
        e["train_loss"] = r.train_loss;
        e["tuned_threshold"] = r.tuned_threshold;
        e["train_precision"] = r.train_precision;
        e["train_recall"] = r.train_recall;
        e["train_f1"] = r.train_f1;
        e["precision_at_half"] = r.precision_at_half;
        e["recall_at_half"] = r.recall_at_half;
        e["f1_at_half"] = r.f1_at_half;
        auto optional = [](const std::optional<double>& v) {
            return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
        };
        e["dev_f1"] = optional(r.dev_f1);
        e["dev_precision_at_half"] = optional(r.dev_precision_at_half);
        e["dev_recall_at_half"] = optional(r.dev_recall_at_half);
        j.push_back(std::move(e));
    }
    return j;
}

}  // namespace coref
