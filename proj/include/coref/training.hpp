#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coref/eval.hpp"
#include "coref/features.hpp"
#include "coref/neural.hpp"

namespace coref {

struct TrainConfig {
    ModelKind kind = ModelKind::m1;
    std::size_t epochs = 15;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    double positive_weight = 1.0;
    DropoutSpec dropout;
    std::uint64_t seed = 0;
    std::vector<std::filesystem::path> shard_paths;
    std::vector<std::filesystem::path> dev_paths;
    std::optional<std::vector<std::size_t>> hidden_sizes;  // default (500, 200, 100)
    bool evaluate_each_epoch = true;

    void validate() const;

    /// Keys mirror the field names (dropout as dropout_rate and
    /// dropout_layers). Unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    // train metrics at the F1-tuned threshold
    double tuned_threshold = 0.0;
    double train_precision = 0.0;
    double train_recall = 0.0;
    double train_f1 = 0.0;
    // train metrics at the fixed decision threshold 0.5
    double precision_at_half = 0.0;
    double recall_at_half = 0.0;
    double f1_at_half = 0.0;
    std::optional<double> dev_f1;  // at the train-tuned threshold
    std::optional<double> dev_precision_at_half;
    std::optional<double> dev_recall_at_half;
};

using TrainHistory = std::vector<EpochRecord>;

struct TrainResult {
    ModelParams<float> params;
    TrainHistory history;
    std::size_t updates = 0;
    std::size_t max_resident_rows = 0;  // largest number of feature rows held at once
};

/// Architecture matching a shard dimension (5 word slots of equal width plus
/// 13 distance/flag/similarity values).
Architecture architecture_for(ModelKind kind, std::size_t feature_dim,
                              const std::optional<std::vector<std::size_t>>& hidden = std::nullopt);

/// Epoch loop: shards visited in a seeded shuffled order, one shard in memory
/// at a time, rows shuffled within the shard, minibatch SGD with momentum.
TrainResult train(const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

std::vector<Prediction> predict(const ModelParams<float>& params, const FeatureShard& shard,
                                std::size_t batch_size = 256);
std::vector<Prediction> predict_shards(const ModelParams<float>& params,
                                       const std::vector<std::filesystem::path>& shards);

/// Checks that all shards exist, share one schema version and dimension.
FeatureShardHeader check_shards(const std::vector<std::filesystem::path>& shards);

nlohmann::ordered_json history_json(const TrainHistory& history);

}  // namespace coref
