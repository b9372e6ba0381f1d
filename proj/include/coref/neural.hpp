#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "coref/features.hpp"

namespace coref {

enum class ModelKind { lr, m1, m2, m3, m4 };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
inline constexpr ModelKind kAllModelKinds[] = {ModelKind::lr, ModelKind::m1, ModelKind::m2, ModelKind::m3,
                                               ModelKind::m4};

inline bool uses_feedforward(ModelKind k) { return k != ModelKind::m2; }
inline bool uses_towers(ModelKind k) { return k == ModelKind::m2 || k == ModelKind::m3 || k == ModelKind::m4; }
inline bool uses_gate(ModelKind k) { return k == ModelKind::m4; }
/// Every kind except M4 produces a single logit; M4 produces a mixture
/// probability directly.
inline bool has_logit(ModelKind k) { return k != ModelKind::m4; }

/// Shape of a model. `hidden` are the feed-forward hidden sizes, reused for
/// the towers (whose last hidden size is the tower output). Tower inputs are
/// gathered from the pair vector by index.
struct Architecture {
    ModelKind kind = ModelKind::m1;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::vector<std::size_t> ant_tower;
    std::vector<std::size_t> ana_tower;

    /// (500, 200, 100) hidden layers over the given pair feature layout.
    static Architecture standard(ModelKind kind, const FeatureSchema& schema = FeatureSchema::standard());

    /// Throws ConfigError if indices or sizes are inconsistent.
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using WeightMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
struct DenseLayer {
    WeightMatrix<T> weights;  // out x in
    Vector<T> bias;           // out

    std::size_t in() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Parameters for one architecture. Layers are stored in declaration order:
/// feed-forward stack, antecedent tower, anaphor tower, gate. Unused groups
/// are empty. Gradients use the same type.
template <typename T>
struct ModelParams {
    Architecture arch;
    std::vector<DenseLayer<T>> feedforward;
    std::vector<DenseLayer<T>> ant_tower;
    std::vector<DenseLayer<T>> ana_tower;
    std::vector<DenseLayer<T>> gate;

    /// All layers in declaration order.
    std::vector<DenseLayer<T>*> layers();
    std::vector<const DenseLayer<T>*> layers() const;

    std::size_t parameter_count() const;

    /// Same architecture, all parameters zero.
    static ModelParams zeros_like(const Architecture& arch);

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.arch = arch;
        auto convert = [](const std::vector<DenseLayer<T>>& src, std::vector<DenseLayer<U>>& dst) {
            for (const auto& l : src) dst.push_back({l.weights.template cast<U>(), l.bias.template cast<U>()});
        };
        convert(feedforward, out.feedforward);
        convert(ant_tower, out.ant_tower);
        convert(ana_tower, out.ana_tower);
        convert(gate, out.gate);
        return out;
    }
};

/// He-normal weights (std sqrt(2/fan_in)) for layers followed by ReLU,
/// Xavier-normal (std sqrt(2/(fan_in+fan_out))) for linear outputs and the
/// gate, zero biases.
template <typename T>
ModelParams<T> init_params(const Architecture& arch, std::uint64_t seed);

struct DropoutSpec {
    double rate = 0.0;
    std::set<std::size_t> apply_layers = {0};  // hidden layer indices; 0 = first hidden layer

    void validate() const;
};

struct LossSpec {
    double positive_weight = 1.0;
    double epsilon = 1e-7;  // probability clamp for the M4 mixture

    void validate() const;
};

enum class Mode { train, infer };

/// Activations of one dense stack, kept for the backward pass.
template <typename T>
struct StackCache {
    std::vector<Matrix<T>> inputs;
    std::vector<Matrix<T>> pre_activations;
    std::vector<Matrix<T>> dropout_masks;  // empty matrix where no dropout was applied
    Matrix<T> output;
};

/// Result of a forward pass over a batch (columns of the input matrix).
/// The output head is evaluated in double precision.
template <typename T>
struct ForwardResult {
    std::vector<double> score;        // logit per column; empty for M4
    std::vector<double> probability;  // sigmoid(score), or the M4 mixture

    // submodel values used by M3/M4 and by the backward pass
    std::vector<double> feedforward_score;
    std::vector<double> tower_score;
    std::vector<double> gate;  // M4 only: weight on the feed-forward submodel

    StackCache<T> feedforward;
    StackCache<T> ant_tower;
    StackCache<T> ana_tower;
    StackCache<T> gate_cache;
};

/// x is input_dim x batch. Train mode applies inverted dropout seeded by
/// `seed`; infer mode never drops units.
template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Matrix<T>& x, Mode mode = Mode::infer,
                         const DropoutSpec& dropout = {}, std::uint64_t seed = 0);

double sigmoid(double s);
double softplus(double s);

/// Weighted cross-entropy from a logit, computed without overflow:
///   w*y*softplus(-s) + (1-y)*softplus(s)
double loss_from_logit(double s, bool label, const LossSpec& spec);
/// -(w*y*log p + (1-y)*log(1-p)) with p clamped to [eps, 1-eps].
double loss_from_probability(double p, bool label, const LossSpec& spec);

/// Mean loss over the batch of a forward result.
template <typename T>
double batch_loss(const ForwardResult<T>& result, std::span<const std::uint8_t> labels, ModelKind kind,
                  const LossSpec& spec);

/// Exact gradients of the batch-mean loss with respect to every parameter.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardResult<T>& result,
                        std::span<const std::uint8_t> labels, const LossSpec& spec);

/// Classical momentum: v <- momentum*v + g; w <- w - lr*v. `velocity` must be
/// shaped like `params` (see ModelParams::zeros_like).
template <typename T>
void sgd_step(ModelParams<T>& params, const ModelParams<T>& grads, ModelParams<T>& velocity, double learning_rate,
              double momentum);

/// Shrunken architecture for finite-difference checks: 9 inputs,
/// hidden (8, 4, 2), towers over 5 gathered inputs each.
Architecture shrunken_architecture(ModelKind kind);

struct GradientCheckReport {
    double max_relative_error = 0.0;
    double feedforward = 0.0;
    double ant_tower = 0.0;
    double ana_tower = 0.0;
    double gate = 0.0;
    std::size_t parameters_checked = 0;
    std::size_t probe_resamples = 0;
};

/// Compares backward() against central differences over every parameter
/// of a shrunken model, in double precision. Probe points with a ReLU
/// pre-activation within 10*h of zero are resampled.
GradientCheckReport gradient_check(ModelKind kind, std::uint64_t seed, double h = 1e-4);

}  // namespace coref
