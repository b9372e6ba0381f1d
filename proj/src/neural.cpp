#include "coref/neural.hpp"

#include <algorithm>
#include <cmath>

#include "coref/error.hpp"
#include "coref/rng.hpp"

namespace coref {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::lr: return "lr";
        case ModelKind::m1: return "m1";
        case ModelKind::m2: return "m2";
        case ModelKind::m3: return "m3";
        case ModelKind::m4: return "m4";
    }
    return "lr";
}

ModelKind parse_model_kind(std::string_view text) {
    for (ModelKind k : kAllModelKinds) {
        if (to_string(k) == text) return k;
    }
    throw ArgumentError("unknown model kind '" + std::string(text) + "' (expected lr, m1, m2, m3 or m4)");
}

Architecture Architecture::standard(ModelKind kind, const FeatureSchema& schema) {
    Architecture a;
    a.kind = kind;
    a.input_dim = schema.total_dim;
    if (kind != ModelKind::lr) a.hidden = {500, 200, 100};
    if (uses_towers(kind)) {
        a.ant_tower = schema.tower_indices(true);
        a.ana_tower = schema.tower_indices(false);
    }
    return a;
}

void Architecture::validate() const {
    if (input_dim == 0) throw ConfigError("architecture input dimension must be positive");
    if (kind == ModelKind::lr && !hidden.empty()) throw ConfigError("logistic regression has no hidden layers");
    if (kind != ModelKind::lr && hidden.empty()) throw ConfigError("architecture needs hidden layer sizes");
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("hidden layer sizes must be positive");
    }
    const bool towers = uses_towers(kind);
    for (const auto* idx : {&ant_tower, &ana_tower}) {
        if (towers && idx->empty()) throw ConfigError("tower input indices missing");
        if (!towers && !idx->empty()) throw ConfigError("tower indices given for a kind without towers");
        for (std::size_t i : *idx) {
            if (i >= input_dim) throw ConfigError("tower index " + std::to_string(i) + " outside input dimension");
        }
    }
}

template <typename T>
std::vector<DenseLayer<T>*> ModelParams<T>::layers() {
    std::vector<DenseLayer<T>*> out;
    for (auto* group : {&feedforward, &ant_tower, &ana_tower, &gate}) {
        for (auto& l : *group) out.push_back(&l);
    }
    return out;
}

template <typename T>
std::vector<const DenseLayer<T>*> ModelParams<T>::layers() const {
    std::vector<const DenseLayer<T>*> out;
    for (const auto* group : {&feedforward, &ant_tower, &ana_tower, &gate}) {
        for (const auto& l : *group) out.push_back(&l);
    }
    return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* l : layers()) n += static_cast<std::size_t>(l->weights.size() + l->bias.size());
    return n;
}

namespace {

struct LayerShape {
    std::size_t in;
    std::size_t out;
    bool relu_follows;
};

std::vector<LayerShape> feedforward_shapes(const Architecture& a) {
    std::vector<LayerShape> shapes;
    std::size_t in = a.input_dim;
    for (std::size_t h : a.hidden) {
        shapes.push_back({in, h, true});
        in = h;
    }
    shapes.push_back({in, 1, false});
    return shapes;
}

std::vector<LayerShape> tower_shapes(const Architecture& a, std::size_t tower_in) {
    std::vector<LayerShape> shapes;
    std::size_t in = tower_in;
    for (std::size_t i = 0; i < a.hidden.size(); ++i) {
        shapes.push_back({in, a.hidden[i], i + 1 < a.hidden.size()});
        in = a.hidden[i];
    }
    return shapes;
}

template <typename T>
std::vector<DenseLayer<T>> make_layers(const std::vector<LayerShape>& shapes, Rng* rng) {
    std::vector<DenseLayer<T>> layers;
    for (const LayerShape& s : shapes) {
        DenseLayer<T> l;
        l.weights = WeightMatrix<T>::Zero(static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
        l.bias = Vector<T>::Zero(static_cast<Eigen::Index>(s.out));
        if (rng) {
            const double stddev = s.relu_follows ? std::sqrt(2.0 / static_cast<double>(s.in))
                                                 : std::sqrt(2.0 / static_cast<double>(s.in + s.out));
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                    l.weights(r, c) = static_cast<T>(rng->normal() * stddev);
                }
            }
        }
        layers.push_back(std::move(l));
    }
    return layers;
}

template <typename T>
ModelParams<T> build(const Architecture& arch, Rng* rng) {
    arch.validate();
    ModelParams<T> p;
    p.arch = arch;
    if (uses_feedforward(arch.kind)) p.feedforward = make_layers<T>(feedforward_shapes(arch), rng);
    if (uses_towers(arch.kind)) {
        p.ant_tower = make_layers<T>(tower_shapes(arch, arch.ant_tower.size()), rng);
        p.ana_tower = make_layers<T>(tower_shapes(arch, arch.ana_tower.size()), rng);
    }
    if (uses_gate(arch.kind)) p.gate = make_layers<T>({{arch.input_dim, 1, false}}, rng);
    return p;
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like(const Architecture& arch) {
    return build<T>(arch, nullptr);
}

template <typename T>
ModelParams<T> init_params(const Architecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    return build<T>(arch, &rng);
}

void DropoutSpec::validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

void LossSpec::validate() const {
    if (!(positive_weight > 0.0) || !std::isfinite(positive_weight)) {
        throw ConfigError("positive weight must be a positive finite number");
    }
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("loss epsilon must lie in (0, 0.5)");
}

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

double loss_from_logit(double s, bool label, const LossSpec& spec) {
    return label ? spec.positive_weight * softplus(-s) : softplus(s);
}

double loss_from_probability(double p, bool label, const LossSpec& spec) {
    const double pc = std::clamp(p, spec.epsilon, 1.0 - spec.epsilon);
    return label ? -spec.positive_weight * std::log(pc) : -std::log1p(-pc);
}

namespace {

constexpr std::uint64_t kFeedforwardStream = 11;
constexpr std::uint64_t kAntStream = 12;
constexpr std::uint64_t kAnaStream = 13;

template <typename T>
StackCache<T> stack_forward(const std::vector<DenseLayer<T>>& layers, Matrix<T> h, bool relu_on_last, Mode mode,
                            const DropoutSpec& dropout, std::uint64_t seed) {
    StackCache<T> cache;
    const bool drop = mode == Mode::train && dropout.rate > 0.0;
    Rng rng(seed);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout.rate));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool last = l + 1 == layers.size();
        Matrix<T> z = layers[l].weights * h;
        z.colwise() += layers[l].bias;
        cache.inputs.push_back(std::move(h));
        if (last && !relu_on_last) {
            h = z;
            cache.dropout_masks.emplace_back();
        } else {
            h = z.cwiseMax(T(0));
            if (drop && dropout.apply_layers.count(l)) {
                Matrix<T> mask(h.rows(), h.cols());
                for (Eigen::Index c = 0; c < mask.cols(); ++c) {
                    for (Eigen::Index r = 0; r < mask.rows(); ++r) {
                        mask(r, c) = rng.bernoulli(dropout.rate) ? T(0) : keep_scale;
                    }
                }
                h = h.cwiseProduct(mask);
                cache.dropout_masks.push_back(std::move(mask));
            } else {
                cache.dropout_masks.emplace_back();
            }
        }
        cache.pre_activations.push_back(std::move(z));
    }
    cache.output = h;
    return cache;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& x, const std::vector<std::size_t>& indices) {
    Matrix<T> out(static_cast<Eigen::Index>(indices.size()), x.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    return out;
}

template <typename T>
std::vector<double> row_to_double(const Matrix<T>& m) {
    std::vector<double> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = static_cast<double>(m(0, c));
    return out;
}

template <typename T>
void stack_backward(const std::vector<DenseLayer<T>>& layers, const StackCache<T>& cache, bool relu_on_last,
                    Matrix<T> grad, std::vector<DenseLayer<T>>& out) {
    for (std::size_t i = layers.size(); i-- > 0;) {
        const bool last = i + 1 == layers.size();
        if (!last || relu_on_last) {
            grad = grad.cwiseProduct(cache.pre_activations[i].unaryExpr([](T z) { return z > T(0) ? T(1) : T(0); }));
            if (cache.dropout_masks[i].size() > 0) grad = grad.cwiseProduct(cache.dropout_masks[i]);
        }
        out[i].weights = grad * cache.inputs[i].transpose();
        out[i].bias = grad.rowwise().sum();
        if (i > 0) grad = layers[i].weights.transpose() * grad;
    }
}

template <typename T>
Matrix<T> as_row(const std::vector<double>& v) {
    Matrix<T> m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = static_cast<T>(v[i]);
    return m;
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Matrix<T>& x, Mode mode, const DropoutSpec& dropout,
                         std::uint64_t seed) {
    const Architecture& arch = params.arch;
    if (static_cast<std::size_t>(x.rows()) != arch.input_dim) {
        throw ConfigError("input has " + std::to_string(x.rows()) + " features, model expects " +
                          std::to_string(arch.input_dim));
    }
    dropout.validate();
    const std::size_t batch = static_cast<std::size_t>(x.cols());
    ForwardResult<T> r;

    if (uses_feedforward(arch.kind)) {
        r.feedforward = stack_forward(params.feedforward, x, false, mode, dropout, mix_seed(seed, kFeedforwardStream));
        r.feedforward_score = row_to_double(r.feedforward.output);
    }
    if (uses_towers(arch.kind)) {
        r.ant_tower = stack_forward(params.ant_tower, gather_rows(x, arch.ant_tower), false, mode, dropout,
                                    mix_seed(seed, kAntStream));
        r.ana_tower = stack_forward(params.ana_tower, gather_rows(x, arch.ana_tower), false, mode, dropout,
                                    mix_seed(seed, kAnaStream));
        r.tower_score.resize(batch);
        for (std::size_t c = 0; c < batch; ++c) {
            const auto col = static_cast<Eigen::Index>(c);
            r.tower_score[c] = static_cast<double>(r.ant_tower.output.col(col).dot(r.ana_tower.output.col(col)));
        }
    }
    if (uses_gate(arch.kind)) {
        r.gate_cache = stack_forward(params.gate, x, false, Mode::infer, dropout, 0);
        r.gate = row_to_double(r.gate_cache.output);
        for (double& g : r.gate) g = sigmoid(g);
    }

    r.probability.resize(batch);
    switch (arch.kind) {
        case ModelKind::lr:
        case ModelKind::m1: r.score = r.feedforward_score; break;
        case ModelKind::m2: r.score = r.tower_score; break;
        case ModelKind::m3:
            r.score.resize(batch);
            for (std::size_t c = 0; c < batch; ++c) r.score[c] = r.feedforward_score[c] + r.tower_score[c];
            break;
        case ModelKind::m4:
            for (std::size_t c = 0; c < batch; ++c) {
                r.probability[c] =
                    r.gate[c] * sigmoid(r.feedforward_score[c]) + (1.0 - r.gate[c]) * sigmoid(r.tower_score[c]);
            }
            break;
    }
    if (has_logit(arch.kind)) {
        for (std::size_t c = 0; c < batch; ++c) r.probability[c] = sigmoid(r.score[c]);
    }
    return r;
}

template <typename T>
double batch_loss(const ForwardResult<T>& result, std::span<const std::uint8_t> labels, ModelKind kind,
                  const LossSpec& spec) {
    if (labels.size() != result.probability.size()) throw ConfigError("label count does not match batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        total += has_logit(kind) ? loss_from_logit(result.score[i], labels[i] != 0, spec)
                                 : loss_from_probability(result.probability[i], labels[i] != 0, spec);
    }
    return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardResult<T>& result,
                        std::span<const std::uint8_t> labels, const LossSpec& spec) {
    const Architecture& arch = params.arch;
    const std::size_t batch = result.probability.size();
    if (labels.size() != batch) throw ConfigError("label count does not match batch size");
    const double inv_batch = 1.0 / static_cast<double>(batch);
    const double w = spec.positive_weight;

    // d(mean loss)/d(submodel outputs)
    std::vector<double> d_feedforward(batch, 0.0);
    std::vector<double> d_tower(batch, 0.0);
    std::vector<double> d_gate(batch, 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
        const bool y = labels[i] != 0;
        if (has_logit(arch.kind)) {
            const double s = result.score[i];
            const double ds = (y ? -w * sigmoid(-s) : sigmoid(s)) * inv_batch;
            d_feedforward[i] = ds;
            d_tower[i] = ds;
        } else {
            const double p = result.probability[i];
            double dp = 0.0;
            if (p > spec.epsilon && p < 1.0 - spec.epsilon) dp = (y ? -w / p : 1.0 / (1.0 - p)) * inv_batch;
            const double a = sigmoid(result.feedforward_score[i]);
            const double b = sigmoid(result.tower_score[i]);
            const double g = result.gate[i];
            d_feedforward[i] = dp * g * a * (1.0 - a);
            d_tower[i] = dp * (1.0 - g) * b * (1.0 - b);
            d_gate[i] = dp * (a - b) * g * (1.0 - g);
        }
    }

    ModelParams<T> grads = ModelParams<T>::zeros_like(arch);
    if (uses_feedforward(arch.kind)) {
        stack_backward(params.feedforward, result.feedforward, false, as_row<T>(d_feedforward), grads.feedforward);
    }
    if (uses_towers(arch.kind)) {
        // s = u . v  =>  ds/du = v, ds/dv = u
        const Matrix<T> ds = as_row<T>(d_tower);
        Matrix<T> du = result.ana_tower.output;
        Matrix<T> dv = result.ant_tower.output;
        for (Eigen::Index c = 0; c < ds.cols(); ++c) {
            du.col(c) *= ds(0, c);
            dv.col(c) *= ds(0, c);
        }
        stack_backward(params.ant_tower, result.ant_tower, false, du, grads.ant_tower);
        stack_backward(params.ana_tower, result.ana_tower, false, dv, grads.ana_tower);
    }
    if (uses_gate(arch.kind)) {
        stack_backward(params.gate, result.gate_cache, false, as_row<T>(d_gate), grads.gate);
    }
    return grads;
}

template <typename T>
void sgd_step(ModelParams<T>& params, const ModelParams<T>& grads, ModelParams<T>& velocity, double learning_rate,
              double momentum) {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    auto p = params.layers();
    auto g = grads.layers();
    auto v = velocity.layers();
    if (p.size() != g.size() || p.size() != v.size()) throw ConfigError("gradient shape does not match parameters");
    const T mu = static_cast<T>(momentum);
    const T lr = static_cast<T>(learning_rate);
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i]->weights = mu * v[i]->weights + g[i]->weights;
        v[i]->bias = mu * v[i]->bias + g[i]->bias;
        p[i]->weights -= lr * v[i]->weights;
        p[i]->bias -= lr * v[i]->bias;
    }
}

Architecture shrunken_architecture(ModelKind kind) {
    Architecture a;
    a.kind = kind;
    a.input_dim = 9;
    if (kind != ModelKind::lr) a.hidden = {8, 4, 2};
    if (uses_towers(kind)) {
        a.ant_tower = {0, 1, 2, 6, 7};
        a.ana_tower = {3, 4, 5, 6, 7};
    }
    return a;
}

namespace {

template <typename T>
bool near_kink(const StackCache<T>& cache, bool relu_on_last, double margin) {
    for (std::size_t i = 0; i < cache.pre_activations.size(); ++i) {
        if (i + 1 == cache.pre_activations.size() && !relu_on_last) break;
        if ((cache.pre_activations[i].array().abs() < margin).any()) return true;
    }
    return false;
}

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-10});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace

GradientCheckReport gradient_check(ModelKind kind, std::uint64_t seed, double h) {
    const Architecture arch = shrunken_architecture(kind);
    constexpr std::size_t kBatch = 4;
    LossSpec spec;
    spec.positive_weight = 1.5;
    GradientCheckReport report;

    Rng rng(mix_seed(seed, 101));
    for (std::size_t attempt = 0;; ++attempt) {
        if (attempt == 1000) throw NumericError("could not find a gradient probe point away from ReLU kinks");
        ModelParams<double> params = init_params<double>(arch, rng.next());
        for (auto* l : params.layers()) {
            for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias(i) = 0.1 * rng.normal();
        }
        Matrix<double> x(static_cast<Eigen::Index>(arch.input_dim), static_cast<Eigen::Index>(kBatch));
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = rng.normal();
        }
        std::vector<std::uint8_t> labels = {1, 0, 1, 0};

        const auto base = forward(params, x);
        if (near_kink(base.feedforward, false, 10 * h) || near_kink(base.ant_tower, false, 10 * h) ||
            near_kink(base.ana_tower, false, 10 * h)) {
            ++report.probe_resamples;
            continue;
        }

        const ModelParams<double> grads = backward(params, base, labels, spec);
        auto p_layers = params.layers();
        auto g_layers = grads.layers();
        const std::size_t n_ff = params.feedforward.size();
        const std::size_t n_ant = params.ant_tower.size();
        const std::size_t n_ana = params.ana_tower.size();

        auto numeric = [&](double& theta) {
            const double saved = theta;
            theta = saved + h;
            const double up = batch_loss(forward(params, x), labels, kind, spec);
            theta = saved - h;
            const double down = batch_loss(forward(params, x), labels, kind, spec);
            theta = saved;
            return (up - down) / (2.0 * h);
        };

        for (std::size_t li = 0; li < p_layers.size(); ++li) {
            double* group = &report.gate;
            if (li < n_ff) {
                group = &report.feedforward;
            } else if (li < n_ff + n_ant) {
                group = &report.ant_tower;
            } else if (li < n_ff + n_ant + n_ana) {
                group = &report.ana_tower;
            }
            auto check = [&](double& theta, double analytic) {
                const double err = relative_error(analytic, numeric(theta));
                *group = std::max(*group, err);
                report.max_relative_error = std::max(report.max_relative_error, err);
                ++report.parameters_checked;
            };
            DenseLayer<double>& layer = *p_layers[li];
            const DenseLayer<double>& grad = *g_layers[li];
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) check(layer.weights(r, c), grad.weights(r, c));
            }
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias(r), grad.bias(r));
        }
        return report;
    }
}

#define COREF_INSTANTIATE(T)                                                                                       \
    template struct ModelParams<T>;                                                                                \
    template ModelParams<T> init_params<T>(const Architecture&, std::uint64_t);                                    \
    template ForwardResult<T> forward<T>(const ModelParams<T>&, const Matrix<T>&, Mode, const DropoutSpec&,        \
                                         std::uint64_t);                                                           \
    template double batch_loss<T>(const ForwardResult<T>&, std::span<const std::uint8_t>, ModelKind,               \
                                  const LossSpec&);                                                                \
    template ModelParams<T> backward<T>(const ModelParams<T>&, const ForwardResult<T>&,                            \
                                        std::span<const std::uint8_t>, const LossSpec&);                           \
    template void sgd_step<T>(ModelParams<T>&, const ModelParams<T>&, ModelParams<T>&, double, double);

COREF_INSTANTIATE(float)
COREF_INSTANTIATE(double)

#undef COREF_INSTANTIATE

}  // namespace coref
