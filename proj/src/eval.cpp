#include "coref/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "coref/corpus.hpp"
#include "coref/error.hpp"

namespace coref {

std::string format_double(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

Confusion confusion(std::span<const Prediction> preds, double threshold) {
    Confusion c;
    for (const Prediction& p : preds) {
        const bool positive = p.probability >= threshold;
        if (positive && p.label) {
            ++c.tp;
        } else if (positive) {
            ++c.fp;
        } else if (p.label) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    return ratio(2.0 * static_cast<double>(tp), static_cast<double>(2 * tp + fp + fn));
}

/// Indices sorted by descending probability.
std::vector<std::size_t> descending(std::span<const Prediction> preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].probability > preds[b].probability; });
    return order;
}

}  // namespace

PrecisionRecallF1 prf1(const Confusion& c) {
    PrecisionRecallF1 m;
    m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    m.f1 = f1_from_counts(c.tp, c.fp, c.fn);
    return m;
}

double auc_roc(std::span<const Prediction> preds) {
    std::size_t positives = 0;
    for (const Prediction& p : preds) positives += p.label ? 1 : 0;
    const std::size_t negatives = preds.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetricError("AUC needs at least one positive and one negative prediction");
    }
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return preds[a].probability < preds[b].probability; });

    // Sum of (1-based, tie-averaged) ranks of the positives.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::size_t group_positives = 0;
        while (j < order.size() && preds[order[j]].probability == preds[order[i]].probability) {
            group_positives += preds[order[j]].label ? 1 : 0;
            ++j;
        }
        const double average_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        rank_sum += average_rank * static_cast<double>(group_positives);
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double u = rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

std::vector<double> threshold_candidates(std::span<const Prediction> preds) {
    std::vector<double> scores;
    scores.reserve(preds.size());
    for (const Prediction& p : preds) scores.push_back(p.probability);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> candidates = {0.0};
    for (std::size_t i = 1; i < scores.size(); ++i) candidates.push_back(0.5 * (scores[i - 1] + scores[i]));
    candidates.push_back(1.0);
    return candidates;
}

ThresholdChoice tune_threshold(std::span<const Prediction> preds) {
    if (preds.empty()) throw ArgumentError("cannot tune a threshold on zero predictions");
    std::size_t total_pos = 0;
    for (const Prediction& p : preds) total_pos += p.label ? 1 : 0;

    // Sweep distinct scores from high to low. Predicted-positive sets only
    // change at score boundaries, so each candidate's counts are the counts
    // of all scores above it.
    const std::vector<std::size_t> order = descending(preds);
    struct Step {
        double threshold;
        double f1;
    };
    std::vector<Step> steps;  // descending thresholds

    // threshold 1: only scores >= 1
    std::size_t k = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    while (k < order.size() && preds[order[k]].probability >= 1.0) {
        (preds[order[k]].label ? tp : fp) += 1;
        ++k;
    }
    steps.push_back({1.0, f1_from_counts(tp, fp, total_pos - tp)});
    tp = fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = preds[order[i]].probability;
        while (i < order.size() && preds[order[i]].probability == score) {
            (preds[order[i]].label ? tp : fp) += 1;
            ++i;
        }
        if (i < order.size()) {
            const double mid = 0.5 * (score + preds[order[i]].probability);
            steps.push_back({mid, f1_from_counts(tp, fp, total_pos - tp)});
        }
    }
    steps.push_back({0.0, f1_from_counts(total_pos, preds.size() - total_pos, 0)});

    ThresholdChoice best{steps.back().threshold, steps.back().f1};
    for (std::size_t s = steps.size() - 1; s-- > 0;) {
        if (steps[s].f1 > best.f1) best = {steps[s].threshold, steps[s].f1};
    }
    return best;
}

std::string_view to_string(CalibrationMode mode) { return mode == CalibrationMode::weighted ? "weighted" : "naive"; }

CalibrationMode parse_calibration_mode(std::string_view text) {
    if (text == "weighted") return CalibrationMode::weighted;
    if (text == "naive") return CalibrationMode::naive;
    throw ArgumentError("unknown calibration mode '" + std::string(text) + "' (expected weighted or naive)");
}

CalibrationTargets calibration_targets(double full_positives, double full_negatives, double downsample_rate) {
    CalibrationTargets t;
    t.target_rate = full_positives / (full_positives + full_negatives);
    t.downsampled_positive_rate = expected_positive_rate(full_positives, full_negatives, downsample_rate);
    t.product_rate = t.downsampled_positive_rate * downsample_rate;
    return t;
}

CalibrationResult calibrate(std::span<const Prediction> train_preds, double downsample_rate, double full_positives,
                            double full_negatives, CalibrationMode mode) {
    if (!(downsample_rate > 0.0 && downsample_rate <= 1.0)) {
        throw ArgumentError("downsample rate must lie in (0, 1]");
    }
    if (!(full_positives > 0.0 && full_negatives > 0.0)) {
        throw ArgumentError("full-population positive and negative counts must be positive");
    }
    if (train_preds.empty()) throw ArgumentError("cannot calibrate on zero predictions");

    CalibrationResult r;
    r.mode = mode;
    r.targets = calibration_targets(full_positives, full_negatives, downsample_rate);
    r.target_rate = r.targets.target_rate;

    const double negative_weight = mode == CalibrationMode::weighted ? 1.0 / downsample_rate : 1.0;
    auto weight = [&](const Prediction& p) { return p.label ? 1.0 : negative_weight; };
    double total = 0.0;
    double max_weight = 0.0;
    for (const Prediction& p : train_preds) {
        total += weight(p);
        max_weight = std::max(max_weight, weight(p));
    }
    r.effective_sample_size = total / max_weight;

    if (r.target_rate >= 1.0) {
        r.threshold = 0.0;
        r.achieved_rate = 1.0;
        r.warning = "target rate is at or above the largest achievable emission rate; using threshold 0";
        return r;
    }

    const std::vector<std::size_t> order = descending(train_preds);
    double emitted = 0.0;
    std::optional<double> chosen;
    double chosen_rate = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = train_preds[order[i]].probability;
        double group = 0.0;
        while (i < order.size() && train_preds[order[i]].probability == score) {
            group += weight(train_preds[order[i]]);
            ++i;
        }
        if ((emitted + group) / total > r.target_rate) break;
        emitted += group;
        chosen = score;
        chosen_rate = emitted / total;
    }
    if (chosen) {
        r.threshold = *chosen;
        r.achieved_rate = chosen_rate;
    } else {
        // even the top score group over-emits: move just above it
        r.threshold = std::nextafter(train_preds[order.front()].probability, std::numeric_limits<double>::infinity());
        r.achieved_rate = 0.0;
    }
    return r;
}

std::string format_calibration(const CalibrationResult& r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "calibration mode:          " << to_string(r.mode) << '\n'
        << "downsampled positive rate: " << r.targets.downsampled_positive_rate << '\n'
        << "target true rate P/(P+N):  " << r.target_rate << '\n'
        << "achieved emission rate:    " << r.achieved_rate << '\n';
    out.precision(6);
    out << "threshold:                 " << r.threshold << '\n';
    if (r.mode == CalibrationMode::naive) {
        out.precision(4);
        out << "note: the downsampled positive rate times the sampling rate is " << r.targets.product_rate << " ("
            << std::lround(100.0 * r.targets.product_rate) << "%), which understates the exact full-population rate "
            << r.target_rate << "; the threshold targets the exact rate\n";
    }
    if (r.warning) out << "warning: " << *r.warning << '\n';
    return out.str();
}

EvalReport evaluate(std::span<const Prediction> preds, double threshold) {
    EvalReport r;
    r.threshold = threshold;
    r.counts = confusion(preds, threshold);
    const auto m = prf1(r.counts);
    r.precision = m.precision;
    r.recall = m.recall;
    r.f1 = m.f1;
    if (r.counts.tp + r.counts.fn > 0 && r.counts.fp + r.counts.tn > 0) r.auc = auc_roc(preds);
    return r;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "threshold  " << r.threshold << '\n'
        << "                 predicted NO  predicted YES\n"
        << "actual NO   " << std::string(14 - std::min<std::size_t>(14, std::to_string(r.counts.tn).size()), ' ')
        << r.counts.tn << std::string(15 - std::min<std::size_t>(15, std::to_string(r.counts.fp).size()), ' ')
        << r.counts.fp << '\n'
        << "actual YES  " << std::string(14 - std::min<std::size_t>(14, std::to_string(r.counts.fn).size()), ' ')
        << r.counts.fn << std::string(15 - std::min<std::size_t>(15, std::to_string(r.counts.tp).size()), ' ')
        << r.counts.tp << '\n'
        << "precision  " << r.precision << '\n'
        << "recall     " << r.recall << '\n'
        << "f1         " << r.f1 << '\n';
    if (r.auc) {
        out << "auc        " << *r.auc << '\n';
    } else {
        out << "auc        undefined (single class)\n";
    }
    return out.str();
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["threshold"] = r.threshold;
    j["tp"] = r.counts.tp;
    j["fp"] = r.counts.fp;
    j["fn"] = r.counts.fn;
    j["tn"] = r.counts.tn;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["f1"] = r.f1;
    j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
    return j.dump(2);
}

std::vector<RocPoint> roc_curve(std::span<const Prediction> preds) {
    std::size_t positives = 0;
    for (const Prediction& p : preds) positives += p.label ? 1 : 0;
    const std::size_t negatives = preds.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw UndefinedMetricError("ROC curve needs at least one positive and one negative prediction");
    }
    const std::vector<std::size_t> order = descending(preds);
    std::vector<RocPoint> points = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = preds[order[i]].probability;
        while (i < order.size() && preds[order[i]].probability == score) {
            (preds[order[i]].label ? tp : fp) += 1;
            ++i;
        }
        points.push_back({score, static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives)});
    }
    return points;
}

std::vector<PrPoint> pr_curve(std::span<const Prediction> preds) {
    std::size_t positives = 0;
    for (const Prediction& p : preds) positives += p.label ? 1 : 0;
    const std::vector<std::size_t> order = descending(preds);
    std::vector<PrPoint> points;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = preds[order[i]].probability;
        while (i < order.size() && preds[order[i]].probability == score) {
            (preds[order[i]].label ? tp : fp) += 1;
            ++i;
        }
        points.push_back({score, ratio(static_cast<double>(tp), static_cast<double>(tp + fp)),
                          ratio(static_cast<double>(tp), static_cast<double>(positives))});
    }
    std::reverse(points.begin(), points.end());
    return points;
}

double trapezoid_area(std::span<const RocPoint> roc) {
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
    }
    return area;
}

void emit_curves(std::span<const Prediction> preds, const std::filesystem::path& prefix) {
    const auto roc = roc_curve(preds);
    const auto pr = pr_curve(preds);
    const std::filesystem::path roc_path = prefix.string() + ".roc.csv";
    const std::filesystem::path pr_path = prefix.string() + ".pr.csv";
    {
        std::ofstream out(roc_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + roc_path.string() + "'");
        out << "threshold,fpr,tpr\n";
        for (const auto& p : roc) out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
        if (!out) throw IoError("write failed for '" + roc_path.string() + "'");
    }
    {
        std::ofstream out(pr_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + pr_path.string() + "'");
        out << "threshold,precision,recall\n";
        for (const auto& p : pr) {
            out << format_double(p.threshold) << ',' << format_double(p.precision) << ',' << format_double(p.recall) << '\n';
        }
        if (!out) throw IoError("write failed for '" + pr_path.string() + "'");
    }
}

void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write predictions file '" + path.string() + "'");
    for (const Prediction& p : preds) {
        out << p.pair_id << '\t' << format_double(p.probability) << '\t' << (p.label ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open predictions file '" + path.string() + "'");
    std::vector<Prediction> preds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw ParseError(path.string() + ": expected pair_id, probability, label", line_no);
        }
        Prediction p;
        p.pair_id = line.substr(0, t1);
        const char* first = line.data() + t1 + 1;
        const char* last = line.data() + t2;
        auto [ptr, ec] = std::from_chars(first, last, p.probability);
        if (ec != std::errc() || ptr != last || !(p.probability >= 0.0 && p.probability <= 1.0)) {
            throw ParseError(path.string() + ": probability must be a number in [0, 1]", line_no);
        }
        const std::string label = line.substr(t2 + 1);
        if (label != "0" && label != "1") throw ParseError(path.string() + ": label must be 0 or 1", line_no);
        p.label = label == "1";
        preds.push_back(std::move(p));
    }
    return preds;
}

}  // namespace coref
