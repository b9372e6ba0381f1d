#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coref {

struct Prediction {
    std::string pair_id;
    double probability = 0.0;
    bool label = false;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// A prediction is positive iff probability >= threshold.
Confusion confusion(std::span<const Prediction> preds, double threshold);

/// 0/0 ratios are reported as 0.
PrecisionRecallF1 prf1(const Confusion& c);

/// Mann-Whitney statistic with ties counted 1/2. Throws
/// UndefinedMetricError unless both classes are present.
double auc_roc(std::span<const Prediction> preds);

struct ThresholdChoice {
    double threshold = 0.0;
    double f1 = 0.0;
};

/// Candidates are 0, midpoints of consecutive distinct scores, and 1; the
/// highest-F1 candidate wins, ties going to the smaller threshold.
ThresholdChoice tune_threshold(std::span<const Prediction> preds);
std::vector<double> threshold_candidates(std::span<const Prediction> preds);

enum class CalibrationMode { weighted, naive };

std::string_view to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(std::string_view text);

/// Rates implied by full-population counts and a negative sampling rate.
struct CalibrationTargets {
    double target_rate = 0.0;             // P / (P + N)
    double downsampled_positive_rate = 0.0;  // P / (P + d N)
    double product_rate = 0.0;            // downsampled rate * d
};

CalibrationTargets calibration_targets(double full_positives, double full_negatives, double downsample_rate);

struct CalibrationResult {
    double threshold = 0.0;
    double target_rate = 0.0;
    double achieved_rate = 0.0;
    CalibrationMode mode = CalibrationMode::weighted;
    double effective_sample_size = 0.0;  // total weight / largest single weight
    CalibrationTargets targets;
    std::optional<std::string> warning;
};

/// Picks the smallest score whose (weighted) emission rate does not exceed
/// the full-population base rate. Weighted mode counts each negative as
/// 1/d samples; naive mode uses the unweighted downsampled scores.
CalibrationResult calibrate(std::span<const Prediction> train_preds, double downsample_rate, double full_positives,
                            double full_negatives, CalibrationMode mode = CalibrationMode::weighted);

/// Human-readable calibration summary. In naive mode it adds a note
/// comparing the exact target with the product of the downsampled positive
/// rate and the sampling rate.
std::string format_calibration(const CalibrationResult& result);

struct EvalReport {
    Confusion counts;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // absent when only one class is present
    double threshold = 0.5;
};

EvalReport evaluate(std::span<const Prediction> preds, double threshold);
std::string format_report(const EvalReport& report);
std::string report_json(const EvalReport& report);

struct RocPoint {
    double threshold;  // +inf for the (0, 0) origin
    double fpr;
    double tpr;
};

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

/// One point per distinct score (descending) plus the origin; FPR-sorted.
std::vector<RocPoint> roc_curve(std::span<const Prediction> preds);
/// One point per distinct score, thresholds ascending.
std::vector<PrPoint> pr_curve(std::span<const Prediction> preds);
double trapezoid_area(std::span<const RocPoint> roc);

/// Writes <prefix>.roc.csv (threshold,fpr,tpr) and <prefix>.pr.csv
/// (threshold,precision,recall).
void emit_curves(std::span<const Prediction> preds, const std::filesystem::path& prefix);

/// Tab-separated pair_id, probability, label (0/1).
void write_predictions(std::span<const Prediction> preds, const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double.
std::string format_double(double value);

}  // namespace coref
