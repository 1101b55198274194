#pragma once

#include "synforce/model.hpp"
#include "synforce/pipeline.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace synforce {

struct Checkpoint;

// Thresholds are empirical quantiles of normal training scores.
struct AlarmConfig {
    std::array<double, 3> quantiles{0.99, 0.999, 0.9999};
    std::array<double, 3> thresholds{};
    double prob_scale = 1e-9; // logistic width (tau3 - tau1) / 4, clamped
    bool degenerate = false;  // thresholds not strictly increasing
};

struct ScoreSeries {
    std::vector<double> timestamps;
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<int> alarm_levels;
    std::vector<double> fault_probability;
    Eigen::MatrixXd global; // filled only when latents are requested
    Eigen::MatrixXd local;

    std::size_t size() const { return scores.size(); }
};

// ||E_g(x) - c_g||_2 per row of an already-transformed feature matrix.
std::vector<double> anomaly_scores(const ModelParams& params, const Eigen::VectorXd& centre,
                                   const Eigen::MatrixXd& features);

ScoreSeries score_features(const ModelParams& params, const Eigen::VectorXd& centre, const FeatureMatrix& features,
                           const std::optional<AlarmConfig>& alarm, bool keep_latents = false);

// Throws SchemaError when the frames do not match the stored pipeline.
ScoreSeries score_frames(const Checkpoint& checkpoint, std::span<const RawFrame> frames, bool keep_latents = false);

// Linear-interpolation quantile of an ascending sample.
double quantile_sorted(std::span<const double> sorted, double q);

// Throws ConfigError with fewer than 100 scores.
AlarmConfig alarm_levels(std::span<const double> train_scores);
AlarmConfig alarm_levels(std::span<const double> train_scores, const std::array<double, 3>& quantiles);
int alarm_level(double score, const AlarmConfig& alarm);
double fault_probability(double score, const AlarmConfig& alarm);

// All anomalous indices plus an equal-size seeded sample of normal indices,
// ascending. Throws ConfigError when there is no anomalous frame.
std::vector<std::size_t> balanced_eval_set(std::span<const int> labels, std::uint64_t seed,
                                           std::vector<std::string>* warnings = nullptr);

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
};

struct Metrics {
    double tpr = 0.0;
    double ppv = 0.0;
    double f1 = 0.0;
};

Metrics metrics_from_confusion(const Confusion& c);
Metrics classification_metrics(std::span<const int> predictions, std::span<const int> labels,
                               Confusion* confusion = nullptr);

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct EvalReport {
    double threshold = 0.0;
    double tpr = 0.0;
    double ppv = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    Confusion confusion;
    std::vector<PrPoint> pr_curve; // one point per distinct score, descending threshold
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Best-F1 threshold over the distinct scores (prediction: score >= tau),
// ties going to the higher threshold. `auc` is left at 0. Throws ConfigError
// when only one class is present.
EvalReport pr_best_f1(std::span<const double> scores, std::span<const int> labels);

// Mann-Whitney AUC with tied scores counted as one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Scores CSV: time,score,label,alarm_level,fault_prob
void write_scores_csv(std::ostream& out, const ScoreSeries& series, const std::vector<std::string>& comments = {});
ScoreSeries read_scores_csv(std::istream& in);
// Latents CSV: time,zg1..,zl1..
void write_latents_csv(std::ostream& out, const ScoreSeries& series, const std::vector<std::string>& comments = {});

} // namespace synforce
