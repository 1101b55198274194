#include "synforce/evalscore.hpp"

#include "synforce/checkpoint.hpp"
#include "synforce/errors.hpp"
#include "synforce/rng.hpp"
#include "synforce/telemetry_csv.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace synforce {

namespace {

constexpr Eigen::Index kScoreChunk = 8192;

void count_classes(std::span<const int> labels, std::size_t& pos, std::size_t& neg)
{
    pos = 0;
    neg = 0;
    for (int y : labels) (y != 0 ? pos : neg) += 1;
}

} // namespace

std::vector<double> anomaly_scores(const ModelParams& params, const Eigen::VectorXd& centre,
                                   const Eigen::MatrixXd& features)
{
    if (centre.size() != static_cast<Eigen::Index>(params.global_dim)) {
        throw ShapeError("anomaly_scores: centre dimension differs from the global head");
    }
    std::vector<double> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index r0 = 0; r0 < features.rows(); r0 += kScoreChunk) {
        const Eigen::Index n = std::min(kScoreChunk, features.rows() - r0);
        const Eigen::MatrixXd zg = encode_global(params, features.middleRows(r0, n));
        for (Eigen::Index i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(r0 + i)] = (zg.row(i).transpose() - centre).norm();
        }
    }
    return out;
}

ScoreSeries score_features(const ModelParams& params, const Eigen::VectorXd& centre, const FeatureMatrix& features,
                           const std::optional<AlarmConfig>& alarm, bool keep_latents)
{
    ScoreSeries s;
    s.timestamps = features.timestamps;
    s.labels = features.labels;
    if (keep_latents) {
        const Encoded e = encode_batch(params, features.values);
        s.global = e.global;
        s.local = e.local;
        s.scores.resize(static_cast<std::size_t>(e.global.rows()));
        for (Eigen::Index i = 0; i < e.global.rows(); ++i) {
            s.scores[static_cast<std::size_t>(i)] = (e.global.row(i).transpose() - centre).norm();
        }
    } else {
        s.scores = anomaly_scores(params, centre, features.values);
    }
    s.alarm_levels.assign(s.scores.size(), 0);
    s.fault_probability.assign(s.scores.size(), 0.0);
    if (alarm) {
        for (std::size_t i = 0; i < s.scores.size(); ++i) {
            s.alarm_levels[i] = alarm_level(s.scores[i], *alarm);
            s.fault_probability[i] = fault_probability(s.scores[i], *alarm);
        }
    }
    return s;
}

ScoreSeries score_frames(const Checkpoint& checkpoint, std::span<const RawFrame> frames, bool keep_latents)
{
    const PipelineModel& pipe = checkpoint.pipeline;
    for (const RawFrame& f : frames) {
        if (f.cell_volts.size() != pipe.cell_count || f.probe_temps.size() != pipe.probe_count) {
            throw SchemaError("frames have " + std::to_string(f.cell_volts.size()) + " cells / " +
                              std::to_string(f.probe_temps.size()) + " probes, checkpoint expects " +
                              std::to_string(pipe.cell_count) + " / " + std::to_string(pipe.probe_count));
        }
    }
    const FeatureMatrix features = apply_pipeline(pipe, frames);
    if (features.values.cols() != static_cast<Eigen::Index>(checkpoint.model.params.input_dim)) {
        throw SchemaError("pipeline output width differs from the encoder input");
    }
    return score_features(checkpoint.model.params, checkpoint.model.centre, features, checkpoint.alarm, keep_latents);
}

double quantile_sorted(std::span<const double> sorted, double q)
{
    if (sorted.empty()) throw ConfigError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

AlarmConfig alarm_levels(std::span<const double> train_scores)
{
    return alarm_levels(train_scores, AlarmConfig{}.quantiles);
}

AlarmConfig alarm_levels(std::span<const double> train_scores, const std::array<double, 3>& quantiles)
{
    for (std::size_t i = 0; i < 3; ++i) {
        if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0) || (i > 0 && !(quantiles[i] > quantiles[i - 1]))) {
            throw ConfigError("alarm quantiles must be strictly increasing inside (0, 1)");
        }
    }
    if (train_scores.size() < 100) {
        throw ConfigError("alarm_levels needs at least 100 training scores, got " +
                          std::to_string(train_scores.size()));
    }
    std::vector<double> sorted(train_scores.begin(), train_scores.end());
    for (double v : sorted) {
        if (!std::isfinite(v)) throw InputError("alarm_levels: non-finite training score");
    }
    std::sort(sorted.begin(), sorted.end());
    AlarmConfig a;
    a.quantiles = quantiles;
    for (std::size_t i = 0; i < 3; ++i) a.thresholds[i] = quantile_sorted(sorted, a.quantiles[i]);
    a.degenerate = !(a.thresholds[0] < a.thresholds[1] && a.thresholds[1] < a.thresholds[2]);
    a.prob_scale = std::max((a.thresholds[2] - a.thresholds[0]) / 4.0, 1e-9);
    return a;
}

int alarm_level(double score, const AlarmConfig& alarm)
{
    int level = 0;
    for (double t : alarm.thresholds) {
        if (score >= t) ++level;
    }
    return level;
}

double fault_probability(double score, const AlarmConfig& alarm)
{
    const double t1 = alarm.thresholds[0];
    if (!(score >= t1)) return 0.0;
    const double scale = std::max(alarm.prob_scale, 1e-9);
    return 1.0 / (1.0 + std::exp(-(score - t1) / scale));
}

std::vector<std::size_t> balanced_eval_set(std::span<const int> labels, std::uint64_t seed,
                                           std::vector<std::string>* warnings)
{
    std::vector<std::size_t> anomalies;
    std::vector<std::size_t> normals;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] != 0 ? anomalies : normals).push_back(i);
    if (anomalies.empty()) throw ConfigError("balanced evaluation needs at least one anomalous frame");

    std::vector<std::size_t> out = anomalies;
    if (normals.size() <= anomalies.size()) {
        if (normals.size() < anomalies.size() && warnings) {
            warnings->push_back("only " + std::to_string(normals.size()) + " normal frames for " +
                                std::to_string(anomalies.size()) + " anomalies; using all normals");
        }
        out.insert(out.end(), normals.begin(), normals.end());
    } else {
        // Partial Fisher-Yates: the first k slots are a uniform sample without replacement.
        Rng rng(derive_seed(seed, "balanced-sample"));
        const std::size_t k = anomalies.size();
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + rng.index(normals.size() - i);
            std::swap(normals[i], normals[j]);
        }
        out.insert(out.end(), normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(k));
    }
    std::sort(out.begin(), out.end());
    return out;
}

Metrics metrics_from_confusion(const Confusion& c)
{
    Metrics m;
    const double tp = static_cast<double>(c.tp);
    if (c.tp + c.fn > 0) m.tpr = tp / static_cast<double>(c.tp + c.fn);
    if (c.tp + c.fp > 0) m.ppv = tp / static_cast<double>(c.tp + c.fp);
    if (m.tpr + m.ppv > 0.0) m.f1 = 2.0 * m.ppv * m.tpr / (m.ppv + m.tpr);
    return m;
}

Metrics classification_metrics(std::span<const int> predictions, std::span<const int> labels, Confusion* confusion)
{
    if (predictions.size() != labels.size()) throw ShapeError("classification_metrics: size mismatch");
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] != 0;
        const bool y = labels[i] != 0;
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    if (confusion) *confusion = c;
    return metrics_from_confusion(c);
}

EvalReport pr_best_f1(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) throw ShapeError("pr_best_f1: size mismatch");
    EvalReport r;
    count_classes(labels, r.positives, r.negatives);
    if (r.positives == 0 || r.negatives == 0) throw ConfigError("pr_best_f1 needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    Confusion c;
    c.fn = r.positives;
    c.tn = r.negatives;
    double best = -1.0;
    for (std::size_t i = 0; i < order.size();) {
        const double tau = scores[order[i]];
        // Every frame with this score becomes positive together.
        for (; i < order.size() && scores[order[i]] == tau; ++i) {
            if (labels[order[i]] != 0) {
                ++c.tp;
                --c.fn;
            } else {
                ++c.fp;
                --c.tn;
            }
        }
        const Metrics m = metrics_from_confusion(c);
        r.pr_curve.push_back({tau, m.ppv, m.tpr, m.f1});
        if (m.f1 > best) {
            best = m.f1;
            r.threshold = tau;
            r.tpr = m.tpr;
            r.ppv = m.ppv;
            r.f1 = m.f1;
            r.confusion = c;
        }
    }
    return r;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) throw ShapeError("roc_auc: size mismatch");
    std::size_t pos = 0;
    std::size_t neg = 0;
    count_classes(labels, pos, neg);
    if (pos == 0 || neg == 0) throw ConfigError("roc_auc needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the rank sum keeps tied (half-integer) ranks exact.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t tied_pos = 0;
        for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) tied_pos += labels[order[j]] != 0;
        // Ranks i+1..j average to (i+1+j)/2.
        twice_rank_sum += static_cast<std::uint64_t>(tied_pos) * (i + 1 + j);
        i = j;
    }
    const double u = static_cast<double>(twice_rank_sum) / 2.0 -
                     static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

void write_scores_csv(std::ostream& out, const ScoreSeries& s, const std::vector<std::string>& comments)
{
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "time,score,label,alarm_level,fault_prob\n";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << format_time(s.timestamps[i]) << ',' << format_number(s.scores[i], 17) << ','
            << (i < s.labels.size() ? s.labels[i] : 0) << ',' << s.alarm_levels[i] << ','
            << format_number(s.fault_probability[i], 17) << '\n';
    }
}

ScoreSeries read_scores_csv(std::istream& in)
{
    ScoreSeries s;
    std::string line;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line.rfind("time,score,label", 0) != 0) throw SchemaError("scores CSV must start with time,score,label");
            header = true;
            continue;
        }
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() < 3) throw SchemaError("scores CSV line " + std::to_string(line_no) + " is too short");
        try {
            s.timestamps.push_back(std::stod(cols[0]));
            s.scores.push_back(std::stod(cols[1]));
            s.labels.push_back(std::stoi(cols[2]));
            s.alarm_levels.push_back(cols.size() > 3 ? std::stoi(cols[3]) : 0);
            s.fault_probability.push_back(cols.size() > 4 ? std::stod(cols[4]) : 0.0);
        } catch (const std::exception&) {
            throw SchemaError("scores CSV line " + std::to_string(line_no) + " is not numeric");
        }
        if (!std::isfinite(s.scores.back())) {
            throw SchemaError("scores CSV line " + std::to_string(line_no) + " has a non-finite score");
        }
    }
    if (!header) throw SchemaError("scores CSV has no header row");
    return s;
}

void write_latents_csv(std::ostream& out, const ScoreSeries& s, const std::vector<std::string>& comments)
{
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "time";
    for (Eigen::Index j = 0; j < s.global.cols(); ++j) out << ",zg" << j + 1;
    for (Eigen::Index j = 0; j < s.local.cols(); ++j) out << ",zl" << j + 1;
    out << '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out << format_time(s.timestamps[i]);
        for (Eigen::Index j = 0; j < s.global.cols(); ++j) out << ',' << format_number(s.global(r, j), 17);
        for (Eigen::Index j = 0; j < s.local.cols(); ++j) out << ',' << format_number(s.local(r, j), 17);
        out << '\n';
    }
}

} // namespace synforce
