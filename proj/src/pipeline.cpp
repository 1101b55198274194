#include "synforce/pipeline.hpp"

#include "synforce/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace synforce {

namespace {

constexpr double kMadToSigma = 1.4826;

double median_of(std::vector<double>& values)
{
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

// Median and MAD of a sample.
std::pair<double, double> median_mad(std::vector<double> values)
{
    const double med = median_of(values);
    for (double& v : values) v = std::abs(v - med);
    return {med, median_of(values)};
}

// Numeric columns of every frame, denoised within each contiguous segment.
Eigen::MatrixXd denoised_numeric(std::span<const RawFrame> frames, std::size_t width,
                                 const std::vector<std::size_t>& segments, const DenoiseParams& dn)
{
    const std::size_t n = frames.size();
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    std::vector<double> row(width);
    for (std::size_t i = 0; i < n; ++i) {
        numeric_values(frames[i], row);
        for (std::size_t j = 0; j < width; ++j) raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    Eigen::MatrixXd out = raw;
    std::vector<double> series;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const std::size_t begin = segments[s];
        const std::size_t end = s + 1 < segments.size() ? segments[s + 1] : n;
        for (std::size_t j = 0; j < width; ++j) {
            series.resize(end - begin);
            for (std::size_t i = begin; i < end; ++i) series[i - begin] = raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            const auto filtered = denoise_series(series, dn.window, dn.nsigma);
            for (std::size_t i = begin; i < end; ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = filtered[i - begin];
        }
    }
    return out;
}

// Raw group matrix: selected numeric columns plus one-hot charge codes.
Eigen::MatrixXd group_raw(const Eigen::MatrixXd& numeric, std::span<const RawFrame> frames,
                          const std::vector<std::size_t>& columns, bool onehot,
                          const std::vector<int>& codes)
{
    const Eigen::Index n = numeric.rows();
    const std::size_t width = columns.size() + (onehot ? codes.size() : 0);
    Eigen::MatrixXd g(n, static_cast<Eigen::Index>(width));
    for (std::size_t j = 0; j < columns.size(); ++j) g.col(static_cast<Eigen::Index>(j)) = numeric.col(static_cast<Eigen::Index>(columns[j]));
    if (onehot) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < codes.size(); ++c) {
                g(i, static_cast<Eigen::Index>(columns.size() + c)) =
                    frames[static_cast<std::size_t>(i)].charge_status == codes[c] ? 1.0 : 0.0;
            }
        }
    }
    return g;
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw, const GroupModel& gm)
{
    Eigen::MatrixXd x(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const auto jj = static_cast<std::size_t>(j);
        x.col(j) = ((raw.col(j).array() - gm.location[jj]) / gm.scale[jj]) * gm.weight[jj];
    }
    return x;
}

void check_frame_schema(const RawFrame& f, std::size_t cells, std::size_t probes)
{
    if (f.cell_volts.size() != cells || f.probe_temps.size() != probes) {
        throw SchemaError("frame has " + std::to_string(f.cell_volts.size()) + " cells / " +
                          std::to_string(f.probe_temps.size()) + " probes, expected " +
                          std::to_string(cells) + " / " + std::to_string(probes));
    }
}

} // namespace

std::size_t numeric_column_count(std::size_t cells, std::size_t probes)
{
    return kScalarColumns + cells + probes;
}

std::vector<std::string> numeric_column_names(std::size_t cells, std::size_t probes)
{
    std::vector<std::string> names = {"speed",          "mileage",       "total_volt",    "total_current",
                                      "soc",            "insulation_res", "max_cell_volt", "min_cell_volt",
                                      "max_temp",       "min_temp"};
    char buf[48];
    for (std::size_t c = 0; c < cells; ++c) {
        std::snprintf(buf, sizeof buf, "cell_volt_%03zu", c + 1);
        names.emplace_back(buf);
    }
    for (std::size_t p = 0; p < probes; ++p) {
        std::snprintf(buf, sizeof buf, "temp_probe_%03zu", p + 1);
        names.emplace_back(buf);
    }
    return names;
}

void numeric_values(const RawFrame& f, std::span<double> out)
{
    const std::size_t width = numeric_column_count(f.cell_volts.size(), f.probe_temps.size());
    if (out.size() != width) throw ShapeError("numeric_values: output span has wrong width");
    out[0] = f.speed;
    out[1] = f.mileage;
    out[2] = f.total_volt;
    out[3] = f.total_current;
    out[4] = f.soc;
    out[5] = f.insulation_res;
    out[6] = f.volt_extrema[0];
    out[7] = f.volt_extrema[1];
    out[8] = f.temp_extrema[0];
    out[9] = f.temp_extrema[1];
    std::copy(f.cell_volts.begin(), f.cell_volts.end(), out.begin() + kScalarColumns);
    std::copy(f.probe_temps.begin(), f.probe_temps.end(),
              out.begin() + static_cast<std::ptrdiff_t>(kScalarColumns + f.cell_volts.size()));
}

std::string_view to_string(FeatureGroup group)
{
    switch (group) {
    case FeatureGroup::center: return "center";
    case FeatureGroup::u_edge: return "u_edge";
    case FeatureGroup::t_edge: return "t_edge";
    }
    return "center";
}

FeatureGroup feature_group_from_string(std::string_view name)
{
    if (name == "center") return FeatureGroup::center;
    if (name == "u_edge") return FeatureGroup::u_edge;
    if (name == "t_edge") return FeatureGroup::t_edge;
    throw ConfigError("unknown feature group '" + std::string(name) + "'");
}

std::vector<GroupSpec> default_group_specs(std::size_t cells, std::size_t probes, double threshold)
{
    GroupSpec center{FeatureGroup::center, {}, threshold};
    GroupSpec u_edge{FeatureGroup::u_edge, {}, threshold};
    GroupSpec t_edge{FeatureGroup::t_edge, {}, threshold};
    for (std::size_t j = 0; j < kScalarColumns; ++j) center.columns.push_back(j);
    for (std::size_t c = 0; c < cells; ++c) u_edge.columns.push_back(kScalarColumns + c);
    for (std::size_t p = 0; p < probes; ++p) t_edge.columns.push_back(kScalarColumns + cells + p);
    return {center, u_edge, t_edge};
}

std::size_t PipelineModel::output_dim() const
{
    std::size_t d = 0;
    for (const auto& g : groups) d += g.retained;
    return d;
}

std::vector<double> denoise_series(std::span<const double> series, std::size_t window, double nsigma)
{
    if (window < 3 || window % 2 == 0) {
        throw ConfigError("denoise window must be odd and >= 3, got " + std::to_string(window));
    }
    if (series.empty()) throw ConfigError("denoise_series: empty series");
    const std::size_t n = series.size();
    const std::size_t half = window / 2;
    std::vector<double> out(series.begin(), series.end());
    std::vector<double> buf;
    buf.reserve(window);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        buf.assign(series.begin() + static_cast<std::ptrdiff_t>(lo), series.begin() + static_cast<std::ptrdiff_t>(hi));
        const auto [med, mad] = median_mad(buf);
        if (std::abs(series[i] - med) > nsigma * kMadToSigma * mad) out[i] = med;
    }
    return out;
}

std::vector<std::size_t> segment_starts(std::span<const RawFrame> frames, double cadence, std::size_t* gap_count)
{
    std::vector<std::size_t> starts;
    std::size_t gaps = 0;
    if (!frames.empty()) starts.push_back(0);
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const double dt = frames[i].timestamp - frames[i - 1].timestamp;
        if (dt <= 0.0) {
            starts.push_back(i);
        } else if (dt > 1.5 * cadence) {
            ++gaps;
            starts.push_back(i);
        }
    }
    if (gap_count) *gap_count = gaps;
    return starts;
}

PipelineModel fit_pipeline(std::span<const RawFrame> frames, std::span<const GroupSpec> specs,
                           const DenoiseParams& denoise, double cadence)
{
    if (frames.size() < 2) throw ConfigError("fit_pipeline needs at least 2 frames");
    if (!(cadence > 0.0) || !std::isfinite(cadence)) throw ConfigError("cadence must be positive");
    if (denoise.window < 3 || denoise.window % 2 == 0) throw ConfigError("denoise window must be odd and >= 3");

    PipelineModel model;
    model.cadence = cadence;
    model.cell_count = frames.front().cell_volts.size();
    model.probe_count = frames.front().probe_temps.size();
    model.denoise = denoise;
    for (const auto& f : frames) check_frame_schema(f, model.cell_count, model.probe_count);
    const std::size_t width = numeric_column_count(model.cell_count, model.probe_count);

    // The groups must partition the numeric columns.
    std::vector<int> owner(width, -1);
    for (const auto& spec : specs) {
        if (spec.columns.empty()) throw ConfigError("feature group '" + std::string(to_string(spec.group)) + "' is empty");
        if (!(spec.pca_variance_threshold > 0.0 && spec.pca_variance_threshold <= 1.0)) {
            throw ConfigError("pca_variance_threshold must lie in (0, 1]");
        }
        for (std::size_t c : spec.columns) {
            if (c >= width) throw ConfigError("group column index out of range");
            if (owner[c] != -1) throw ConfigError("column " + std::to_string(c) + " assigned to two groups");
            owner[c] = static_cast<int>(spec.group);
        }
    }
    for (std::size_t c = 0; c < width; ++c) {
        if (owner[c] == -1) throw ConfigError("column " + std::to_string(c) + " not assigned to any group");
    }
    std::vector<const GroupSpec*> ordered;
    for (FeatureGroup g : {FeatureGroup::center, FeatureGroup::u_edge, FeatureGroup::t_edge}) {
        const GroupSpec* found = nullptr;
        for (const auto& spec : specs) {
            if (spec.group == g) {
                if (found) throw ConfigError("duplicate feature group '" + std::string(to_string(g)) + "'");
                found = &spec;
            }
        }
        if (!found) throw ConfigError("feature group '" + std::string(to_string(g)) + "' missing");
        ordered.push_back(found);
    }

    std::vector<std::size_t> normal_rows;
    std::set<int> codes;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].label == 0) {
            normal_rows.push_back(i);
            codes.insert(frames[i].charge_status);
        }
    }
    if (normal_rows.size() < 2) throw ConfigError("fit_pipeline needs at least 2 normal frames");
    model.charge_codes.assign(codes.begin(), codes.end());

    const auto segments = segment_starts(frames, model.cadence);
    const Eigen::MatrixXd numeric = denoised_numeric(frames, width, segments, denoise);
    const Eigen::Index n0 = static_cast<Eigen::Index>(normal_rows.size());

    for (const GroupSpec* spec : ordered) {
        GroupModel gm;
        gm.group = spec->group;
        gm.columns = spec->columns;
        gm.threshold = spec->pca_variance_threshold;
        gm.charge_onehot = spec->group == FeatureGroup::center;
        const Eigen::MatrixXd all = group_raw(numeric, frames, gm.columns, gm.charge_onehot, model.charge_codes);
        Eigen::MatrixXd raw(n0, all.cols());
        for (Eigen::Index r = 0; r < n0; ++r) raw.row(r) = all.row(static_cast<Eigen::Index>(normal_rows[static_cast<std::size_t>(r)]));

        const auto w = static_cast<std::size_t>(raw.cols());
        gm.location.resize(w);
        gm.scale.resize(w);
        gm.weight.resize(w);
        std::vector<double> variance(w);
        for (std::size_t j = 0; j < w; ++j) {
            const auto col = raw.col(static_cast<Eigen::Index>(j));
            const auto [med, mad] = median_mad(std::vector<double>(col.data(), col.data() + col.size()));
            const double scale = kMadToSigma * mad;
            gm.location[j] = med;
            variance[j] = scale * scale;
            if (scale > 0.0) {
                gm.scale[j] = scale;
            } else {
                gm.scale[j] = 1.0;
                model.warnings.push_back("zero MAD in group " + std::string(to_string(gm.group)) + " column " +
                                         std::to_string(j) + "; scale clamped to 1");
            }
        }
        const double total_variance = std::accumulate(variance.begin(), variance.end(), 0.0);
        for (std::size_t j = 0; j < w; ++j) {
            gm.weight[j] = total_variance > 0.0 ? variance[j] / total_variance : 1.0 / static_cast<double>(w);
        }

        const Eigen::MatrixXd x = standardize(raw, gm);
        gm.pca_mean = x.colwise().mean().transpose();
        const Eigen::MatrixXd centered = x.rowwise() - gm.pca_mean.transpose();
        const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n0 - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        const Eigen::Index k = cov.rows();
        Eigen::MatrixXd vectors(k, k);
        gm.explained.resize(static_cast<std::size_t>(k));
        for (Eigen::Index i = 0; i < k; ++i) {
            // Eigen sorts ascending.
            const Eigen::Index src = k - 1 - i;
            gm.explained[static_cast<std::size_t>(i)] = std::max(0.0, eig.eigenvalues()(src));
            Eigen::VectorXd v = eig.eigenvectors().col(src);
            Eigen::Index pivot = 0;
            v.cwiseAbs().maxCoeff(&pivot);
            if (v(pivot) < 0.0) v = -v;
            vectors.col(i) = v;
        }
        const double total = std::accumulate(gm.explained.begin(), gm.explained.end(), 0.0);
        if (total <= 0.0) {
            gm.retained = 1;
            model.warnings.push_back("group " + std::string(to_string(gm.group)) + " has zero variance");
        } else {
            double cumulative = 0.0;
            gm.retained = gm.explained.size();
            for (std::size_t i = 0; i < gm.explained.size(); ++i) {
                cumulative += gm.explained[i];
                if (cumulative / total >= gm.threshold) {
                    gm.retained = i + 1;
                    break;
                }
            }
        }
        gm.components = vectors.leftCols(static_cast<Eigen::Index>(gm.retained));
        model.groups.push_back(std::move(gm));
    }
    return model;
}

FeatureMatrix apply_pipeline(const PipelineModel& model, std::span<const RawFrame> frames)
{
    FeatureMatrix out;
    const std::size_t width = numeric_column_count(model.cell_count, model.probe_count);
    for (const auto& f : frames) check_frame_schema(f, model.cell_count, model.probe_count);
    out.segments = segment_starts(frames, model.cadence);
    out.labels.reserve(frames.size());
    out.timestamps.reserve(frames.size());
    std::vector<double> row(width);
    for (const auto& f : frames) {
        numeric_values(f, row);
        for (double v : row) {
            if (!std::isfinite(v)) throw InputError("non-finite value in frame at t=" + std::to_string(f.timestamp));
        }
        out.labels.push_back(f.label);
        out.timestamps.push_back(f.timestamp);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(frames.size());
    out.values.resize(n, static_cast<Eigen::Index>(model.output_dim()));
    if (frames.empty()) return out;

    const Eigen::MatrixXd numeric = denoised_numeric(frames, width, out.segments, model.denoise);
    Eigen::Index offset = 0;
    for (const auto& gm : model.groups) {
        const Eigen::MatrixXd raw = group_raw(numeric, frames, gm.columns, gm.charge_onehot, model.charge_codes);
        if (static_cast<std::size_t>(raw.cols()) != gm.width()) throw SchemaError("group width mismatch");
        const Eigen::MatrixXd x = standardize(raw, gm);
        const auto r = static_cast<Eigen::Index>(gm.retained);
        out.values.middleCols(offset, r) = (x.rowwise() - gm.pca_mean.transpose()) * gm.components;
        offset += r;
    }
    return out;
}

WindowBatch build_windows(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t length,
                          std::size_t stride, bool training, std::span<const std::size_t> segments)
{
    if (length == 0) throw ConfigError("window length must be positive");
    if (stride == 0) throw ConfigError("window stride must be positive");
    const std::size_t n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n) throw ShapeError("labels and features disagree in length");

    WindowBatch batch;
    batch.length = length;
    batch.dim = static_cast<std::size_t>(features.cols());

    std::vector<std::size_t> seg(segments.begin(), segments.end());
    if (seg.empty()) seg.push_back(0);
    // Prefix sums of labels for O(1) window checks.
    std::vector<std::size_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (labels[i] != 0 ? 1 : 0);

    for (std::size_t s = 0; s < seg.size(); ++s) {
        const std::size_t begin = seg[s];
        const std::size_t end = s + 1 < seg.size() ? seg[s + 1] : n;
        if (end < begin + length) continue;
        for (std::size_t start = begin; start + length <= end; start += stride) {
            if (training && prefix[start + length] != prefix[start]) continue;
            batch.starts.push_back(start);
        }
    }
    const auto rows = static_cast<Eigen::Index>(batch.starts.size() * length);
    batch.frames.resize(rows, features.cols());
    batch.labels.resize(static_cast<std::size_t>(rows));
    for (std::size_t b = 0; b < batch.starts.size(); ++b) {
        const auto dst = static_cast<Eigen::Index>(b * length);
        batch.frames.middleRows(dst, static_cast<Eigen::Index>(length)) =
            features.middleRows(static_cast<Eigen::Index>(batch.starts[b]), static_cast<Eigen::Index>(length));
        for (std::size_t t = 0; t < length; ++t) batch.labels[b * length + t] = labels[batch.starts[b] + t];
    }
    return batch;
}

} // namespace synforce
