#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace synforce {

// One telemetry sample at the 10 s cadence.
struct RawFrame {
    double timestamp = 0.0;
    int charge_status = 0;
    double speed = 0.0;
    double mileage = 0.0;
    double total_volt = 0.0;
    double total_current = 0.0;
    double soc = 0.0;
    double insulation_res = 0.0;
    std::array<double, 2> volt_extrema{}; // max, min cell voltage
    std::array<double, 2> temp_extrema{}; // max, min probe temperature
    std::vector<double> cell_volts;
    std::vector<double> probe_temps;
    int label = 0;
};

// Scalar numeric columns preceding the per-cell and per-probe blocks:
// speed, mileage, total_volt, total_current, soc, insulation_res,
// max_cell_volt, min_cell_volt, max_temp, min_temp.
inline constexpr std::size_t kScalarColumns = 10;

std::size_t numeric_column_count(std::size_t cells, std::size_t probes);
std::vector<std::string> numeric_column_names(std::size_t cells, std::size_t probes);
void numeric_values(const RawFrame& frame, std::span<double> out);

enum class FeatureGroup { center = 0, u_edge = 1, t_edge = 2 };

std::string_view to_string(FeatureGroup group);
FeatureGroup feature_group_from_string(std::string_view name);

struct GroupSpec {
    FeatureGroup group = FeatureGroup::center;
    std::vector<std::size_t> columns; // indices into the numeric layout
    double pca_variance_threshold = 0.95;
};

// Scalars to center, cell voltages to u_edge, probe temperatures to t_edge.
std::vector<GroupSpec> default_group_specs(std::size_t cells, std::size_t probes,
                                           double threshold = 0.95);

struct DenoiseParams {
    std::size_t window = 11;
    double nsigma = 3.0;
};

struct GroupModel {
    FeatureGroup group = FeatureGroup::center;
    std::vector<std::size_t> columns;
    double threshold = 0.95;
    bool charge_onehot = false; // one-hot charge_status columns appended
    std::vector<double> location;
    std::vector<double> scale;
    std::vector<double> weight;
    Eigen::VectorXd pca_mean;
    Eigen::MatrixXd components;          // width x retained, orthonormal columns
    std::vector<double> explained;       // all eigenvalues, descending
    std::size_t retained = 0;

    std::size_t width() const { return location.size(); }
};

struct PipelineModel {
    std::size_t cell_count = 0;
    std::size_t probe_count = 0;
    DenoiseParams denoise;
    double cadence = 10.0; // nominal sample spacing used for segmentation
    std::vector<int> charge_codes; // sorted distinct codes seen at fit time
    std::vector<GroupModel> groups; // center, u_edge, t_edge order
    std::vector<std::string> warnings;

    std::size_t output_dim() const;
};

// Hampel filter. Each point is compared with the median of its (edge-truncated)
// window and replaced by it when the deviation exceeds nsigma * 1.4826 * MAD.
std::vector<double> denoise_series(std::span<const double> series, std::size_t window,
                                   double nsigma);

// Indices where a new contiguous run begins: timestamps must strictly increase
// and consecutive gaps may not exceed 1.5 * cadence. The first entry is 0.
std::vector<std::size_t> segment_starts(std::span<const RawFrame> frames, double cadence = 10.0,
                                        std::size_t* gap_count = nullptr);

PipelineModel fit_pipeline(std::span<const RawFrame> frames, std::span<const GroupSpec> specs,
                           const DenoiseParams& denoise = {}, double cadence = 10.0);

struct FeatureMatrix {
    Eigen::MatrixXd values; // frames x d
    std::vector<int> labels;
    std::vector<double> timestamps;
    std::vector<std::size_t> segments;
};

FeatureMatrix apply_pipeline(const PipelineModel& model, std::span<const RawFrame> frames);

// Fixed-length windows over per-frame features, stored as (B*L) x d with the
// frames of window b in rows [b*L, (b+1)*L).
struct WindowBatch {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<std::size_t> starts;
    Eigen::MatrixXd frames;
    std::vector<int> labels;

    std::size_t size() const { return starts.size(); }
    bool empty() const { return starts.empty(); }
};

// Windows start every `stride` frames within each segment (a single segment
// when `segments` is empty). With training=true windows containing any
// anomalous frame are dropped.
WindowBatch build_windows(const Eigen::MatrixXd& features, std::span<const int> labels,
                          std::size_t length, std::size_t stride, bool training,
                          std::span<const std::size_t> segments = {});

} // namespace synforce
