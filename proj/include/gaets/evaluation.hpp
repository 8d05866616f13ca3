#pragma once

// Forecast accuracy in original units: MAE, RMSE, masked MAPE, cross-seed
// Student-t intervals, and report writers.

#include "gaets/serialization.hpp"
#include "gaets/training.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gaets {

namespace detail {
template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": prediction and truth shapes differ");
    }
    if (a.size() == 0) throw DimensionError(std::string(what) + ": empty input");
}
}  // namespace detail

template <typename A, typename B>
double mae(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth) {
    detail::require_same_shape(pred, truth, "mae");
    return (pred - truth).array().abs().mean();
}

template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth) {
    detail::require_same_shape(pred, truth, "rmse");
    return std::sqrt((pred - truth).array().square().mean());
}

struct MapeResult {
    std::optional<double> value;  // percent; empty when every entry is masked
    Index masked = 0;
};

/// Mean of |pred - truth| / |truth| * 100 over entries with |truth| > threshold.
template <typename A, typename B>
MapeResult mape(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& truth, double threshold) {
    detail::require_same_shape(pred, truth, "mape");
    double acc = 0.0;
    Index used = 0;
    MapeResult r;
    for (Index c = 0; c < truth.cols(); ++c) {
        for (Index i = 0; i < truth.rows(); ++i) {
            const double t = truth(i, c);
            if (std::abs(t) > threshold) {
                acc += std::abs(pred(i, c) - t) / std::abs(t);
                ++used;
            } else {
                ++r.masked;
            }
        }
    }
    if (used > 0) r.value = 100.0 * acc / static_cast<double>(used);
    return r;
}

struct MetricTriple {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape;
    Index mape_masked = 0;
};

/// Metrics pooled over a list of n x tau forecasts. `thresholds` gives the
/// MAPE mask threshold per variable (row).
MetricTriple compute_metrics(const std::vector<Matrix>& predictions, const std::vector<Matrix>& truths,
                             const Vector& thresholds);

struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

struct SeedEntry {
    std::uint64_t seed = 0;
    Index horizon = 0;
    MetricTriple metrics;
};

struct AggregateEntry {
    std::size_t seeds = 0;
    Interval mae;
    Interval rmse;
    std::optional<Interval> mape;
};

struct MetricsReport {
    std::string mode;
    std::map<Index, MetricTriple> per_horizon;
    std::vector<SeedEntry> per_seed;
    std::map<Index, AggregateEntry> aggregate;
};

/// p-quantile of Student's t distribution with `dof` degrees of freedom.
double student_t_quantile(double p, double dof);

/// Mean and 95% Student-t half-width with S - 1 degrees of freedom.
Interval t_interval(const std::vector<double>& values);

struct EvalOptions {
    double mape_threshold_fraction = 1e-3;  // of each variable's training std
    int batch_size = 64;
    int mc_samples = 0;  // > 0: also evaluate under sampled graphs
    std::uint64_t mc_seed = 0;
};

struct EvalOutput {
    MetricsReport report;
    std::vector<Matrix> predictions;  // denormalised, n x tau per window
    std::vector<Matrix> truths;
    std::vector<MetricTriple> mc_metrics;  // one per sampled graph
};

/// Forecasts every window of `data` (normalised) with the checkpoint under the
/// thresholded graph and scores it in original units.
EvalOutput evaluate(const Checkpoint& ckpt, const WindowedDataset& data, const EvalOptions& options = {});

/// Merges single-seed reports and adds Student-t intervals per horizon.
MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports);

nlohmann::json report_to_json(const MetricsReport& report);
void write_report_json(const std::filesystem::path& path, const MetricsReport& report);
/// One row per (mode, horizon, seed) plus aggregate rows with seed "mean".
void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);

/// Plot-ready dump: window, variable, step, truth, prediction.
void write_forecast_dump(const std::filesystem::path& path, const EvalOutput& output,
                         const std::vector<std::string>& var_names, std::size_t every = 1);

}  // namespace gaets
