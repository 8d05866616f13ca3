#pragma once

// Measurement logs, z-scoring and sliding-window datasets.
//
// A RawSeries stores variables as rows (n_vars x L). Several logs can be
// concatenated in time; `segment_lengths` records the pieces so that windows
// never straddle a file boundary.

#include "gaets/parameters.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gaets {

struct RawSeries {
    Matrix values;                       // n_vars x L
    std::vector<std::string> var_names;  // n_vars unique labels
    double timestep = 1.0;               // seconds between samples, metadata only
    std::vector<Index> segment_lengths;  // sums to L; empty means one segment

    Index n_vars() const { return values.rows(); }
    Index length() const { return values.cols(); }
    std::vector<Index> segments() const;

    /// Throws DataError when an invariant is violated (n_vars >= 2, finite
    /// entries, unique names, consistent segment lengths).
    void validate() const;
};

/// Per-variable mean and population standard deviation (divide by L).
struct NormStats {
    Vector mean;
    Vector std;
};

/// Reads a comma-separated file with a header row. With an empty schema every
/// column is loaded in file order; otherwise rows follow the schema order.
RawSeries load_csv(const std::filesystem::path& path, const std::vector<std::string>& schema = {});

/// Loads several logs and concatenates them in time, in the order given.
RawSeries load_csv_files(const std::vector<std::filesystem::path>& paths, const std::vector<std::string>& schema = {});

void write_csv(const std::filesystem::path& path, const RawSeries& series);

/// Statistics over all columns of `series`. Throws DegenerateVariableError
/// naming the first zero-variance variable.
NormStats compute_norm_stats(const RawSeries& series);
RawSeries apply_norm(const RawSeries& series, const NormStats& stats);
RawSeries denormalize(const RawSeries& series, const NormStats& stats);

/// z-scores each variable with its own statistics.
std::pair<RawSeries, NormStats> normalize(const RawSeries& series);

/// Trailing moving average of width k applied per segment (the first k - 1
/// samples of a segment average over what is available).
RawSeries moving_average(const RawSeries& series, Index k);

struct WindowedDataset {
    std::vector<Matrix> inputs;   // each n_vars x T
    std::vector<Matrix> targets;  // each n_vars x tau
    std::vector<Index> starts;    // column of the source series where input i begins
    std::vector<int> segment;     // source segment of sample i
    Index input_horizon = 0;
    Index horizon = 0;
    Index stride = 1;
    bool too_short = false;  // set when some segment could not hold a single window

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }
    WindowedDataset subset(std::size_t begin, std::size_t end) const;
};

/// Number of windows for one segment of length L.
Index window_count(Index length, Index input_horizon, Index horizon, Index stride);

/// Sample i covers columns [i*stride, i*stride + T) as input and the next tau
/// columns as target, restarting at every segment boundary.
WindowedDataset make_windows(const RawSeries& series, Index input_horizon, Index horizon, Index stride = 1);

enum class SplitMode { chronological, by_cycle };

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    SplitMode mode = SplitMode::chronological;
};

struct DatasetSplits {
    WindowedDataset train;
    WindowedDataset val;
    WindowedDataset test;
};

/// Chronological: first round(f_train N) samples, then round(f_val N), rest to
/// test. By cycle: whole segments are assigned in order until each split's
/// share of samples is reached.
DatasetSplits split(const WindowedDataset& dataset, const SplitSpec& spec);

// Dataset cache: JSON document with a version tag, shapes, normalisation
// statistics and the windows themselves.
inline constexpr int kDatasetCacheVersion = 1;

void save_dataset_cache(const std::filesystem::path& path, const DatasetSplits& splits, const NormStats& stats,
                        const std::vector<std::string>& var_names);

struct DatasetCache {
    DatasetSplits splits;
    NormStats stats;
    std::vector<std::string> var_names;
};

DatasetCache load_dataset_cache(const std::filesystem::path& path);

}  // namespace gaets
