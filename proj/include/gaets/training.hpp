#pragma once

// Joint objective (forecasting loss + SEM reconstruction regulariser), the
// training loop, checkpoints and the finite-difference gradient check.

#include "gaets/diffusion_recurrent.hpp"
#include "gaets/graph_autoencoder.hpp"
#include "gaets/structure_learner.hpp"
#include "gaets/timeseries_data.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gaets {

enum class Mode { gaets, gts };
enum class BaseLossKind { l1, l2 };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::vector<int> lr_milestones{20, 30};
    double lr_decay = 0.1;
    double max_grad_norm = 5.0;
    double adam_epsilon = 1e-3;
    std::uint64_t seed = 1;
    Mode mode = Mode::gaets;
    Index input_horizon = 80;
    Index horizon = 40;
    double temperature = 0.5;
    bool scheduled_sampling = true;
    double ss_decay = 2000.0;  // inverse-sigmoid decay constant, in steps
    Index order = 2;           // diffusion degree K
    Index hidden = 64;
    Index num_layers = 1;
    Index d_embed = 64;
    Index link_hidden = 64;
    Index d_sem = 32;
    Index sem_hidden = 32;
    ConvSpec conv;
    double ae_weight = 1.0;  // extension knob; 1 reproduces the plain sum
    BaseLossKind base_loss = BaseLossKind::l1;
    bool shuffle = true;

    void validate() const;
};

/// All trainable state of one run.
struct Model {
    TrainConfig config;
    Index n_vars = 0;
    ParameterSet params;
    StructureLearner structure;
    SemParams sem;
    Seq2SeqForecaster forecaster;
};

/// Builds and initialises every parameter from config.seed.
Model make_model(const TrainConfig& config, Index n_vars);

struct LossBreakdown {
    double base = 0.0;
    double autoencoder = 0.0;
    double total = 0.0;
};

/// (1/tau) sum_t mean over nodes and batch of |pred - truth| (l1) or of the
/// squared deviation (l2). Shapes must match.
double base_loss(const Matrix& pred, const Matrix& truth, BaseLossKind kind = BaseLossKind::l1);

/// Per-step random draws, fixed up front so a step can be replayed exactly.
struct StepNoise {
    Matrix gumbel;              // n x n logistic noise (g1 - g0)
    std::vector<char> teacher;  // decoder teacher-forcing flags, length tau
};

struct StepOptions {
    bool straight_through = true;  // false: forward uses the relaxed sample
    bool compute_gradients = true;
    const Matrix* logits_override = nullptr;  // bypass encoder + link predictor
};

struct StepResult {
    LossBreakdown loss;
    std::vector<Matrix> gradients;  // per parameter, empty when not requested
    Matrix logits_gradient;         // only with logits_override
    Matrix logits;
    AdjacencySample adjacency;
    Matrix prediction;  // tau x (n * B)
};

/// One evaluation of the joint objective on a packed batch. The same adjacency
/// sample drives the forecaster and the SEM term.
StepResult run_step(const Model& model, const Matrix& encoder_series, const Matrix& inputs, const Matrix& targets,
                    const StepNoise& noise, const StepOptions& options = {});

/// Joint objective for a batch under a given adjacency (no gradients).
LossBreakdown total_loss(const Model& model, const Matrix& inputs, const Matrix& targets, const Matrix& adjacency);

/// Probability of feeding ground truth to the decoder at global step `step`.
double teacher_probability(double decay, std::int64_t step);

struct Checkpoint {
    TrainConfig config;
    Index n_vars = 0;
    std::vector<std::string> var_names;
    NormStats stats;
    ParameterSet params;
    Matrix logits;  // edge logits from the checkpointed parameters
    int epoch = -1;  // -1: never trained
    double val_base = 0.0;
    std::string config_hash;
};

/// Rebuilds a Model with the checkpoint's parameter values.
Model model_from_checkpoint(const Checkpoint& ckpt);

struct EpochRecord {
    int epoch = 0;
    LossBreakdown train;
    double val_base = 0.0;
    double learning_rate = 0.0;
    double wall_time = 0.0;
    std::uint64_t seed = 0;
    Matrix logits;  // edge logits at the end of the epoch
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> log;
};

/// Raised when a loss term turns non-finite. Carries the last checkpoint
/// whose parameters were finite.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, const std::string& term, Checkpoint last_good)
        : NumericError(what, term), last_good_(std::move(last_good)) {}
    const Checkpoint& last_good() const { return last_good_; }

private:
    Checkpoint last_good_;
};

struct PreparedData {
    DatasetSplits splits;           // normalised
    NormStats stats;                // from the training windows only
    Matrix encoder_series;          // normalised training-range series, n x L
    std::vector<std::string> var_names;
};

/// Windows `source`, splits, fits normalisation on the columns covered by the
/// training windows and applies it everywhere. With `test_source` the test
/// split is replaced by all windows of that second series.
PreparedData prepare_data(const RawSeries& source, const RawSeries* test_source, Index input_horizon, Index horizon,
                          Index stride, const SplitSpec& spec);

/// Mean base loss over a dataset using the thresholded graph and an
/// autoregressive decoder. Normalised units.
double validation_loss(const Model& model, const Matrix& logits, const WindowedDataset& data, int batch_size);

/// Edge logits of the current parameters.
Matrix current_logits(const Model& model, const Matrix& encoder_series);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const PreparedData& data, const EpochCallback& on_epoch = {});

// ---- checkpoints and logs ---------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

std::string config_hash(const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// One JSON object per line.
std::string to_log_line(const EpochRecord& record);

// ---- gradient check -----------------------------------------------------------------

struct GradcheckOptions {
    double epsilon = 1e-5;
    std::uint64_t seed = 1;
    /// Parameter-name prefixes to probe ("edge_logits" selects the logits).
    /// Unset probes every group.
    std::optional<std::vector<std::string>> groups;
    /// Cap per group; 0 probes every scalar.
    std::size_t max_per_group = 0;
    /// Absolute floor of the relative-error denominator.
    double denominator_floor = 1e-6;
    /// Residuals or soft edges within this distance of a kink trigger a
    /// resample; so does any probed entry whose one-sided slopes disagree.
    double kink_margin = 1e-4;
    bool straight_through = false;
    /// Test hook applied to the analytic gradients before comparison.
    std::function<void(std::vector<Matrix>&, Matrix&)> corrupt;
};

struct GradcheckGroup {
    std::string name;
    std::size_t probed = 0;
    double max_rel_error = 0.0;
    std::string worst_entry;
    bool zero_gradient = true;  // every probed entry had zero gradient both ways
};

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::size_t probed = 0;
    bool vacuous = false;
    int resamples = 0;
    std::vector<GradcheckGroup> groups;
};

/// Small probe instance: n <= 4 nodes, T <= 8, tau <= 4.
struct GradcheckProbe {
    Index n_vars = 3;
    Index input_horizon = 6;
    Index horizon = 3;
    Index batch = 2;
    Index series_length = 24;
};

/// Configuration used for probes: tiny widths and a conv stack that fits
/// short series.
TrainConfig probe_config(const GradcheckProbe& probe, Mode mode, std::uint64_t seed);

GradcheckReport gradcheck(const GradcheckProbe& probe, Mode mode, const GradcheckOptions& options);

}  // namespace gaets
