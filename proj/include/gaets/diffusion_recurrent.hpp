#pragma once

// Diffusion convolution, the diffusion-convolutional GRU cell and the
// sequence-to-sequence forecaster built from it.
//
// Edge convention: A(i, j) = 1 means an edge i -> j. The forward transition is
// D_O^{-1} A (D_O = row sums, out-degree); the backward transition is
// D_I^{-1} A^T (D_I = column sums of A, in-degree). Zero-degree rows stay zero.

#include "gaets/errors.hpp"
#include "gaets/parameters.hpp"

#include <utility>
#include <vector>

namespace gaets {

// ---- dense reference operators --------------------------------------------------

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> row_normalized(
    const Eigen::MatrixBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = a;
    for (Index i = 0; i < out.rows(); ++i) {
        const Scalar s = out.row(i).sum();
        if (s != Scalar(0)) {
            out.row(i) /= s;
        } else {
            out.row(i).setZero();
        }
    }
    return out;
}

/// Returns (D_O^{-1} A, D_I^{-1} A^T).
template <typename Derived>
auto degree_normalize(const Eigen::MatrixBase<Derived>& a) {
    if (a.rows() != a.cols()) throw DimensionError("adjacency must be square");
    return std::make_pair(row_normalized(a), row_normalized(a.transpose()));
}

/// theta_fwd[k] and theta_bwd[k] are d_in x d_out, k = 0..K.
template <typename Scalar>
struct DiffusionWeights {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    std::vector<Mat> theta_fwd;
    std::vector<Mat> theta_bwd;

    Index order() const { return static_cast<Index>(theta_fwd.size()) - 1; }
};

/// sum_k (D_O^{-1}A)^k Y theta_fwd[k] + (D_I^{-1}A^T)^k Y theta_bwd[k] for a
/// node-row feature matrix Y (n x d_in). Powers are applied by repeated
/// multiplication.
template <typename DerivedA, typename DerivedY, typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> diffusion_conv(const Eigen::MatrixBase<DerivedA>& a,
                                                                     const Eigen::MatrixBase<DerivedY>& y,
                                                                     const DiffusionWeights<Scalar>& w) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (w.theta_fwd.empty() || w.theta_fwd.size() != w.theta_bwd.size()) {
        throw DimensionError("diffusion filter needs K + 1 forward and backward weights");
    }
    if (a.rows() != y.rows()) throw DimensionError("adjacency and feature matrix disagree on node count");
    const Index d_out = w.theta_fwd[0].cols();
    for (std::size_t k = 0; k < w.theta_fwd.size(); ++k) {
        if (w.theta_fwd[k].rows() != y.cols() || w.theta_bwd[k].rows() != y.cols() ||
            w.theta_fwd[k].cols() != d_out || w.theta_bwd[k].cols() != d_out) {
            throw DimensionError("diffusion weight " + std::to_string(k) + " does not conform to the features");
        }
    }
    const auto [fwd, bwd] = degree_normalize(a);
    Mat out = y * (w.theta_fwd[0] + w.theta_bwd[0]);
    Mat yf = y, yb = y;
    for (std::size_t k = 1; k < w.theta_fwd.size(); ++k) {
        yf = fwd * yf;
        yb = bwd * yb;
        out += yf * w.theta_fwd[k] + yb * w.theta_bwd[k];
    }
    return out;
}

// ---- trainable model ------------------------------------------------------------

/// Parameters of one W_{Q*A} operator plus its bias b_Q. Weights are stored
/// transposed (d_out x d_in) to act on feature-major tape tensors.
struct DiffusionFilter {
    Index order = 0;  // K
    Index in = 0;
    Index out = 0;
    std::vector<std::size_t> theta_fwd;  // K + 1 entries
    std::vector<std::size_t> theta_bwd;  // K + 1 entries
    std::size_t bias = 0;
};

DiffusionFilter make_diffusion_filter(ParameterSet& params, const std::string& name, Index in, Index out,
                                      Index order, double bias_init, Rng& rng);

/// Set a filter's weights from the node-row convention used by
/// DiffusionWeights (theta is d_in x d_out) and a bias of length d_out.
void assign_filter(ParameterSet& params, const DiffusionFilter& filter, const DiffusionWeights<double>& weights,
                   const Vector& bias);

struct Supports {
    ad::Var forward;   // D_O^{-1} A
    ad::Var backward;  // D_I^{-1} A^T
};

Supports make_supports(const ad::Var& adjacency);

/// [Y; P_f Y; ...; P_f^K Y; P_b Y; ...; P_b^K Y] for feature-major Y.
ad::Var diffusion_features(const Supports& supports, const ad::Var& y, Index order);

/// Combined weight [theta_f0 + theta_b0, theta_f1 .. theta_fK, theta_b1 .. theta_bK].
ad::Var filter_weight(Binder& bind, const DiffusionFilter& filter);

/// W_{Q*A} Y for feature-major Y (d_in x (n * B)); no bias.
ad::Var diffusion_conv(Binder& bind, const DiffusionFilter& filter, const Supports& supports, const ad::Var& y);

struct DcgruCell {
    Index d_in = 0;
    Index hidden = 0;
    DiffusionFilter reset;      // R
    DiffusionFilter update;     // U
    DiffusionFilter candidate;  // C
};

DcgruCell make_dcgru_cell(ParameterSet& params, const std::string& name, Index d_in, Index hidden, Index order,
                          Rng& rng);

/// One recurrent step. x is d_in x (n * B), h_prev is hidden x (n * B).
ad::Var dcgru_cell(Binder& bind, const DcgruCell& cell, const Supports& supports, const ad::Var& x,
                   const ad::Var& h_prev);

struct Seq2SeqForecaster {
    Index input_horizon = 0;  // T
    Index horizon = 0;        // tau
    Index hidden = 0;
    Index order = 0;
    std::vector<DcgruCell> encoder;
    std::vector<DcgruCell> decoder;
    std::size_t proj_w = 0;  // 1 x hidden
    std::size_t proj_b = 0;  // 1 x 1
};

Seq2SeqForecaster make_forecaster(ParameterSet& params, Index input_horizon, Index horizon, Index hidden, Index order,
                                  Index num_layers, Rng& rng);

/// Decoder conditioning for one pass. teacher[t] (t >= 1) feeds the true value
/// of step t - 1 instead of the previous prediction; empty means autoregressive.
struct DecoderPolicy {
    const Matrix* targets = nullptr;  // tau x (n * B)
    std::vector<char> teacher;
};

/// inputs is T x (n * B) (row t = observations at step t). Returns the
/// tau x (n * B) forecast. The first decoder input is the last observation.
ad::Var forecast(Binder& bind, const Seq2SeqForecaster& model, const Supports& supports, const Matrix& inputs,
                 const DecoderPolicy& policy = {});

/// Node-row API: adjacency n x n, window n x T, result n x tau.
Matrix forecast(const ParameterSet& params, const Seq2SeqForecaster& model, const Matrix& adjacency,
                const Matrix& window);

/// Node-row API: x is n x d_in, h_prev is n x hidden; returns n x hidden.
Matrix dcgru_cell(const ParameterSet& params, const DcgruCell& cell, const Matrix& adjacency, const Matrix& x,
                  const Matrix& h_prev);

/// Pack windows into the tape layout: row t, column i * B + b holds variable i
/// of sample b at step t. Each window is n x steps.
Matrix pack_batch(const std::vector<const Matrix*>& windows);

/// Inverse of pack_batch for a single tau x (n * B) block: returns B matrices
/// of shape n x tau.
std::vector<Matrix> unpack_batch(const Matrix& packed, Index n_vars);

}  // namespace gaets
