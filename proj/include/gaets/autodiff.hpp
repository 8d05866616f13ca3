#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every node on the tape holds one matrix value. Operations append nodes and
// register a closure that pushes the output gradient back into the inputs.
// Nodes that do not depend on any variable skip gradient bookkeeping.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace gaets::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }
    bool requires_grad() const;
    /// Value of a 1x1 node.
    double scalar() const { return value()(0, 0); }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var variable(Matrix value);

    /// Append a node computed from `inputs`. `backward` is dropped when none
    /// of the inputs requires a gradient.
    Var push(Matrix value, std::span<const Var> inputs, Backward backward);

    /// Reverse sweep seeded with d(out)/d(out) = 1. `out` must be 1x1.
    void backward(const Var& out);
    void backward(const Var& out, const Matrix& seed);

    /// Gradient accumulated at `v`; a zero matrix of matching shape when the
    /// node received no gradient.
    Matrix grad(const Var& v) const;

    void accumulate(int id, const Matrix& g);
    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

// ---- elementwise and linear algebra ------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard product
Var scale(const Var& a, double s);
Var one_minus(const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// x + b broadcast along columns; b is a column vector with x.rows() rows.
Var add_bias(const Var& x, const Var& b);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

// ---- shape manipulation -------------------------------------------------------

Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var row_block(const Var& a, Index start, Index count);
Var col_block(const Var& a, Index start, Index count);
/// Column-major reinterpretation, like Eigen::Map with a new shape.
Var reshape(const Var& a, Index rows, Index cols);
/// out.col(k) = a.col(index[k]); gradients scatter-add.
Var gather_cols(const Var& a, std::vector<Index> index);

// ---- graph and sequence operators ---------------------------------------------

/// Node mixing for feature-major batches.
///
/// `x` is d x (n * B) where column i * B + b holds node i of batch sample b.
/// Returns the same layout with node rows replaced by sum_j p(i, j) * node_j,
/// i.e. P applied on the node axis of every batch sample.
Var graph_mix(const Var& x, const Var& p);

/// Divide each row by its sum; rows summing to zero map to zero rows.
Var row_normalize(const Var& a);

/// Forward value `hard`, gradient passed to `soft` unchanged.
Var straight_through(Matrix hard, const Var& soft);

/// 1-D valid convolution applied independently to `segments` equal-length
/// segments laid side by side in the columns of `x` (c_in x (S * L)).
/// `w` is c_out x (c_in * k) with column ci * k + j for tap j of channel ci.
Var conv1d(const Var& x, const Var& w, Index segments);

/// Average over column ranges [first, second) inside each segment.
Var segment_pool(const Var& x, Index segments, std::vector<std::pair<Index, Index>> bins);

// ---- reductions (all return 1x1) ----------------------------------------------

Var sum(const Var& a);
Var sum_squares(const Var& a);
/// mean(|a - target|)
Var mean_abs_error(const Var& a, const Matrix& target);
/// mean((a - target)^2)
Var mean_squared_error(const Var& a, const Matrix& target);

}  // namespace gaets::ad
