#pragma once

// Nonlinear structural-equation reconstruction X_hat = g2(A^T g1(X)).
//
// g1 and g2 are small MLPs shared by every node. Features are stored column
// per (node, sample) on the tape: X is d_feat x (n * B) with column i * B + b.

#include "gaets/parameters.hpp"

#include <string>
#include <vector>

namespace gaets {

enum class Activation { identity, relu };

struct DenseLayer {
    std::size_t w = 0;  // out x in
    std::size_t b = 0;  // out x 1
    Activation activation = Activation::identity;
};

struct Mlp {
    std::vector<DenseLayer> layers;
};

/// Appends one dense layer initialised with Glorot weights and zero bias.
DenseLayer add_dense(ParameterSet& params, const std::string& name, Index in, Index out, Activation act, Rng& rng);

ad::Var mlp_forward(Binder& bind, const Mlp& mlp, ad::Var x);

struct SemParams {
    Mlp g1;  // d_feat -> d_sem
    Mlp g2;  // d_sem -> d_feat
    Index d_feat = 0;
    Index d_sem = 0;
};

/// g1: d_feat -> hidden (ReLU) -> d_sem; g2: d_sem -> hidden (ReLU) -> d_feat.
SemParams make_sem(ParameterSet& params, Index d_feat, Index d_sem, Index hidden, Rng& rng);

/// Tape version: returns g2(A^T g1(x)) in the same layout as x.
ad::Var sem_reconstruct(Binder& bind, const SemParams& sem, const ad::Var& x, const ad::Var& adjacency);

/// (1 / (2 m)) * ||x - reconstruction||_F^2 where m = x.cols() = n * B.
ad::Var autoencoder_loss(Binder& bind, const SemParams& sem, const ad::Var& x, const ad::Var& adjacency);

/// Node-row convenience API: X is n x d_feat (row j = node j).
Matrix sem_reconstruct(const ParameterSet& params, const SemParams& sem, const Matrix& x, const Matrix& adjacency);
double autoencoder_loss(const ParameterSet& params, const SemParams& sem, const Matrix& x, const Matrix& adjacency);

/// Mean squared reconstruction error per node, averaged over batch samples.
/// `x` uses the tape layout (d_feat x (n * B)).
Vector per_node_reconstruction_error(const ParameterSet& params, const SemParams& sem, const Matrix& x,
                                     const Matrix& adjacency);

}  // namespace gaets
