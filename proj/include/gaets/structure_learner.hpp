#pragma once

// Graph structure learner: per-node convolutional feature extractor, pairwise
// link predictor, and Bernoulli edge sampling through the binary-concrete
// (two-Gumbel sigmoid) relaxation with a straight-through hard sample.

#include "gaets/parameters.hpp"

#include <string>

namespace gaets {

/// conv(k1, c1) -> ReLU -> avg-pool(p1) -> conv(k2, c2) -> ReLU ->
/// adaptive avg-pool(bins) -> flatten -> affine(d_embed)
struct ConvSpec {
    Index kernel1 = 10;
    Index channels1 = 8;
    Index pool1 = 4;
    Index kernel2 = 10;
    Index channels2 = 16;
    Index bins = 16;
};

/// Shortest series the conv stack accepts.
Index min_series_length(const ConvSpec& spec);

struct FeatureEncoder {
    ConvSpec spec;
    Index d_embed = 0;
    std::size_t conv1_w = 0, conv1_b = 0, conv2_w = 0, conv2_b = 0, fc_w = 0, fc_b = 0;
};

/// [h_i ; h_j] -> affine(hidden) -> ReLU -> affine(1)
struct LinkPredictor {
    Index hidden = 0;
    std::size_t fc1_w = 0, fc1_b = 0, fc2_w = 0, fc2_b = 0;
};

struct StructureLearner {
    FeatureEncoder encoder;
    LinkPredictor link;
};

StructureLearner make_structure_learner(ParameterSet& params, const ConvSpec& spec, Index d_embed, Index link_hidden,
                                        Rng& rng);

/// Tape version. `series` is n_vars x L; result is d_embed x n_vars (one
/// column per node).
ad::Var encode_features(Binder& bind, const FeatureEncoder& enc, const Matrix& series);

/// Tape version. `h` is d_embed x n; result is n x n logits with entry (i, j)
/// scoring the ordered pair (h_i, h_j).
ad::Var link_logits(Binder& bind, const LinkPredictor& link, const ad::Var& h);

/// Node embeddings as an n_vars x d_embed matrix (row i belongs to node i).
Matrix encode_features(const ParameterSet& params, const FeatureEncoder& enc, const Matrix& series);
Matrix link_logits(const ParameterSet& params, const LinkPredictor& link, const Matrix& embeddings);

struct AdjacencySample {
    Matrix hard;         // entries in {0, 1}
    Matrix soft;         // relaxed sample in (0, 1)
    double temperature;  // > 0
};

/// Logistic noise g1 - g0 for every entry, g0 and g1 independent standard
/// Gumbel draws.
Matrix draw_gumbel_difference(Index n, Rng& rng);

/// soft = sigmoid((logits + noise) / temperature)
ad::Var relaxed_adjacency(const ad::Var& logits, const Matrix& noise, double temperature);

/// Hard sample on the forward pass, soft gradient on the backward pass.
ad::Var straight_through_adjacency(const ad::Var& soft);

AdjacencySample sample_adjacency(const Matrix& logits, double temperature, Rng& rng);

/// Entrywise sigmoid.
Matrix edge_probabilities(const Matrix& logits);

/// Deterministic graph: edge where probability > 0.5.
Matrix threshold_adjacency(const Matrix& logits);

}  // namespace gaets
