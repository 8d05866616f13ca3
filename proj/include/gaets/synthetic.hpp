#pragma once

// Synthetic multivariate series with a known dependency graph, and the ROC
// AUC used to score a learned graph against it.

#include "gaets/timeseries_data.hpp"

#include <filesystem>
#include <optional>

namespace gaets {

enum class Nonlinearity { linear, tanh };

struct GroundTruthGraph {
    Matrix adjacency;     // binary, (i, j) = 1 for an edge i -> j
    Matrix coefficients;  // zero wherever adjacency is zero
    double noise_std = 0.1;
    Nonlinearity nonlinearity = Nonlinearity::tanh;

    Index n_vars() const { return adjacency.rows(); }
};

double spectral_radius(const Matrix& m);

struct RandomGraphOptions {
    Index n_vars = 6;
    Index edges = 8;
    double noise_std = 0.1;
    Nonlinearity nonlinearity = Nonlinearity::tanh;
    double min_weight = 0.5;  // |coefficient| drawn from [min_weight, max_weight]
    double max_weight = 0.9;
    double max_radius = 0.9;  // coefficients are rescaled to stay below this
};

/// Random directed graph without self-loops and random-sign coefficients.
GroundTruthGraph random_graph(const RandomGraphOptions& options, std::uint64_t seed);

/// x_t = phi(C^T x_{t-1}) + eps_t with eps ~ N(0, noise_std^2). `burn_in`
/// initial steps are discarded. Variables are named x1..xn.
RawSeries generate(const GroundTruthGraph& graph, Index length, std::uint64_t seed, Index burn_in = 100);

/// ROC AUC of off-diagonal `edge_probs` against `truth`, ties at mid-rank.
/// Empty when the off-diagonal truth has no edges or no non-edges.
std::optional<double> structure_recovery_score(const Matrix& edge_probs, const Matrix& truth);

/// CSV with columns source,target,coefficient for each true edge.
void write_edge_list(const std::filesystem::path& path, const GroundTruthGraph& graph,
                     const std::vector<std::string>& var_names);
GroundTruthGraph read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& var_names);

}  // namespace gaets
