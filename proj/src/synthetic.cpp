#include "gaets/synthetic.hpp"

#include "gaets/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gaets {

double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("spectral radius needs a square matrix");
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> solver(m, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

GroundTruthGraph random_graph(const RandomGraphOptions& o, std::uint64_t seed) {
    const Index n = o.n_vars;
    if (n < 2) throw ConfigError("synthetic graphs need at least 2 nodes");
    if (o.edges < 0 || o.edges > n * (n - 1)) {
        throw ConfigError("cannot place " + std::to_string(o.edges) + " edges on " + std::to_string(n) + " nodes");
    }
    if (!(o.noise_std > 0)) throw ConfigError("noise_std must be positive");
    if (!(o.max_radius > 0 && o.max_radius < 1)) throw ConfigError("max_radius must lie in (0, 1)");

    Rng rng(seed);
    std::vector<std::pair<Index, Index>> slots;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (i != j) slots.emplace_back(i, j);
        }
    }
    std::shuffle(slots.begin(), slots.end(), rng);
    std::uniform_real_distribution<double> magnitude(o.min_weight, o.max_weight);
    std::bernoulli_distribution negative(0.5);

    GroundTruthGraph g;
    g.adjacency = Matrix::Zero(n, n);
    g.coefficients = Matrix::Zero(n, n);
    g.noise_std = o.noise_std;
    g.nonlinearity = o.nonlinearity;
    for (Index e = 0; e < o.edges; ++e) {
        const auto [i, j] = slots[static_cast<std::size_t>(e)];
        g.adjacency(i, j) = 1.0;
        const double w = magnitude(rng);
        g.coefficients(i, j) = negative(rng) ? -w : w;
    }
    const double rho = spectral_radius(g.coefficients);
    if (rho >= o.max_radius) g.coefficients *= o.max_radius / rho * (1.0 - 1e-9);
    return g;
}

RawSeries generate(const GroundTruthGraph& graph, Index length, std::uint64_t seed, Index burn_in) {
    const Index n = graph.n_vars();
    if (graph.coefficients.rows() != n || graph.coefficients.cols() != n || graph.adjacency.cols() != n) {
        throw DimensionError("graph adjacency and coefficients must both be n x n");
    }
    if (((graph.adjacency.array() == 0.0) && (graph.coefficients.array() != 0.0)).any()) {
        throw ConfigError("coefficients must vanish where the adjacency has no edge");
    }
    const double rho = spectral_radius(graph.coefficients);
    // The eigen solver can land a hair under an exact unit root.
    if (rho >= 1.0 - 1e-12) throw ConfigError("coefficient spectral radius " + std::to_string(rho) + " is not below 1");
    if (length < 1 || burn_in < 0) throw ConfigError("length must be >= 1 and burn_in >= 0");
    if (!(graph.noise_std > 0)) throw ConfigError("noise_std must be positive");

    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, graph.noise_std);
    const Matrix ct = graph.coefficients.transpose();
    Vector x = Vector::Zero(n);
    RawSeries out;
    out.values.resize(n, length);
    for (Index i = 0; i < n; ++i) out.var_names.push_back("x" + std::to_string(i + 1));
    for (Index t = 0; t < burn_in + length; ++t) {
        Vector drive = ct * x;
        if (graph.nonlinearity == Nonlinearity::tanh) drive = drive.array().tanh().matrix();
        for (Index i = 0; i < n; ++i) drive(i) += noise(rng);
        x = drive;
        if (t >= burn_in) out.values.col(t - burn_in) = x;
    }
    return out;
}

std::optional<double> structure_recovery_score(const Matrix& edge_probs, const Matrix& truth) {
    if (edge_probs.rows() != truth.rows() || edge_probs.cols() != truth.cols() || truth.rows() != truth.cols()) {
        throw DimensionError("edge probabilities and truth must be the same square shape");
    }
    struct Item {
        double score;
        bool positive;
    };
    std::vector<Item> items;
    for (Index i = 0; i < truth.rows(); ++i) {
        for (Index j = 0; j < truth.cols(); ++j) {
            if (i != j) items.push_back({edge_probs(i, j), truth(i, j) != 0.0});
        }
    }
    const auto n_pos = static_cast<double>(std::count_if(items.begin(), items.end(), [](const Item& it) { return it.positive; }));
    const double n_neg = static_cast<double>(items.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].score == items[i].score) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k) {
            if (items[k].positive) rank_sum += mid_rank;
        }
        i = j;
    }
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

void write_edge_list(const std::filesystem::path& path, const GroundTruthGraph& graph,
                     const std::vector<std::string>& var_names) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "source,target,coefficient\n";
    for (Index i = 0; i < graph.n_vars(); ++i) {
        for (Index j = 0; j < graph.n_vars(); ++j) {
            if (graph.adjacency(i, j) != 0.0) {
                out << var_names.at(static_cast<std::size_t>(i)) << ',' << var_names.at(static_cast<std::size_t>(j))
                    << ',' << graph.coefficients(i, j) << '\n';
            }
        }
    }
}

GroundTruthGraph read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& var_names) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open edge list '" + path.string() + "'");
    const auto n = static_cast<Index>(var_names.size());
    GroundTruthGraph g;
    g.adjacency = Matrix::Zero(n, n);
    g.coefficients = Matrix::Zero(n, n);
    auto index_of = [&](const std::string& name) {
        const auto it = std::find(var_names.begin(), var_names.end(), name);
        if (it == var_names.end()) throw SchemaError("edge list names unknown variable '" + name + "'");
        return static_cast<Index>(it - var_names.begin());
    };
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string src, dst, coef;
        std::getline(ss, src, ',');
        std::getline(ss, dst, ',');
        std::getline(ss, coef, ',');
        const Index i = index_of(src), j = index_of(dst);
        g.adjacency(i, j) = 1.0;
        g.coefficients(i, j) = coef.empty() ? 0.0 : std::stod(coef);
    }
    return g;
}

}  // namespace gaets
