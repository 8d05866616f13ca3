#include "gaets/graph_autoencoder.hpp"

#include "gaets/errors.hpp"

namespace gaets {

DenseLayer add_dense(ParameterSet& params, const std::string& name, Index in, Index out, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.w = params.add(name + ".w", glorot_uniform(out, in, rng));
    layer.b = params.add(name + ".b", Matrix::Zero(out, 1));
    layer.activation = act;
    return layer;
}

ad::Var mlp_forward(Binder& bind, const Mlp& mlp, ad::Var x) {
    for (const auto& layer : mlp.layers) {
        x = ad::add_bias(ad::matmul(bind(layer.w), x), bind(layer.b));
        if (layer.activation == Activation::relu) x = ad::relu(x);
    }
    return x;
}

SemParams make_sem(ParameterSet& params, Index d_feat, Index d_sem, Index hidden, Rng& rng) {
    if (d_feat < 1 || d_sem < 1 || hidden < 1) throw ConfigError("SEM widths must be >= 1");
    SemParams sem;
    sem.d_feat = d_feat;
    sem.d_sem = d_sem;
    sem.g1.layers.push_back(add_dense(params, "sem.g1.0", d_feat, hidden, Activation::relu, rng));
    sem.g1.layers.push_back(add_dense(params, "sem.g1.1", hidden, d_sem, Activation::identity, rng));
    sem.g2.layers.push_back(add_dense(params, "sem.g2.0", d_sem, hidden, Activation::relu, rng));
    sem.g2.layers.push_back(add_dense(params, "sem.g2.1", hidden, d_feat, Activation::identity, rng));
    // Zero output weights: the reconstruction starts at the bias, so the
    // regulariser does not push the graph around before g1/g2 have learned.
    params.value(sem.g2.layers.back().w).setZero();
    return sem;
}

ad::Var sem_reconstruct(Binder& bind, const SemParams& sem, const ad::Var& x, const ad::Var& adjacency) {
    const Index n = adjacency.rows();
    if (adjacency.cols() != n) throw DimensionError("adjacency must be square");
    if (n == 0 || x.cols() % n != 0) {
        throw DimensionError("SEM input has " + std::to_string(x.cols()) + " columns, not a multiple of " +
                             std::to_string(n) + " nodes");
    }
    ad::Var z = mlp_forward(bind, sem.g1, x);
    // Row j of A^T g1(X) is sum_i A(i, j) g1(x_i): node j gathers from parents.
    z = ad::graph_mix(z, ad::transpose(adjacency));
    return mlp_forward(bind, sem.g2, z);
}

ad::Var autoencoder_loss(Binder& bind, const SemParams& sem, const ad::Var& x, const ad::Var& adjacency) {
    ad::Var residual = ad::sub(x, sem_reconstruct(bind, sem, x, adjacency));
    return ad::scale(ad::sum_squares(residual), 1.0 / (2.0 * static_cast<double>(x.cols())));
}

Matrix sem_reconstruct(const ParameterSet& params, const SemParams& sem, const Matrix& x, const Matrix& adjacency) {
    if (adjacency.rows() != x.rows()) {
        throw DimensionError("adjacency is " + std::to_string(adjacency.rows()) + "x" +
                             std::to_string(adjacency.cols()) + " but X has " + std::to_string(x.rows()) + " rows");
    }
    ad::Tape tape;
    Binder bind(tape, params, false);
    return sem_reconstruct(bind, sem, tape.constant(x.transpose()), tape.constant(adjacency)).value().transpose();
}

double autoencoder_loss(const ParameterSet& params, const SemParams& sem, const Matrix& x, const Matrix& adjacency) {
    if (adjacency.rows() != x.rows()) throw DimensionError("adjacency and X disagree on node count");
    ad::Tape tape;
    Binder bind(tape, params, false);
    return autoencoder_loss(bind, sem, tape.constant(x.transpose()), tape.constant(adjacency)).scalar();
}

Vector per_node_reconstruction_error(const ParameterSet& params, const SemParams& sem, const Matrix& x,
                                     const Matrix& adjacency) {
    ad::Tape tape;
    Binder bind(tape, params, false);
    const Matrix recon = sem_reconstruct(bind, sem, tape.constant(x), tape.constant(adjacency)).value();
    const Index n = adjacency.rows();
    const Index batch = x.cols() / n;
    Vector err(n);
    for (Index i = 0; i < n; ++i) {
        err(i) = (x.middleCols(i * batch, batch) - recon.middleCols(i * batch, batch)).squaredNorm() /
                 static_cast<double>(batch * x.rows());
    }
    return err;
}

}  // namespace gaets
