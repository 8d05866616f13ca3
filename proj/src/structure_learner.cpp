#include "gaets/structure_learner.hpp"

#include "gaets/errors.hpp"

#include <cmath>
#include <limits>

namespace gaets {

Index min_series_length(const ConvSpec& spec) {
    return spec.pool1 * (spec.bins + spec.kernel2 - 1) + spec.kernel1 - 1;
}

StructureLearner make_structure_learner(ParameterSet& params, const ConvSpec& spec, Index d_embed, Index link_hidden,
                                        Rng& rng) {
    if (spec.kernel1 < 1 || spec.kernel2 < 1 || spec.channels1 < 1 || spec.channels2 < 1 || spec.pool1 < 1 ||
        spec.bins < 1 || d_embed < 1 || link_hidden < 1) {
        throw ConfigError("structure learner sizes must all be >= 1");
    }
    StructureLearner s;
    auto& e = s.encoder;
    e.spec = spec;
    e.d_embed = d_embed;
    e.conv1_w = params.add("encoder.conv1.w", glorot_uniform(spec.channels1, spec.kernel1, rng));
    e.conv1_b = params.add("encoder.conv1.b", Matrix::Zero(spec.channels1, 1));
    e.conv2_w = params.add("encoder.conv2.w", glorot_uniform(spec.channels2, spec.channels1 * spec.kernel2, rng));
    e.conv2_b = params.add("encoder.conv2.b", Matrix::Zero(spec.channels2, 1));
    e.fc_w = params.add("encoder.fc.w", glorot_uniform(d_embed, spec.channels2 * spec.bins, rng));
    e.fc_b = params.add("encoder.fc.b", Matrix::Zero(d_embed, 1));

    auto& l = s.link;
    l.hidden = link_hidden;
    l.fc1_w = params.add("link.fc1.w", glorot_uniform(link_hidden, 2 * d_embed, rng));
    l.fc1_b = params.add("link.fc1.b", Matrix::Zero(link_hidden, 1));
    l.fc2_w = params.add("link.fc2.w", glorot_uniform(1, link_hidden, rng));
    l.fc2_b = params.add("link.fc2.b", Matrix::Zero(1, 1));
    return s;
}

ad::Var encode_features(Binder& bind, const FeatureEncoder& enc, const Matrix& series) {
    const auto& spec = enc.spec;
    const Index n = series.rows();
    const Index len = series.cols();
    if (len < min_series_length(spec)) {
        throw ConfigError("feature encoder needs series of at least " + std::to_string(min_series_length(spec)) +
                          " samples, got " + std::to_string(len));
    }
    // One row, node i occupying columns [i * L, (i + 1) * L).
    Matrix flat(1, n * len);
    for (Index i = 0; i < n; ++i) flat.block(0, i * len, 1, len) = series.row(i);
    auto& tape = bind.tape();
    ad::Var x = tape.constant(std::move(flat));

    x = ad::relu(ad::add_bias(ad::conv1d(x, bind(enc.conv1_w), n), bind(enc.conv1_b)));
    const Index len1 = len - spec.kernel1 + 1;
    std::vector<std::pair<Index, Index>> pool;
    for (Index j = 0; j + spec.pool1 <= len1; j += spec.pool1) pool.emplace_back(j, j + spec.pool1);
    x = ad::segment_pool(x, n, std::move(pool));

    x = ad::relu(ad::add_bias(ad::conv1d(x, bind(enc.conv2_w), n), bind(enc.conv2_b)));
    const Index len3 = x.cols() / n;
    std::vector<std::pair<Index, Index>> bins;
    for (Index q = 0; q < spec.bins; ++q) {
        const Index lo = (q * len3) / spec.bins;
        const Index hi = ((q + 1) * len3 + spec.bins - 1) / spec.bins;
        bins.emplace_back(lo, hi);
    }
    x = ad::segment_pool(x, n, std::move(bins));
    // Each node's channels x bins block is contiguous, so flattening is a reshape.
    x = ad::reshape(x, spec.channels2 * spec.bins, n);
    return ad::add_bias(ad::matmul(bind(enc.fc_w), x), bind(enc.fc_b));
}

ad::Var link_logits(Binder& bind, const LinkPredictor& link, const ad::Var& h) {
    if (!h.value().allFinite()) throw NumericError("node embeddings are not finite", "link_logits");
    const Index n = h.cols();
    // Pair column p = j * n + i holds [h_i ; h_j], so the final column-major
    // reshape puts it at (i, j).
    std::vector<Index> first(static_cast<std::size_t>(n * n)), second(static_cast<std::size_t>(n * n));
    for (Index p = 0; p < n * n; ++p) {
        first[static_cast<std::size_t>(p)] = p % n;
        second[static_cast<std::size_t>(p)] = p / n;
    }
    const ad::Var parts[] = {ad::gather_cols(h, std::move(first)), ad::gather_cols(h, std::move(second))};
    ad::Var pairs = ad::vstack(parts);
    ad::Var hidden = ad::relu(ad::add_bias(ad::matmul(bind(link.fc1_w), pairs), bind(link.fc1_b)));
    ad::Var out = ad::add_bias(ad::matmul(bind(link.fc2_w), hidden), bind(link.fc2_b));
    return ad::reshape(out, n, n);
}

Matrix encode_features(const ParameterSet& params, const FeatureEncoder& enc, const Matrix& series) {
    ad::Tape tape;
    Binder bind(tape, params, false);
    return encode_features(bind, enc, series).value().transpose();
}

Matrix link_logits(const ParameterSet& params, const LinkPredictor& link, const Matrix& embeddings) {
    ad::Tape tape;
    Binder bind(tape, params, false);
    return link_logits(bind, link, tape.constant(embeddings.transpose())).value();
}

Matrix draw_gumbel_difference(Index n, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    auto gumbel = [&] {
        double u = uniform(rng);
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        return -std::log(-std::log(u));
    };
    Matrix noise(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double g1 = gumbel();
            const double g0 = gumbel();
            noise(i, j) = g1 - g0;
        }
    }
    return noise;
}

ad::Var relaxed_adjacency(const ad::Var& logits, const Matrix& noise, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be positive");
    auto& tape = *logits.tape();
    return ad::sigmoid(ad::scale(ad::add(logits, tape.constant(noise)), 1.0 / temperature));
}

ad::Var straight_through_adjacency(const ad::Var& soft) {
    Matrix hard = (soft.value().array() > 0.5).cast<double>().matrix();
    return ad::straight_through(std::move(hard), soft);
}

AdjacencySample sample_adjacency(const Matrix& logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be positive");
    if (logits.rows() != logits.cols()) throw DimensionError("edge logits must be square");
    if (!logits.allFinite()) throw NumericError("edge logits are not finite", "sample_adjacency");
    ad::Tape tape;
    const Matrix noise = draw_gumbel_difference(logits.rows(), rng);
    ad::Var soft = relaxed_adjacency(tape.constant(logits), noise, temperature);
    AdjacencySample s;
    s.soft = soft.value();
    s.hard = (s.soft.array() > 0.5).cast<double>().matrix();
    s.temperature = temperature;
    return s;
}

Matrix edge_probabilities(const Matrix& logits) {
    return logits.unaryExpr([](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
}

Matrix threshold_adjacency(const Matrix& logits) { return (logits.array() > 0.0).cast<double>().matrix(); }

}  // namespace gaets
