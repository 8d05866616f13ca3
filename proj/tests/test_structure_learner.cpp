#include "gaets/errors.hpp"
#include "gaets/structure_learner.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace gaets;
using oracle::Mat;

namespace {

const ConvSpec kSmall{3, 2, 2, 2, 2, 2};  // minimum length 8

struct Learner {
    ParameterSet params;
    StructureLearner s;
    Learner(const ConvSpec& spec, Index d_embed, Index hidden, std::uint64_t seed) {
        Rng rng(seed);
        s = make_structure_learner(params, spec, d_embed, hidden, rng);
    }
};

// Independent forward pass of the encoder for one node series.
Eigen::VectorXd encoder_by_hand(const ParameterSet& p, const FeatureEncoder& e, const Eigen::RowVectorXd& x) {
    const ConvSpec& s = e.spec;
    const Mat& w1 = p.value(e.conv1_w);
    const Mat& b1 = p.value(e.conv1_b);
    const Mat& w2 = p.value(e.conv2_w);
    const Mat& b2 = p.value(e.conv2_b);
    const Index l1 = x.size() - s.kernel1 + 1;
    Mat c1(s.channels1, l1);
    for (Index c = 0; c < s.channels1; ++c)
        for (Index t = 0; t < l1; ++t) {
            double v = b1(c, 0);
            for (Index j = 0; j < s.kernel1; ++j) v += w1(c, j) * x(t + j);
            c1(c, t) = std::max(0.0, v);
        }
    const Index l2 = l1 / s.pool1;
    Mat pooled(s.channels1, l2);
    for (Index t = 0; t < l2; ++t) pooled.col(t) = c1.middleCols(t * s.pool1, s.pool1).rowwise().mean();
    const Index l3 = l2 - s.kernel2 + 1;
    Mat c2(s.channels2, l3);
    for (Index c = 0; c < s.channels2; ++c)
        for (Index t = 0; t < l3; ++t) {
            double v = b2(c, 0);
            for (Index ci = 0; ci < s.channels1; ++ci)
                for (Index j = 0; j < s.kernel2; ++j) v += w2(c, ci * s.kernel2 + j) * pooled(ci, t + j);
            c2(c, t) = std::max(0.0, v);
        }
    Eigen::VectorXd flat(s.channels2 * s.bins);
    for (Index q = 0; q < s.bins; ++q) {
        const Index lo = (q * l3) / s.bins;
        const Index hi = ((q + 1) * l3 + s.bins - 1) / s.bins;
        for (Index c = 0; c < s.channels2; ++c) flat(q * s.channels2 + c) = c2.row(c).segment(lo, hi - lo).mean();
    }
    return p.value(e.fc_w) * flat + p.value(e.fc_b);
}

Mat permutation(const std::vector<Index>& perm) {
    Mat p = Mat::Zero(static_cast<Index>(perm.size()), static_cast<Index>(perm.size()));
    for (std::size_t i = 0; i < perm.size(); ++i) p(static_cast<Index>(i), perm[i]) = 1.0;
    return p;
}

}  // namespace

TEST_SUITE("structure_learner") {

TEST_CASE("encoder on a zero series equals the bias image") {
    Learner l(kSmall, 3, 4, 1);
    auto& p = l.params;
    const auto& e = l.s.encoder;
    CHECK(min_series_length(kSmall) == 8);
    p.value(e.conv1_b) << 0.5, -0.25;
    p.value(e.conv2_b) << 0.1, 0.2;
    p.value(e.fc_b) << 1, 2, 3;
    // Zero input: conv1 gives relu(b1) = (0.5, 0); conv2 sees those constants.
    const Mat& w2 = p.value(e.conv2_w);
    Eigen::VectorXd c2(2);
    for (Index c = 0; c < 2; ++c) c2(c) = std::max(0.0, 0.1 * (c + 1) + 0.5 * (w2(c, 0) + w2(c, 1)));
    Eigen::VectorXd flat(4);
    flat << c2(0), c2(1), c2(0), c2(1);
    const Eigen::VectorXd expect = p.value(e.fc_w) * flat + p.value(e.fc_b);
    const Mat h = encode_features(p, e, Mat::Zero(1, 8));
    CHECK((h.row(0).transpose() - expect).norm() < 1e-12);
}

TEST_CASE("encoder matches a hand-written forward pass") {
    std::mt19937_64 rng(2);
    for (Index len : {8, 9, 13, 30}) {
        Learner l(kSmall, 3, 4, 3);
        const Mat x = oracle::random_matrix(3, len, rng);
        const Mat h = encode_features(l.params, l.s.encoder, x);
        REQUIRE(h.rows() == 3);
        REQUIRE(h.cols() == 3);
        for (Index i = 0; i < 3; ++i) {
            CHECK((h.row(i).transpose() - encoder_by_hand(l.params, l.s.encoder, x.row(i))).norm() < 1e-12);
        }
    }
}

TEST_CASE("default encoder gives n x d_embed") {
    Learner l(ConvSpec{}, 64, 64, 4);
    std::mt19937_64 rng(4);
    const Mat h = encode_features(l.params, l.s.encoder, oracle::random_matrix(6, 300, rng));
    CHECK(h.rows() == 6);
    CHECK(h.cols() == 64);
    CHECK(h.allFinite());
    CHECK_THROWS_AS(encode_features(l.params, l.s.encoder, Mat::Zero(6, min_series_length(ConvSpec{}) - 1)),
                    ConfigError);
}

TEST_CASE("identical series give identical rows; other rows ignore a perturbation") {
    Learner l(kSmall, 3, 4, 5);
    std::mt19937_64 rng(5);
    Mat x = oracle::random_matrix(4, 20, rng);
    x.row(2) = x.row(0);
    const Mat h = encode_features(l.params, l.s.encoder, x);
    CHECK((h.row(0) - h.row(2)).norm() == 0.0);
    Mat x2 = x;
    x2.row(3) = oracle::random_matrix(1, 20, rng);
    const Mat h2 = encode_features(l.params, l.s.encoder, x2);
    for (Index i = 0; i < 3; ++i) CHECK(h2.row(i) == h.row(i));
    CHECK(h2.row(3) != h.row(3));
}

TEST_CASE("link predictor on two nodes by hand") {
    Learner l(kSmall, 1, 2, 6);
    auto& p = l.params;
    const auto& k = l.s.link;
    p.value(k.fc1_w) << 1.0, -1.0, 0.5, 2.0;  // rows: hidden units; cols: [h_i, h_j]
    p.value(k.fc1_b) << 0.0, -1.0;
    p.value(k.fc2_w) << 2.0, 3.0;
    p.value(k.fc2_b) << 0.5;
    Mat h(2, 1);
    h << 1.0, 2.0;
    auto by_hand = [](double hi, double hj) {
        const double u1 = std::max(0.0, hi - hj);
        const double u2 = std::max(0.0, 0.5 * hi + 2.0 * hj - 1.0);
        return 2.0 * u1 + 3.0 * u2 + 0.5;
    };
    const Mat logits = link_logits(p, k, h);
    REQUIRE(logits.rows() == 2);
    REQUIRE(logits.cols() == 2);
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) CHECK(logits(i, j) == doctest::Approx(by_hand(h(i), h(j))).epsilon(1e-14));
    // (0,1): u1 = 0, u2 = 0.5 + 4 - 1 = 3.5 -> 11
    CHECK(logits(0, 1) == doctest::Approx(11.0));
}

TEST_CASE("equal embeddings give constant logits, n=6 gives 36 entries") {
    Learner l(kSmall, 3, 4, 7);
    const Mat h = Mat::Constant(6, 3, 0.7);
    const Mat logits = link_logits(l.params, l.s.link, h);
    CHECK(logits.size() == 36);
    CHECK((logits.array() - logits(0, 0)).abs().maxCoeff() == 0.0);
}

TEST_CASE("node permutation acts consistently") {
    Learner l(kSmall, 3, 4, 8);
    std::mt19937_64 rng(8);
    const Mat x = oracle::random_matrix(4, 16, rng);
    const Mat p = permutation({2, 0, 3, 1});
    const Mat h = encode_features(l.params, l.s.encoder, x);
    const Mat hp = encode_features(l.params, l.s.encoder, p * x);
    CHECK((hp - p * h).norm() < 1e-12);
    const Mat lg = link_logits(l.params, l.s.link, h);
    const Mat lgp = link_logits(l.params, l.s.link, hp);
    CHECK((lgp - p * lg * p.transpose()).norm() < 1e-12);

    ad::Tape tape;
    const Mat noise = oracle::random_matrix(4, 4, rng);
    const Mat soft = relaxed_adjacency(tape.constant(lg), noise, 0.5).value();
    const Mat softp = relaxed_adjacency(tape.constant(lgp), p * noise * p.transpose(), 0.5).value();
    CHECK((softp - p * soft * p.transpose()).norm() < 1e-12);
}

TEST_CASE("edge frequencies follow sigmoid(logit)") {
    const int draws = 10000;
    for (double logit : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        Rng rng(static_cast<std::uint64_t>(100 + logit));
        const Mat logits = Mat::Constant(1, 1, logit);
        int on = 0;
        for (int d = 0; d < draws; ++d) on += sample_adjacency(logits, 0.5, rng).hard(0, 0) > 0.5 ? 1 : 0;
        const double p = oracle::sigmoid(logit);
        const double se = std::sqrt(p * (1.0 - p) / draws);
        CHECK(std::abs(on / static_cast<double>(draws) - p) < 3.0 * se);
        if (logit == 0.0) CHECK(std::abs(on / static_cast<double>(draws) - 0.5) < 0.02);
    }
    Rng rng(9);
    int on = 0;
    for (int d = 0; d < draws; ++d) on += sample_adjacency(Mat::Constant(1, 1, 20.0), 1.0, rng).hard(0, 0) > 0.5;
    CHECK(on / static_cast<double>(draws) > 0.999);
}

TEST_CASE("samples are binary, soft values open-interval, and reproducible") {
    std::mt19937_64 g(10);
    const Mat logits = oracle::random_matrix(5, 5, g, 2.0);
    Rng a(42), b(42);
    const AdjacencySample s1 = sample_adjacency(logits, 0.5, a);
    const AdjacencySample s2 = sample_adjacency(logits, 0.5, b);
    CHECK(s1.hard == s2.hard);
    CHECK(s1.soft == s2.soft);
    CHECK((s1.hard.array() == 0.0 || s1.hard.array() == 1.0).all());
    CHECK((s1.soft.array() > 0.0 && s1.soft.array() < 1.0).all());
    CHECK(s1.hard == (s1.soft.array() > 0.5).cast<double>().matrix());
    CHECK_THROWS_AS(sample_adjacency(logits, 0.0, a), ConfigError);
}

TEST_CASE("soft sample gradient matches finite differences") {
    std::mt19937_64 g(11);
    for (double temp : {0.3, 0.5, 1.0}) {
        const Mat logits = oracle::random_matrix(4, 4, g);
        const Mat noise = oracle::random_matrix(4, 4, g);
        const Mat weight = oracle::random_matrix(4, 4, g);
        auto f = [&](const Mat& lg) {
            ad::Tape t;
            return (relaxed_adjacency(t.constant(lg), noise, temp).value().array() * weight.array()).sum();
        };
        ad::Tape tape;
        const ad::Var lg = tape.variable(logits);
        const ad::Var st = straight_through_adjacency(relaxed_adjacency(lg, noise, temp));
        tape.backward(ad::sum(ad::mul(st, tape.constant(weight))));
        CHECK(oracle::max_relative_error(tape.grad(lg), oracle::central_difference(f, logits)) < 1e-4);
    }
}

TEST_CASE("edge probabilities") {
    Mat lg(1, 3);
    lg << 0.0, -20.0, 800.0;
    const Mat p = edge_probabilities(lg);
    CHECK(p(0, 0) == 0.5);
    CHECK(p(0, 1) < 1e-8);
    CHECK(p(0, 2) == 1.0);
    CHECK(threshold_adjacency(lg) == (Mat(1, 3) << 0, 0, 1).finished());
}

}
