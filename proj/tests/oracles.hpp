#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond Eigen.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

inline Mat random_binary(Eigen::Index n, std::mt19937_64& rng, double p = 0.4) {
    std::bernoulli_distribution b(p);
    Mat a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = b(rng) ? 1.0 : 0.0;
    return a;
}

// Row i divided by its sum, written with explicit loops.
inline Mat divide_rows(const Mat& a) {
    Mat out = Mat::Zero(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) s += a(i, j);
        if (s == 0.0) continue;
        for (Eigen::Index j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / s;
    }
    return out;
}

inline Mat matrix_power(const Mat& p, int k) {
    Mat out = Mat::Identity(p.rows(), p.cols());
    for (int i = 0; i < k; ++i) out = out * p;
    return out;
}

// sum_k P_f^k Y tf[k] + P_b^k Y tb[k] with every power formed from scratch.
inline Mat diffusion_brute_force(const Mat& a, const Mat& y, const std::vector<Mat>& tf, const std::vector<Mat>& tb) {
    const Mat pf = divide_rows(a);
    const Mat pb = divide_rows(a.transpose());
    Mat out = Mat::Zero(y.rows(), tf[0].cols());
    for (std::size_t k = 0; k < tf.size(); ++k) {
        out += matrix_power(pf, static_cast<int>(k)) * y * tf[k];
        out += matrix_power(pb, static_cast<int>(k)) * y * tb[k];
    }
    return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Textbook GRU on node rows: x is n x d_in, h is n x hidden. Weights act on
// [x, h] (or [x, r*h]) from the right: (d_in + hidden) x hidden.
struct PlainGru {
    Mat w_r, w_u, w_c;
    Eigen::RowVectorXd b_r, b_u, b_c;

    Mat step(const Mat& x, const Mat& h) const {
        Mat xh(x.rows(), x.cols() + h.cols());
        xh << x, h;
        Mat r = ((xh * w_r).rowwise() + b_r).unaryExpr([](double v) { return sigmoid(v); });
        Mat u = ((xh * w_u).rowwise() + b_u).unaryExpr([](double v) { return sigmoid(v); });
        Mat xrh(x.rows(), x.cols() + h.cols());
        xrh << x, r.cwiseProduct(h);
        Mat c = ((xrh * w_c).rowwise() + b_c).unaryExpr([](double v) { return std::tanh(v); });
        return u.cwiseProduct(h) + (Mat::Ones(u.rows(), u.cols()) - u).cwiseProduct(c);
    }
};

// Central differences of f at x for every entry.
inline Mat central_difference(const std::function<double(const Mat&)>& f, Mat x, double eps = 1e-6) {
    Mat g(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double keep = x(i, j);
            x(i, j) = keep + eps;
            const double up = f(x);
            x(i, j) = keep - eps;
            const double down = f(x);
            x(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * eps);
        }
    }
    return g;
}

inline double max_relative_error(const Mat& a, const Mat& b, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double d = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / d);
        }
    return worst;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counted half.
inline double pairwise_auc(const Mat& scores, const Mat& truth) {
    double good = 0.0, total = 0.0;
    const auto n = truth.rows();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j || truth(i, j) == 0.0) continue;
            for (Eigen::Index k = 0; k < n; ++k)
                for (Eigen::Index l = 0; l < n; ++l) {
                    if (k == l || truth(k, l) != 0.0) continue;
                    total += 1.0;
                    if (scores(i, j) > scores(k, l)) good += 1.0;
                    else if (scores(i, j) == scores(k, l)) good += 0.5;
                }
        }
    return good / total;
}

}  // namespace oracle
