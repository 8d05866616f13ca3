#pragma once

#include "gaets/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gaets {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Named trainable tensors. Modules keep indices into the set; a Binder maps
/// them onto tape variables for one forward/backward pass.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Matrix value;
    };

    std::size_t add(std::string name, Matrix init);
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const;

    Matrix& value(std::size_t i) { return entries_[i].value; }
    const Matrix& value(std::size_t i) const { return entries_[i].value; }
    const std::string& name(std::size_t i) const { return entries_[i].name; }
    std::size_t size() const { return entries_.size(); }
    Index scalar_count() const;

    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

/// Lazily creates one tape variable per parameter touched in a pass.
class Binder {
public:
    Binder(ad::Tape& tape, const ParameterSet& params, bool trainable = true);

    ad::Var operator()(std::size_t index);
    ad::Tape& tape() { return tape_; }

    /// Gradients after tape.backward(); untouched parameters get zeros.
    std::vector<Matrix> gradients() const;

private:
    ad::Tape& tape_;
    const ParameterSet& params_;
    bool trainable_;
    std::vector<ad::Var> bound_;
};

/// Glorot-uniform initialisation for a fan_out x fan_in weight.
Matrix glorot_uniform(Index fan_out, Index fan_in, Rng& rng);

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

/// Adam with bias correction.
class Adam {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-3;
    };

    Adam(const ParameterSet& params, Options options);

    void step(ParameterSet& params, const std::vector<Matrix>& grads);
    void set_learning_rate(double lr) { options_.learning_rate = lr; }
    double learning_rate() const { return options_.learning_rate; }
    std::int64_t steps() const { return t_; }

private:
    Options options_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::int64_t t_ = 0;
};

}  // namespace gaets
