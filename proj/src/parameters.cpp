#include "gaets/parameters.hpp"

#include "gaets/errors.hpp"

#include <cmath>

namespace gaets {

std::size_t ParameterSet::add(std::string name, Matrix init) {
    if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.push_back(Entry{std::move(name), std::move(init)});
    return entries_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) return i;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

Index ParameterSet::scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

Binder::Binder(ad::Tape& tape, const ParameterSet& params, bool trainable)
    : tape_(tape), params_(params), trainable_(trainable), bound_(params.size()) {}

ad::Var Binder::operator()(std::size_t index) {
    auto& slot = bound_.at(index);
    if (!slot.valid()) {
        slot = trainable_ ? tape_.variable(params_.value(index)) : tape_.constant(params_.value(index));
    }
    return slot;
}

std::vector<Matrix> Binder::gradients() const {
    std::vector<Matrix> out;
    out.reserve(bound_.size());
    for (std::size_t i = 0; i < bound_.size(); ++i) {
        if (bound_[i].valid()) {
            out.push_back(tape_.grad(bound_[i]));
        } else {
            out.push_back(Matrix::Zero(params_.value(i).rows(), params_.value(i).cols()));
        }
    }
    return out;
}

Matrix glorot_uniform(Index fan_out, Index fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_out, fan_in);
    // Fill in a fixed order so initialisation does not depend on Eigen internals.
    for (Index r = 0; r < fan_out; ++r) {
        for (Index c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    return w;
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads) g *= s;
    }
    return norm;
}

Adam::Adam(const ParameterSet& params, Options options) : options_(options) {
    for (const auto& e : params.entries()) {
        m_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
        v_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    }
}

void Adam::step(ParameterSet& params, const std::vector<Matrix>& grads) {
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw DimensionError("Adam::step: gradient count does not match parameters");
    }
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
        const auto m_hat = (m_[i] / c1).array();
        const auto v_hat = (v_[i] / c2).array();
        params.value(i).array() -= options_.learning_rate * m_hat / (v_hat.sqrt() + options_.epsilon);
    }
}

}  // namespace gaets
