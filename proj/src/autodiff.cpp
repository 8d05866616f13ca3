#include "gaets/autodiff.hpp"

#include "gaets/errors.hpp"

#include <cmath>
#include <string>

namespace gaets::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
        node.grad = g;
    } else {
        node.grad += g;
    }
}

void Tape::backward(const Var& out) {
    if (out.rows() != 1 || out.cols() != 1) {
        throw DimensionError("backward() without a seed needs a 1x1 output");
    }
    backward(out, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& out, const Matrix& seed) {
    for (auto& node : nodes_) node.grad.resize(0, 0);
    accumulate(out.id(), seed);
    for (int id = out.id(); id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.backward || node.grad.size() == 0) continue;
        // Closures only accumulate into lower ids, so node.grad is stable here.
        node.backward(*this, node.grad);
    }
}

Matrix Tape::grad(const Var& v) const {
    const auto& node = nodes_[static_cast<std::size_t>(v.id())];
    if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
    return node.grad;
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    const int ia = a.id(), ib = b.id();
    const Var in[] = {a, b};
    return a.tape()->push(a.value() + b.value(), in, [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    const int ia = a.id(), ib = b.id();
    const Var in[] = {a, b};
    return a.tape()->push(a.value() - b.value(), in, [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, -g);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    const int ia = a.id(), ib = b.id();
    const Var in[] = {a, b};
    return a.tape()->push(a.value().cwiseProduct(b.value()), in, [ia, ib](Tape& t, const Matrix& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var scale(const Var& a, double s) {
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push(a.value() * s, in, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var one_minus(const Var& a) {
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push((1.0 - a.value().array()).matrix(), in,
                          [ia](Tape& t, const Matrix& g) { t.accumulate(ia, -g); });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                             std::to_string(b.rows()) + " differ");
    }
    const int ia = a.id(), ib = b.id();
    const Var in[] = {a, b};
    return a.tape()->push(a.value() * b.value(), in, [ia, ib](Tape& t, const Matrix& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var transpose(const Var& a) {
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push(a.value().transpose(), in,
                          [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add_bias(const Var& x, const Var& b) {
    if (b.cols() != 1 || b.rows() != x.rows()) throw DimensionError("add_bias: bias must be a column of x.rows()");
    const int ix = x.id(), ib = b.id();
    const Var in[] = {x, b};
    Matrix out = x.value().colwise() + b.value().col(0);
    return x.tape()->push(std::move(out), in, [ix, ib](Tape& t, const Matrix& g) {
        t.accumulate(ix, g);
        if (t.requires_grad(ib)) t.accumulate(ib, g.rowwise().sum());
    });
}

namespace {

template <typename F, typename D>
Var unary(const Var& a, F forward, D derivative_from_output) {
    Tape* tape = a.tape();
    const int ia = a.id();
    const int io = static_cast<int>(tape->size());
    const Var in[] = {a};
    return tape->push(a.value().unaryExpr(forward), in, [ia, io, derivative_from_output](Tape& t, const Matrix& g) {
        t.accumulate(ia, g.cwiseProduct(t.value(io).unaryExpr(derivative_from_output)));
    });
}

double stable_sigmoid(double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

Var sigmoid(const Var& a) {
    return unary(a, stable_sigmoid, [](double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
    return unary(a, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
    return unary(a, [](double v) { return v > 0 ? v : 0.0; }, [](double y) { return y > 0 ? 1.0 : 0.0; });
}

Var vstack(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("vstack: no parts");
    const Index cols = parts[0].cols();
    Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw DimensionError("vstack: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Index>> blocks;
    Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        blocks.emplace_back(p.id(), p.rows());
        r += p.rows();
    }
    return parts[0].tape()->push(std::move(out), parts, [blocks](Tape& t, const Matrix& g) {
        Index r0 = 0;
        for (const auto& [id, n] : blocks) {
            if (t.requires_grad(id)) t.accumulate(id, g.middleRows(r0, n));
            r0 += n;
        }
    });
}

Var hstack(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("hstack: no parts");
    const Index rows = parts[0].rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw DimensionError("hstack: row counts differ");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Index>> blocks;
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        blocks.emplace_back(p.id(), p.cols());
        c += p.cols();
    }
    return parts[0].tape()->push(std::move(out), parts, [blocks](Tape& t, const Matrix& g) {
        Index c0 = 0;
        for (const auto& [id, n] : blocks) {
            if (t.requires_grad(id)) t.accumulate(id, g.middleCols(c0, n));
            c0 += n;
        }
    });
}

Var row_block(const Var& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw DimensionError("row_block: out of range");
    const int ia = a.id();
    const Index rows = a.rows(), cols = a.cols();
    const Var in[] = {a};
    return a.tape()->push(a.value().middleRows(start, count), in,
                          [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                              Matrix full = Matrix::Zero(rows, cols);
                              full.middleRows(start, count) = g;
                              t.accumulate(ia, full);
                          });
}

Var col_block(const Var& a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw DimensionError("col_block: out of range");
    const int ia = a.id();
    const Index rows = a.rows(), cols = a.cols();
    const Var in[] = {a};
    return a.tape()->push(a.value().middleCols(start, count), in,
                          [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                              Matrix full = Matrix::Zero(rows, cols);
                              full.middleCols(start, count) = g;
                              t.accumulate(ia, full);
                          });
}

Var reshape(const Var& a, Index rows, Index cols) {
    if (rows * cols != a.value().size()) throw DimensionError("reshape: element count changes");
    const int ia = a.id();
    const Index r0 = a.rows(), c0 = a.cols();
    const Var in[] = {a};
    Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    return a.tape()->push(std::move(out), in, [ia, r0, c0](Tape& t, const Matrix& g) {
        t.accumulate(ia, Eigen::Map<const Matrix>(g.data(), r0, c0));
    });
}

Var gather_cols(const Var& a, std::vector<Index> index) {
    Matrix out(a.rows(), static_cast<Index>(index.size()));
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] < 0 || index[k] >= a.cols()) throw DimensionError("gather_cols: index out of range");
        out.col(static_cast<Index>(k)) = a.value().col(index[k]);
    }
    const int ia = a.id();
    const Index rows = a.rows(), cols = a.cols();
    const Var in[] = {a};
    return a.tape()->push(std::move(out), in, [ia, rows, cols, index = std::move(index)](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(rows, cols);
        for (std::size_t k = 0; k < index.size(); ++k) full.col(index[k]) += g.col(static_cast<Index>(k));
        t.accumulate(ia, full);
    });
}

Var graph_mix(const Var& x, const Var& p) {
    const Index n = p.rows();
    if (p.cols() != n) throw DimensionError("graph_mix: mixing matrix must be square");
    if (n == 0 || x.cols() % n != 0) throw DimensionError("graph_mix: columns are not a multiple of the node count");
    const Index d = x.rows();
    const Index batch = x.cols() / n;
    // Column i * B + b of x occupies memory [(i * B + b) * d, ...), so x viewed
    // as a (d * B) x n matrix has one column per node.
    Eigen::Map<const Matrix> z(x.value().data(), d * batch, n);
    Matrix out(d, x.cols());
    Eigen::Map<Matrix>(out.data(), d * batch, n).noalias() = z * p.value().transpose();
    const int ix = x.id(), ip = p.id();
    const Var in[] = {x, p};
    return x.tape()->push(std::move(out), in, [ix, ip, d, batch, n](Tape& t, const Matrix& g) {
        Eigen::Map<const Matrix> gz(g.data(), d * batch, n);
        if (t.requires_grad(ix)) {
            Matrix gx(d, batch * n);
            Eigen::Map<Matrix>(gx.data(), d * batch, n).noalias() = gz * t.value(ip);
            t.accumulate(ix, gx);
        }
        if (t.requires_grad(ip)) {
            Eigen::Map<const Matrix> z(t.value(ix).data(), d * batch, n);
            t.accumulate(ip, gz.transpose() * z);
        }
    });
}

Var row_normalize(const Var& a) {
    const Eigen::VectorXd s = a.value().rowwise().sum();
    Matrix out = Matrix::Zero(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        if (s(i) != 0.0) out.row(i) = a.value().row(i) / s(i);
    }
    const int ia = a.id();
    const int io = static_cast<int>(a.tape()->size());
    const Var in[] = {a};
    return a.tape()->push(std::move(out), in, [ia, io, s](Tape& t, const Matrix& g) {
        const Matrix& p = t.value(io);
        Matrix ga = Matrix::Zero(g.rows(), g.cols());
        for (Index i = 0; i < g.rows(); ++i) {
            if (s(i) == 0.0) continue;
            const double inner = g.row(i).dot(p.row(i));
            ga.row(i) = (g.row(i).array() - inner).matrix() / s(i);
        }
        t.accumulate(ia, ga);
    });
}

Var straight_through(Matrix hard, const Var& soft) {
    if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
        throw DimensionError("straight_through: hard and soft shapes differ");
    }
    const int is = soft.id();
    const Var in[] = {soft};
    return soft.tape()->push(std::move(hard), in, [is](Tape& t, const Matrix& g) { t.accumulate(is, g); });
}

Var conv1d(const Var& x, const Var& w, Index segments) {
    const Index c_in = x.rows();
    if (segments <= 0 || x.cols() % segments != 0) throw DimensionError("conv1d: bad segment count");
    if (w.cols() % c_in != 0) throw DimensionError("conv1d: kernel width does not match input channels");
    const Index len = x.cols() / segments;
    const Index k = w.cols() / c_in;
    const Index out_len = len - k + 1;
    if (out_len < 1) throw DimensionError("conv1d: segment shorter than kernel");

    Matrix patches(c_in * k, segments * out_len);
    const Matrix& xv = x.value();
    for (Index s = 0; s < segments; ++s) {
        for (Index t = 0; t < out_len; ++t) {
            const Index col = s * out_len + t;
            for (Index ci = 0; ci < c_in; ++ci) {
                patches.block(ci * k, col, k, 1) = xv.block(ci, s * len + t, 1, k).transpose();
            }
        }
    }
    Matrix out = w.value() * patches;
    const int ix = x.id(), iw = w.id();
    const Var in[] = {x, w};
    return x.tape()->push(
        std::move(out), in,
        [ix, iw, c_in, k, len, out_len, segments, patches = std::move(patches)](Tape& t, const Matrix& g) {
            if (t.requires_grad(iw)) t.accumulate(iw, g * patches.transpose());
            if (t.requires_grad(ix)) {
                const Matrix gp = t.value(iw).transpose() * g;
                Matrix gx = Matrix::Zero(c_in, segments * len);
                for (Index s = 0; s < segments; ++s) {
                    for (Index tt = 0; tt < out_len; ++tt) {
                        const Index col = s * out_len + tt;
                        for (Index ci = 0; ci < c_in; ++ci) {
                            gx.block(ci, s * len + tt, 1, k) += gp.block(ci * k, col, k, 1).transpose();
                        }
                    }
                }
                t.accumulate(ix, gx);
            }
        });
}

Var segment_pool(const Var& x, Index segments, std::vector<std::pair<Index, Index>> bins) {
    if (segments <= 0 || x.cols() % segments != 0) throw DimensionError("segment_pool: bad segment count");
    const Index len = x.cols() / segments;
    const Index nb = static_cast<Index>(bins.size());
    for (const auto& [lo, hi] : bins) {
        if (lo < 0 || hi > len || hi <= lo) throw DimensionError("segment_pool: bin outside segment");
    }
    Matrix out(x.rows(), segments * nb);
    for (Index s = 0; s < segments; ++s) {
        for (Index q = 0; q < nb; ++q) {
            const auto [lo, hi] = bins[static_cast<std::size_t>(q)];
            out.col(s * nb + q) = x.value().middleCols(s * len + lo, hi - lo).rowwise().mean();
        }
    }
    const int ix = x.id();
    const Index rows = x.rows();
    const Var in[] = {x};
    return x.tape()->push(std::move(out), in,
                          [ix, rows, segments, len, nb, bins = std::move(bins)](Tape& t, const Matrix& g) {
                              Matrix gx = Matrix::Zero(rows, segments * len);
                              for (Index s = 0; s < segments; ++s) {
                                  for (Index q = 0; q < nb; ++q) {
                                      const auto [lo, hi] = bins[static_cast<std::size_t>(q)];
                                      const Eigen::VectorXd share = g.col(s * nb + q) / double(hi - lo);
                                      gx.middleCols(s * len + lo, hi - lo).colwise() += share;
                                  }
                              }
                              t.accumulate(ix, gx);
                          });
}

Var sum(const Var& a) {
    const int ia = a.id();
    const Index r = a.rows(), c = a.cols();
    const Var in[] = {a};
    return a.tape()->push(Matrix::Constant(1, 1, a.value().sum()), in, [ia, r, c](Tape& t, const Matrix& g) {
        t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
    });
}

Var sum_squares(const Var& a) {
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push(Matrix::Constant(1, 1, a.value().squaredNorm()), in, [ia](Tape& t, const Matrix& g) {
        t.accumulate(ia, 2.0 * g(0, 0) * t.value(ia));
    });
}

Var mean_abs_error(const Var& a, const Matrix& target) {
    if (a.rows() != target.rows() || a.cols() != target.cols()) throw DimensionError("mean_abs_error: shape mismatch");
    const double count = static_cast<double>(target.size());
    Matrix sign = (a.value() - target).unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
    const double value = (a.value() - target).cwiseAbs().sum() / count;
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push(Matrix::Constant(1, 1, value), in, [ia, count, sign = std::move(sign)](Tape& t, const Matrix& g) {
        t.accumulate(ia, sign * (g(0, 0) / count));
    });
}

Var mean_squared_error(const Var& a, const Matrix& target) {
    if (a.rows() != target.rows() || a.cols() != target.cols()) {
        throw DimensionError("mean_squared_error: shape mismatch");
    }
    const double count = static_cast<double>(target.size());
    Matrix diff = a.value() - target;
    const double value = diff.squaredNorm() / count;
    const int ia = a.id();
    const Var in[] = {a};
    return a.tape()->push(Matrix::Constant(1, 1, value), in, [ia, count, diff = std::move(diff)](Tape& t, const Matrix& g) {
        t.accumulate(ia, diff * (2.0 * g(0, 0) / count));
    });
}

}  // namespace gaets::ad
