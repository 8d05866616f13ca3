#include "gaets/diffusion_recurrent.hpp"

namespace gaets {

DiffusionFilter make_diffusion_filter(ParameterSet& params, const std::string& name, Index in, Index out,
                                      Index order, double bias_init, Rng& rng) {
    if (order < 0) throw ConfigError("diffusion degree K must be >= 0");
    DiffusionFilter f;
    f.order = order;
    f.in = in;
    f.out = out;
    for (Index k = 0; k <= order; ++k) {
        f.theta_fwd.push_back(params.add(name + ".theta_fwd." + std::to_string(k), glorot_uniform(out, in, rng)));
    }
    for (Index k = 0; k <= order; ++k) {
        f.theta_bwd.push_back(params.add(name + ".theta_bwd." + std::to_string(k), glorot_uniform(out, in, rng)));
    }
    f.bias = params.add(name + ".bias", Matrix::Constant(out, 1, bias_init));
    return f;
}

void assign_filter(ParameterSet& params, const DiffusionFilter& filter, const DiffusionWeights<double>& weights,
                   const Vector& bias) {
    if (weights.order() != filter.order) throw DimensionError("filter degree mismatch");
    for (Index k = 0; k <= filter.order; ++k) {
        const auto& tf = weights.theta_fwd[static_cast<std::size_t>(k)];
        const auto& tb = weights.theta_bwd[static_cast<std::size_t>(k)];
        if (tf.rows() != filter.in || tf.cols() != filter.out || tb.rows() != filter.in || tb.cols() != filter.out) {
            throw DimensionError("filter weight shape mismatch");
        }
        params.value(filter.theta_fwd[static_cast<std::size_t>(k)]) = tf.transpose();
        params.value(filter.theta_bwd[static_cast<std::size_t>(k)]) = tb.transpose();
    }
    if (bias.size() != filter.out) throw DimensionError("filter bias length mismatch");
    params.value(filter.bias) = bias;
}

Supports make_supports(const ad::Var& adjacency) {
    if (adjacency.rows() != adjacency.cols()) throw DimensionError("adjacency must be square");
    return {ad::row_normalize(adjacency), ad::row_normalize(ad::transpose(adjacency))};
}

ad::Var diffusion_features(const Supports& supports, const ad::Var& y, Index order) {
    if (order == 0) return y;
    std::vector<ad::Var> parts{y};
    ad::Var yf = y;
    for (Index k = 1; k <= order; ++k) {
        yf = ad::graph_mix(yf, supports.forward);
        parts.push_back(yf);
    }
    ad::Var yb = y;
    for (Index k = 1; k <= order; ++k) {
        yb = ad::graph_mix(yb, supports.backward);
        parts.push_back(yb);
    }
    return ad::vstack(parts);
}

ad::Var filter_weight(Binder& bind, const DiffusionFilter& filter) {
    std::vector<ad::Var> parts{ad::add(bind(filter.theta_fwd[0]), bind(filter.theta_bwd[0]))};
    for (Index k = 1; k <= filter.order; ++k) parts.push_back(bind(filter.theta_fwd[static_cast<std::size_t>(k)]));
    for (Index k = 1; k <= filter.order; ++k) parts.push_back(bind(filter.theta_bwd[static_cast<std::size_t>(k)]));
    return parts.size() == 1 ? parts[0] : ad::hstack(parts);
}

ad::Var diffusion_conv(Binder& bind, const DiffusionFilter& filter, const Supports& supports, const ad::Var& y) {
    if (y.rows() != filter.in) {
        throw DimensionError("diffusion_conv: features have " + std::to_string(y.rows()) + " rows, filter expects " +
                             std::to_string(filter.in));
    }
    return ad::matmul(filter_weight(bind, filter), diffusion_features(supports, y, filter.order));
}

DcgruCell make_dcgru_cell(ParameterSet& params, const std::string& name, Index d_in, Index hidden, Index order,
                          Rng& rng) {
    if (d_in < 1 || hidden < 1) throw ConfigError("DCGRU widths must be >= 1");
    DcgruCell cell;
    cell.d_in = d_in;
    cell.hidden = hidden;
    cell.reset = make_diffusion_filter(params, name + ".reset", d_in + hidden, hidden, order, 1.0, rng);
    cell.update = make_diffusion_filter(params, name + ".update", d_in + hidden, hidden, order, 1.0, rng);
    cell.candidate = make_diffusion_filter(params, name + ".candidate", d_in + hidden, hidden, order, 0.0, rng);
    return cell;
}

namespace {

void require_finite(const ad::Var& v, const char* gate) {
    if (!v.value().allFinite()) {
        throw NumericError(std::string("non-finite value in DCGRU gate ") + gate, gate);
    }
}

}  // namespace

ad::Var dcgru_cell(Binder& bind, const DcgruCell& cell, const Supports& supports, const ad::Var& x,
                   const ad::Var& h_prev) {
    if (x.rows() != cell.d_in || h_prev.rows() != cell.hidden || x.cols() != h_prev.cols()) {
        throw DimensionError("dcgru_cell: input or state shape does not match the cell");
    }
    const Index h = cell.hidden;
    const ad::Var xh_parts[] = {x, h_prev};
    const ad::Var xh = diffusion_features(supports, ad::vstack(xh_parts), cell.reset.order);

    // R and U read the same diffused input; one product serves both.
    const ad::Var w_parts[] = {filter_weight(bind, cell.reset), filter_weight(bind, cell.update)};
    const ad::Var b_parts[] = {bind(cell.reset.bias), bind(cell.update.bias)};
    const ad::Var ru = ad::sigmoid(ad::add_bias(ad::matmul(ad::vstack(w_parts), xh), ad::vstack(b_parts)));
    require_finite(ru, "reset/update");
    const ad::Var r = ad::row_block(ru, 0, h);
    const ad::Var u = ad::row_block(ru, h, h);

    const ad::Var xrh_parts[] = {x, ad::mul(r, h_prev)};
    const ad::Var xrh = diffusion_features(supports, ad::vstack(xrh_parts), cell.candidate.order);
    const ad::Var c = ad::tanh(
        ad::add_bias(ad::matmul(filter_weight(bind, cell.candidate), xrh), bind(cell.candidate.bias)));
    require_finite(c, "candidate");

    return ad::add(ad::mul(u, h_prev), ad::mul(ad::one_minus(u), c));
}

Seq2SeqForecaster make_forecaster(ParameterSet& params, Index input_horizon, Index horizon, Index hidden, Index order,
                                  Index num_layers, Rng& rng) {
    if (input_horizon < 1 || horizon < 1) throw ConfigError("input horizon and horizon must be >= 1");
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    Seq2SeqForecaster m;
    m.input_horizon = input_horizon;
    m.horizon = horizon;
    m.hidden = hidden;
    m.order = order;
    for (Index l = 0; l < num_layers; ++l) {
        m.encoder.push_back(
            make_dcgru_cell(params, "forecaster.encoder." + std::to_string(l), l == 0 ? 1 : hidden, hidden, order, rng));
    }
    for (Index l = 0; l < num_layers; ++l) {
        m.decoder.push_back(
            make_dcgru_cell(params, "forecaster.decoder." + std::to_string(l), l == 0 ? 1 : hidden, hidden, order, rng));
    }
    m.proj_w = params.add("forecaster.projection.w", glorot_uniform(1, hidden, rng));
    m.proj_b = params.add("forecaster.projection.b", Matrix::Zero(1, 1));
    return m;
}

ad::Var forecast(Binder& bind, const Seq2SeqForecaster& model, const Supports& supports, const Matrix& inputs,
                 const DecoderPolicy& policy) {
    if (inputs.rows() != model.input_horizon) {
        throw DimensionError("forecast: window has " + std::to_string(inputs.rows()) + " steps, model expects " +
                             std::to_string(model.input_horizon));
    }
    const Index n = supports.forward.rows();
    if (n == 0 || inputs.cols() % n != 0) throw DimensionError("forecast: columns are not a multiple of node count");
    if (policy.targets != nullptr &&
        (policy.targets->rows() != model.horizon || policy.targets->cols() != inputs.cols())) {
        throw DimensionError("forecast: teacher targets have the wrong shape");
    }
    auto& tape = bind.tape();
    const Index cols = inputs.cols();

    std::vector<ad::Var> state;
    for (const auto& cell : model.encoder) state.push_back(tape.constant(Matrix::Zero(cell.hidden, cols)));

    for (Index t = 0; t < model.input_horizon; ++t) {
        ad::Var x = tape.constant(inputs.row(t));
        for (std::size_t l = 0; l < model.encoder.size(); ++l) {
            state[l] = dcgru_cell(bind, model.encoder[l], supports, x, state[l]);
            x = state[l];
        }
    }

    std::vector<ad::Var> outputs;
    ad::Var next = tape.constant(inputs.row(model.input_horizon - 1));
    for (Index t = 0; t < model.horizon; ++t) {
        const bool teacher = t > 0 && policy.targets != nullptr && static_cast<std::size_t>(t) < policy.teacher.size() &&
                             policy.teacher[static_cast<std::size_t>(t)] != 0;
        ad::Var x = teacher ? tape.constant(policy.targets->row(t - 1)) : next;
        for (std::size_t l = 0; l < model.decoder.size(); ++l) {
            state[l] = dcgru_cell(bind, model.decoder[l], supports, x, state[l]);
            x = state[l];
        }
        ad::Var y = ad::add_bias(ad::matmul(bind(model.proj_w), x), bind(model.proj_b));
        outputs.push_back(y);
        next = y;
    }
    return ad::vstack(outputs);
}

Matrix forecast(const ParameterSet& params, const Seq2SeqForecaster& model, const Matrix& adjacency,
                const Matrix& window) {
    if (adjacency.rows() != window.rows()) throw DimensionError("forecast: adjacency and window disagree on nodes");
    ad::Tape tape;
    Binder bind(tape, params, false);
    const Supports supports = make_supports(tape.constant(adjacency));
    return forecast(bind, model, supports, window.transpose()).value().transpose();
}

Matrix dcgru_cell(const ParameterSet& params, const DcgruCell& cell, const Matrix& adjacency, const Matrix& x,
                  const Matrix& h_prev) {
    if (adjacency.rows() != x.rows() || x.rows() != h_prev.rows()) {
        throw DimensionError("dcgru_cell: node counts disagree");
    }
    ad::Tape tape;
    Binder bind(tape, params, false);
    const Supports supports = make_supports(tape.constant(adjacency));
    return dcgru_cell(bind, cell, supports, tape.constant(x.transpose()), tape.constant(h_prev.transpose()))
        .value()
        .transpose();
}

Matrix pack_batch(const std::vector<const Matrix*>& windows) {
    if (windows.empty()) throw DimensionError("pack_batch: empty batch");
    const Index n = windows.front()->rows();
    const Index steps = windows.front()->cols();
    const auto batch = static_cast<Index>(windows.size());
    Matrix packed(steps, n * batch);
    for (Index b = 0; b < batch; ++b) {
        const Matrix& w = *windows[static_cast<std::size_t>(b)];
        if (w.rows() != n || w.cols() != steps) throw DimensionError("pack_batch: windows differ in shape");
        for (Index i = 0; i < n; ++i) packed.col(i * batch + b) = w.row(i).transpose();
    }
    return packed;
}

std::vector<Matrix> unpack_batch(const Matrix& packed, Index n_vars) {
    if (n_vars < 1 || packed.cols() % n_vars != 0) throw DimensionError("unpack_batch: bad node count");
    const Index batch = packed.cols() / n_vars;
    std::vector<Matrix> out(static_cast<std::size_t>(batch), Matrix(n_vars, packed.rows()));
    for (Index b = 0; b < batch; ++b) {
        for (Index i = 0; i < n_vars; ++i) out[static_cast<std::size_t>(b)].row(i) = packed.col(i * batch + b).transpose();
    }
    return out;
}

}  // namespace gaets
