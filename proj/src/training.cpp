#include "gaets/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace gaets {

std::string to_string(Mode mode) { return mode == Mode::gaets ? "GAETS" : "GTS"; }

Mode mode_from_string(const std::string& s) {
    std::string up = s;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (up == "GAETS") return Mode::gaets;
    if (up == "GTS") return Mode::gts;
    throw ConfigError("unknown mode '" + s + "' (expected GAETS or GTS)");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(lr_decay > 0)) throw ConfigError("lr_decay must be positive");
    if (!(adam_epsilon > 0)) throw ConfigError("adam_epsilon must be positive");
    if (input_horizon < 1 || horizon < 1) throw ConfigError("input_horizon and horizon must be >= 1");
    if (!(temperature > 0)) throw ConfigError("temperature must be positive");
    if (!(ss_decay > 0)) throw ConfigError("ss_decay must be positive");
    if (order < 0) throw ConfigError("diffusion order K must be >= 0");
    if (hidden < 1 || num_layers < 1 || d_embed < 1 || link_hidden < 1 || d_sem < 1 || sem_hidden < 1) {
        throw ConfigError("model widths must be >= 1");
    }
    if (!(ae_weight >= 0)) throw ConfigError("ae_weight must be >= 0");
}

Model make_model(const TrainConfig& config, Index n_vars) {
    config.validate();
    if (n_vars < 1) throw ConfigError("model needs at least one variable");
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0u};
    Rng rng(seq);
    Model m;
    m.config = config;
    m.n_vars = n_vars;
    m.structure = make_structure_learner(m.params, config.conv, config.d_embed, config.link_hidden, rng);
    m.sem = make_sem(m.params, config.input_horizon, config.d_sem, config.sem_hidden, rng);
    m.forecaster = make_forecaster(m.params, config.input_horizon, config.horizon, config.hidden, config.order,
                                   config.num_layers, rng);
    return m;
}

double base_loss(const Matrix& pred, const Matrix& truth, BaseLossKind kind) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
        throw DimensionError("base_loss: prediction is " + std::to_string(pred.rows()) + "x" +
                             std::to_string(pred.cols()) + ", truth is " + std::to_string(truth.rows()) + "x" +
                             std::to_string(truth.cols()));
    }
    if (pred.size() == 0) return 0.0;
    // Rows are horizon steps; averaging every entry equals the mean over steps
    // of the per-step mean deviation.
    const auto diff = (pred - truth).array();
    return kind == BaseLossKind::l1 ? diff.abs().mean() : diff.square().mean();
}

namespace {

ad::Var base_loss_var(const ad::Var& pred, const Matrix& truth, BaseLossKind kind) {
    return kind == BaseLossKind::l1 ? ad::mean_abs_error(pred, truth) : ad::mean_squared_error(pred, truth);
}

}  // namespace

StepResult run_step(const Model& model, const Matrix& encoder_series, const Matrix& inputs, const Matrix& targets,
                    const StepNoise& noise, const StepOptions& options) {
    const auto& cfg = model.config;
    const Index n = model.n_vars;
    if (noise.gumbel.rows() != n || noise.gumbel.cols() != n) throw DimensionError("Gumbel noise must be n x n");

    ad::Tape tape;
    Binder bind(tape, model.params, options.compute_gradients);

    ad::Var logits;
    if (options.logits_override != nullptr) {
        logits = options.compute_gradients ? tape.variable(*options.logits_override)
                                           : tape.constant(*options.logits_override);
    } else {
        if (encoder_series.rows() != n) throw DimensionError("encoder series must have one row per variable");
        logits = link_logits(bind, model.structure.link, encode_features(bind, model.structure.encoder, encoder_series));
    }
    const ad::Var soft = relaxed_adjacency(logits, noise.gumbel, cfg.temperature);
    const ad::Var adjacency = options.straight_through ? straight_through_adjacency(soft) : soft;
    const Supports supports = make_supports(adjacency);

    DecoderPolicy policy;
    policy.targets = &targets;
    policy.teacher = noise.teacher;
    const ad::Var pred = forecast(bind, model.forecaster, supports, inputs, policy);
    const ad::Var base = base_loss_var(pred, targets, cfg.base_loss);

    ad::Var total = base;
    double ae_value = 0.0;
    if (cfg.mode == Mode::gaets) {
        ad::Var ae = autoencoder_loss(bind, model.sem, tape.constant(inputs), adjacency);
        if (cfg.ae_weight != 1.0) ae = ad::scale(ae, cfg.ae_weight);
        ae_value = ae.scalar();
        total = ad::add(base, ae);
    }

    StepResult out;
    out.loss.base = base.scalar();
    out.loss.autoencoder = ae_value;
    out.loss.total = total.scalar();
    out.logits = logits.value();
    out.adjacency.soft = soft.value();
    out.adjacency.hard = (soft.value().array() > 0.5).cast<double>().matrix();
    out.adjacency.temperature = cfg.temperature;
    out.prediction = pred.value();
    if (options.compute_gradients && std::isfinite(out.loss.total)) {
        tape.backward(total);
        out.gradients = bind.gradients();
        if (options.logits_override != nullptr) out.logits_gradient = tape.grad(logits);
    }
    return out;
}

LossBreakdown total_loss(const Model& model, const Matrix& inputs, const Matrix& targets, const Matrix& adjacency) {
    ad::Tape tape;
    Binder bind(tape, model.params, false);
    const ad::Var a = tape.constant(adjacency);
    const ad::Var pred = forecast(bind, model.forecaster, make_supports(a), inputs);
    LossBreakdown out;
    out.base = base_loss(pred.value(), targets, model.config.base_loss);
    if (model.config.mode == Mode::gaets) {
        out.autoencoder = model.config.ae_weight * autoencoder_loss(bind, model.sem, tape.constant(inputs), a).scalar();
    }
    out.total = out.base + out.autoencoder;
    return out;
}

double teacher_probability(double decay, std::int64_t step) {
    return decay / (decay + std::exp(static_cast<double>(step) / decay));
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m = make_model(ckpt.config, ckpt.n_vars);
    for (const auto& e : ckpt.params.entries()) {
        const std::size_t i = m.params.index_of(e.name);
        if (m.params.value(i).rows() != e.value.rows() || m.params.value(i).cols() != e.value.cols()) {
            throw DataError("checkpoint parameter '" + e.name + "' has the wrong shape");
        }
        m.params.value(i) = e.value;
    }
    if (ckpt.params.size() != m.params.size()) throw DataError("checkpoint parameter count does not match the model");
    return m;
}

PreparedData prepare_data(const RawSeries& source, const RawSeries* test_source, Index input_horizon, Index horizon,
                          Index stride, const SplitSpec& spec) {
    source.validate();
    const WindowedDataset raw_windows = make_windows(source, input_horizon, horizon, stride);
    const DatasetSplits raw_splits = split(raw_windows, spec);
    if (raw_splits.train.empty()) throw DataError("no training windows: series too short for the window sizes");

    std::vector<char> covered(static_cast<std::size_t>(source.length()), 0);
    for (const Index s : raw_splits.train.starts) {
        for (Index c = s; c < s + input_horizon + horizon; ++c) covered[static_cast<std::size_t>(c)] = 1;
    }
    const auto count = static_cast<Index>(std::count(covered.begin(), covered.end(), 1));
    RawSeries train_range;
    train_range.var_names = source.var_names;
    train_range.values.resize(source.n_vars(), count);
    Index k = 0;
    for (Index c = 0; c < source.length(); ++c) {
        if (covered[static_cast<std::size_t>(c)]) train_range.values.col(k++) = source.values.col(c);
    }

    PreparedData out;
    out.stats = compute_norm_stats(train_range);
    out.var_names = source.var_names;
    out.encoder_series = apply_norm(train_range, out.stats).values;
    out.splits = split(make_windows(apply_norm(source, out.stats), input_horizon, horizon, stride), spec);
    if (test_source != nullptr) {
        if (test_source->var_names != source.var_names) throw SchemaError("test data columns differ from training data");
        out.splits.test = make_windows(apply_norm(*test_source, out.stats), input_horizon, horizon, stride);
    }
    return out;
}

Matrix current_logits(const Model& model, const Matrix& encoder_series) {
    ad::Tape tape;
    Binder bind(tape, model.params, false);
    return link_logits(bind, model.structure.link, encode_features(bind, model.structure.encoder, encoder_series))
        .value();
}

double validation_loss(const Model& model, const Matrix& logits, const WindowedDataset& data, int batch_size) {
    if (data.empty()) throw DataError("validation split is empty");
    const Matrix adjacency = threshold_adjacency(logits);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<const Matrix*> in, tg;
        for (std::size_t i = begin; i < end; ++i) {
            in.push_back(&data.inputs[i]);
            tg.push_back(&data.targets[i]);
        }
        ad::Tape tape;
        Binder bind(tape, model.params, false);
        const Supports supports = make_supports(tape.constant(adjacency));
        const ad::Var pred = forecast(bind, model.forecaster, supports, pack_batch(in));
        weighted += base_loss(pred.value(), pack_batch(tg), model.config.base_loss) * static_cast<double>(end - begin);
    }
    return weighted / static_cast<double>(data.size());
}

namespace {

Rng stream(std::uint64_t seed, std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    return Rng(seq);
}

Checkpoint snapshot(const Model& model, const PreparedData& data, int epoch, double val_base) {
    Checkpoint c;
    c.config = model.config;
    c.n_vars = model.n_vars;
    c.var_names = data.var_names;
    c.stats = data.stats;
    c.params = model.params;
    c.logits = current_logits(model, data.encoder_series);
    c.epoch = epoch;
    c.val_base = val_base;
    c.config_hash = config_hash(model.config);
    return c;
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
    double lr = cfg.learning_rate;
    for (const int m : cfg.lr_milestones) {
        if (epoch >= m) lr *= cfg.lr_decay;
    }
    return lr;
}

}  // namespace

TrainResult train(const TrainConfig& config, const PreparedData& data, const EpochCallback& on_epoch) {
    config.validate();
    if (data.splits.train.empty()) throw DataError("training split is empty");
    if (data.splits.val.empty()) throw DataError("validation split is empty");
    if (data.splits.train.input_horizon != config.input_horizon || data.splits.train.horizon != config.horizon) {
        throw ConfigError("dataset windows (" + std::to_string(data.splits.train.input_horizon) + ", " +
                          std::to_string(data.splits.train.horizon) + ") do not match the configured horizons");
    }
    const Index n = static_cast<Index>(data.var_names.size());
    Model model = make_model(config, n);
    Rng order_rng = stream(config.seed, 1);
    Rng noise_rng = stream(config.seed, 2);

    TrainResult result;
    result.best = snapshot(model, data, -1, std::numeric_limits<double>::infinity());
    if (config.epochs == 0) return result;

    Adam adam(model.params, Adam::Options{config.learning_rate, 0.9, 0.999, config.adam_epsilon});
    const auto& train_set = data.splits.train;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::int64_t global_step = 0;
    const auto t0 = std::chrono::steady_clock::now();
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        adam.set_learning_rate(learning_rate_at(config, epoch));
        if (config.shuffle) std::shuffle(order.begin(), order.end(), order_rng);

        LossBreakdown sum;
        std::size_t seen = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            std::vector<const Matrix*> in, tg;
            for (std::size_t k = begin; k < end; ++k) {
                in.push_back(&train_set.inputs[order[k]]);
                tg.push_back(&train_set.targets[order[k]]);
            }
            const Matrix inputs = pack_batch(in);
            const Matrix targets = pack_batch(tg);

            StepNoise noise;
            noise.gumbel = draw_gumbel_difference(n, noise_rng);
            noise.teacher.assign(static_cast<std::size_t>(config.horizon), 0);
            if (config.scheduled_sampling) {
                const double p = teacher_probability(config.ss_decay, global_step);
                for (auto& f : noise.teacher) f = coin(noise_rng) < p ? 1 : 0;
            }

            StepResult step = run_step(model, data.encoder_series, inputs, targets, noise);
            if (!std::isfinite(step.loss.base) || !std::isfinite(step.loss.autoencoder)) {
                const std::string term = std::isfinite(step.loss.base) ? "autoencoder" : "base";
                throw TrainingDiverged("loss term '" + term + "' became non-finite at epoch " + std::to_string(epoch),
                                       term, result.best);
            }
            clip_global_norm(step.gradients, config.max_grad_norm);
            adam.step(model.params, step.gradients);
            ++global_step;

            const auto w = static_cast<double>(end - begin);
            sum.base += step.loss.base * w;
            sum.autoencoder += step.loss.autoencoder * w;
            sum.total += step.loss.total * w;
            seen += end - begin;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train.base = sum.base / static_cast<double>(seen);
        rec.train.autoencoder = sum.autoencoder / static_cast<double>(seen);
        rec.train.total = sum.total / static_cast<double>(seen);
        rec.learning_rate = adam.learning_rate();
        rec.seed = config.seed;
        rec.logits = current_logits(model, data.encoder_series);
        rec.val_base = validation_loss(model, rec.logits, data.splits.val, config.batch_size);
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(rec.val_base)) {
            throw TrainingDiverged("validation loss became non-finite at epoch " + std::to_string(epoch), "base",
                                   result.best);
        }
        if (rec.val_base < result.best.val_base) result.best = snapshot(model, data, epoch, rec.val_base);
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

// ---- gradient check -------------------------------------------------------------------

TrainConfig probe_config(const GradcheckProbe& probe, Mode mode, std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.mode = mode;
    c.input_horizon = probe.input_horizon;
    c.horizon = probe.horizon;
    c.order = 2;
    c.hidden = 4;
    c.d_embed = 4;
    c.link_hidden = 4;
    c.d_sem = 3;
    c.sem_hidden = 4;
    c.conv = ConvSpec{3, 2, 2, 3, 2, 2};
    c.temperature = 0.5;
    return c;
}

namespace {

std::string group_of(const std::string& name) {
    static const char* const kGroups[] = {"forecaster.encoder", "forecaster.decoder", "forecaster.projection",
                                          "encoder", "link", "sem"};
    for (const char* g : kGroups) {
        if (name.rfind(g, 0) == 0) return g;
    }
    return name;
}

bool selected(const GradcheckOptions& options, const std::string& name) {
    if (!options.groups) return true;
    for (const auto& prefix : *options.groups) {
        if (name.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

struct ProbeInstance {
    Matrix series;
    Matrix inputs;
    Matrix targets;
    StepNoise noise;
};

ProbeInstance draw_probe(const GradcheckProbe& probe, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    auto fill = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < c; ++j) m(i, j) = normal(rng);
        }
        return m;
    };
    ProbeInstance p;
    p.series = fill(probe.n_vars, probe.series_length);
    p.inputs = fill(probe.input_horizon, probe.n_vars * probe.batch);
    p.targets = fill(probe.horizon, probe.n_vars * probe.batch);
    p.noise.gumbel = draw_gumbel_difference(probe.n_vars, rng);
    p.noise.teacher.resize(static_cast<std::size_t>(probe.horizon));
    for (auto& f : p.noise.teacher) f = coin(rng) < 0.5 ? 1 : 0;
    return p;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckProbe& probe, Mode mode, const GradcheckOptions& options) {
    if (probe.n_vars < 1 || probe.n_vars > 4 || probe.input_horizon > 8 || probe.horizon > 4) {
        throw ConfigError("gradcheck probes need n <= 4, T <= 8, tau <= 4");
    }
    if (!(options.epsilon >= 1e-6 && options.epsilon <= 1e-4)) throw ConfigError("epsilon must lie in [1e-6, 1e-4]");

    Model model = make_model(probe_config(probe, mode, options.seed), probe.n_vars);
    Rng rng = stream(options.seed, 7);

    GradcheckReport report;
    StepOptions step_opts;
    step_opts.straight_through = options.straight_through;
    const double eps = options.epsilon;

    // One pass over a drawn instance. Returns false when some probed entry sits
    // on a ReLU/abs kink (one-sided slopes disagree) so the caller redraws.
    auto check_instance = [&](const ProbeInstance& inst, const StepResult& base) {
        report.groups.clear();
        report.probed = 0;
        report.max_rel_error = 0.0;

        StepOptions logit_opts = step_opts;
        logit_opts.logits_override = &base.logits;
        const StepResult logit_step = run_step(model, inst.series, inst.inputs, inst.targets, inst.noise, logit_opts);
        std::vector<Matrix> grads = base.gradients;
        Matrix logit_grad = logit_step.logits_gradient;
        if (options.corrupt) options.corrupt(grads, logit_grad);

        auto loss_at = [&](const Matrix* logits_override) {
            StepOptions o = step_opts;
            o.compute_gradients = false;
            o.logits_override = logits_override;
            return run_step(model, inst.series, inst.inputs, inst.targets, inst.noise, o).loss.total;
        };
        const double center = base.loss.total;

        auto record = [&](const std::string& group, const std::string& entry, double analytic, double up,
                          double down) {
            const double fwd = (up - center) / eps;
            const double bwd = (center - down) / eps;
            if (std::abs(fwd - bwd) > 1e-2 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-7) return false;
            const double numeric = (up - down) / (2 * eps);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
            const double rel = std::abs(analytic - numeric) / denom;
            auto it = std::find_if(report.groups.begin(), report.groups.end(),
                                   [&](const GradcheckGroup& g) { return g.name == group; });
            if (it == report.groups.end()) {
                report.groups.push_back(GradcheckGroup{group, 0, 0.0, {}, true});
                it = report.groups.end() - 1;
            }
            ++it->probed;
            ++report.probed;
            if (analytic != 0.0 || numeric != 0.0) it->zero_gradient = false;
            if (rel >= it->max_rel_error) {
                it->max_rel_error = rel;
                it->worst_entry = entry;
            }
            report.max_rel_error = std::max(report.max_rel_error, rel);
            return true;
        };

        auto pick = [&](Index size) {
            std::vector<Index> idx(static_cast<std::size_t>(size));
            std::iota(idx.begin(), idx.end(), Index{0});
            if (options.max_per_group > 0 && idx.size() > options.max_per_group) {
                std::shuffle(idx.begin(), idx.end(), rng);
                idx.resize(options.max_per_group);
                std::sort(idx.begin(), idx.end());
            }
            return idx;
        };

        for (std::size_t p = 0; p < model.params.size(); ++p) {
            const std::string& name = model.params.name(p);
            if (!selected(options, name)) continue;
            Matrix& value = model.params.value(p);
            for (const Index k : pick(value.size())) {
                const double saved = value.data()[k];
                value.data()[k] = saved + eps;
                const double up = loss_at(nullptr);
                value.data()[k] = saved - eps;
                const double down = loss_at(nullptr);
                value.data()[k] = saved;
                if (!record(group_of(name), name + "[" + std::to_string(k) + "]", grads[p].data()[k], up, down)) {
                    return false;
                }
            }
        }

        if (selected(options, "edge_logits")) {
            Matrix logits = base.logits;
            for (const Index k : pick(logits.size())) {
                const double saved = logits.data()[k];
                logits.data()[k] = saved + eps;
                const double up = loss_at(&logits);
                logits.data()[k] = saved - eps;
                const double down = loss_at(&logits);
                logits.data()[k] = saved;
                if (!record("edge_logits", "edge_logits[" + std::to_string(k) + "]", logit_grad.data()[k], up,
                            down)) {
                    return false;
                }
            }
        }
        return true;
    };

    for (int attempt = 0;; ++attempt) {
        if (attempt == 20) throw NumericError("gradcheck probe stayed at a non-differentiable point", "probe");
        const ProbeInstance inst = draw_probe(probe, rng);
        const StepResult base = run_step(model, inst.series, inst.inputs, inst.targets, inst.noise, step_opts);
        const bool residual_kink = ((base.prediction - inst.targets).array().abs() < options.kink_margin).any();
        const bool st_kink =
            options.straight_through && ((base.adjacency.soft.array() - 0.5).abs() < options.kink_margin).any();
        if (!residual_kink && !st_kink && check_instance(inst, base)) {
            // A group with no gradient at all (dead ReLUs upstream) checks
            // nothing; GTS leaves the SEM without gradient by design.
            const bool dead = std::any_of(report.groups.begin(), report.groups.end(), [&](const GradcheckGroup& g) {
                return g.zero_gradient && !(mode == Mode::gts && g.name == "sem");
            });
            if (!dead) break;
        }
        ++report.resamples;
    }

    report.vacuous = report.probed == 0;
    return report;
}

}  // namespace gaets
