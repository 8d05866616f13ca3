#include "gaets/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <fstream>
#include <numeric>

namespace gaets {

MetricTriple compute_metrics(const std::vector<Matrix>& predictions, const std::vector<Matrix>& truths,
                             const Vector& thresholds) {
    if (predictions.size() != truths.size()) throw DimensionError("prediction and truth counts differ");
    if (predictions.empty()) throw DimensionError("no forecasts to score");
    double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
    Index count = 0, used = 0;
    MetricTriple m;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const Matrix& p = predictions[k];
        const Matrix& t = truths[k];
        if (p.rows() != t.rows() || p.cols() != t.cols()) throw DimensionError("prediction and truth shapes differ");
        if (thresholds.size() != t.rows()) throw DimensionError("one MAPE threshold per variable required");
        const auto diff = (p - t).array();
        abs_sum += diff.abs().sum();
        sq_sum += diff.square().sum();
        count += p.size();
        for (Index i = 0; i < t.rows(); ++i) {
            for (Index c = 0; c < t.cols(); ++c) {
                if (std::abs(t(i, c)) > thresholds(i)) {
                    pct_sum += std::abs(p(i, c) - t(i, c)) / std::abs(t(i, c));
                    ++used;
                } else {
                    ++m.mape_masked;
                }
            }
        }
    }
    m.mae = abs_sum / static_cast<double>(count);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(count));
    if (used > 0) m.mape = 100.0 * pct_sum / static_cast<double>(used);
    return m;
}

double student_t_quantile(double p, double dof) {
    if (!(dof > 0)) throw ConfigError("Student-t needs positive degrees of freedom");
    return boost::math::quantile(boost::math::students_t_distribution<double>(dof), p);
}

Interval t_interval(const std::vector<double>& values) {
    if (values.size() < 2) throw ConfigError("a confidence interval needs at least 2 values");
    const auto s = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / s;
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (s - 1.0));
    return {mean, student_t_quantile(0.975, s - 1.0) * sd / std::sqrt(s)};
}

namespace {

std::vector<Matrix> denormalized(const std::vector<Matrix>& windows, const NormStats& stats) {
    std::vector<Matrix> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back(((w.array().colwise() * stats.std.array()).matrix().colwise() + stats.mean));
    }
    return out;
}

std::vector<Matrix> forecast_all(const Model& model, const Matrix& adjacency, const WindowedDataset& data,
                                 int batch_size) {
    std::vector<Matrix> out;
    out.reserve(data.size());
    for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<const Matrix*> in;
        for (std::size_t i = begin; i < end; ++i) in.push_back(&data.inputs[i]);
        ad::Tape tape;
        Binder bind(tape, model.params, false);
        const Supports supports = make_supports(tape.constant(adjacency));
        const Matrix pred = forecast(bind, model.forecaster, supports, pack_batch(in)).value();
        for (auto& m : unpack_batch(pred, model.n_vars)) out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

EvalOutput evaluate(const Checkpoint& ckpt, const WindowedDataset& data, const EvalOptions& options) {
    if (data.horizon != ckpt.config.horizon || data.input_horizon != ckpt.config.input_horizon) {
        throw ConfigError("model was trained for T=" + std::to_string(ckpt.config.input_horizon) +
                          ", tau=" + std::to_string(ckpt.config.horizon) + " but the data has T=" +
                          std::to_string(data.input_horizon) + ", tau=" + std::to_string(data.horizon));
    }
    if (data.empty()) throw DataError("evaluation split is empty");
    if (data.inputs.front().rows() != ckpt.n_vars) throw ConfigError("data and checkpoint disagree on variable count");
    if (options.batch_size < 1) throw ConfigError("batch_size must be >= 1");

    const Model model = model_from_checkpoint(ckpt);
    const Vector thresholds = options.mape_threshold_fraction * ckpt.stats.std;

    EvalOutput out;
    out.truths = denormalized(data.targets, ckpt.stats);
    out.predictions =
        denormalized(forecast_all(model, threshold_adjacency(ckpt.logits), data, options.batch_size), ckpt.stats);

    const MetricTriple metrics = compute_metrics(out.predictions, out.truths, thresholds);
    out.report.mode = to_string(ckpt.config.mode);
    out.report.per_horizon[data.horizon] = metrics;
    out.report.per_seed.push_back(SeedEntry{ckpt.config.seed, data.horizon, metrics});

    if (options.mc_samples > 0) {
        Rng rng(options.mc_seed);
        for (int k = 0; k < options.mc_samples; ++k) {
            const AdjacencySample a = sample_adjacency(ckpt.logits, ckpt.config.temperature, rng);
            const auto preds = denormalized(forecast_all(model, a.hard, data, options.batch_size), ckpt.stats);
            out.mc_metrics.push_back(compute_metrics(preds, out.truths, thresholds));
        }
    }
    return out;
}

MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports) {
    if (reports.size() < 2) throw ConfigError("aggregating seeds needs at least 2 reports");
    MetricsReport out;
    out.mode = reports.front().mode;
    for (const auto& r : reports) {
        if (r.mode != out.mode) throw ConfigError("cannot aggregate reports of different modes");
        if (r.per_horizon.size() != reports.front().per_horizon.size()) {
            throw ConfigError("reports cover different horizons");
        }
        for (const auto& [h, _] : reports.front().per_horizon) {
            if (!r.per_horizon.count(h)) throw ConfigError("reports cover different horizons");
        }
        out.per_seed.insert(out.per_seed.end(), r.per_seed.begin(), r.per_seed.end());
    }
    for (const auto& [h, _] : reports.front().per_horizon) {
        std::vector<double> maes, rmses, mapes;
        for (const auto& r : reports) {
            const auto& m = r.per_horizon.at(h);
            maes.push_back(m.mae);
            rmses.push_back(m.rmse);
            if (m.mape) mapes.push_back(*m.mape);
        }
        AggregateEntry agg;
        agg.seeds = reports.size();
        agg.mae = t_interval(maes);
        agg.rmse = t_interval(rmses);
        if (mapes.size() == reports.size()) agg.mape = t_interval(mapes);
        out.aggregate[h] = agg;

        MetricTriple mean;
        mean.mae = agg.mae.mean;
        mean.rmse = agg.rmse.mean;
        if (agg.mape) mean.mape = agg.mape->mean;
        for (const auto& r : reports) mean.mape_masked += r.per_horizon.at(h).mape_masked;
        out.per_horizon[h] = mean;
    }
    return out;
}

namespace {

nlohmann::json triple_to_json(const MetricTriple& m) {
    return {{"mae", m.mae},
            {"rmse", m.rmse},
            {"mape", m.mape ? nlohmann::json(*m.mape) : nlohmann::json(nullptr)},
            {"mape_masked", m.mape_masked}};
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["mode"] = report.mode;
    j["per_horizon"] = nlohmann::json::array();
    for (const auto& [h, m] : report.per_horizon) {
        auto e = triple_to_json(m);
        e["horizon"] = h;
        j["per_horizon"].push_back(e);
    }
    j["per_seed"] = nlohmann::json::array();
    for (const auto& s : report.per_seed) {
        auto e = triple_to_json(s.metrics);
        e["seed"] = s.seed;
        e["horizon"] = s.horizon;
        j["per_seed"].push_back(e);
    }
    j["aggregate"] = nlohmann::json::array();
    for (const auto& [h, a] : report.aggregate) {
        nlohmann::json e{{"horizon", h},
                         {"seeds", a.seeds},
                         {"mae", {{"mean", a.mae.mean}, {"ci95", a.mae.half_width}}},
                         {"rmse", {{"mean", a.rmse.mean}, {"ci95", a.rmse.half_width}}}};
        e["mape"] = a.mape ? nlohmann::json{{"mean", a.mape->mean}, {"ci95", a.mape->half_width}}
                           : nlohmann::json(nullptr);
        j["aggregate"].push_back(e);
    }
    return j;
}

void write_report_json(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report '" + path.string() + "'");
    out << report_to_json(report).dump(2) << '\n';
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report '" + path.string() + "'");
    out.precision(17);
    out << "mode,horizon,seed,mae,rmse,mape,mae_ci95,rmse_ci95,mape_ci95\n";
    auto opt = [](const std::optional<double>& v) {
        std::ostringstream s;
        s.precision(17);
        if (v) s << *v;
        return s.str();
    };
    for (const auto& s : report.per_seed) {
        out << report.mode << ',' << s.horizon << ',' << s.seed << ',' << s.metrics.mae << ',' << s.metrics.rmse << ','
            << opt(s.metrics.mape) << ",,,\n";
    }
    for (const auto& [h, a] : report.aggregate) {
        out << report.mode << ',' << h << ",mean," << a.mae.mean << ',' << a.rmse.mean << ','
            << opt(a.mape ? std::optional<double>(a.mape->mean) : std::nullopt) << ',' << a.mae.half_width << ','
            << a.rmse.half_width << ','
            << opt(a.mape ? std::optional<double>(a.mape->half_width) : std::nullopt) << '\n';
    }
}

void write_forecast_dump(const std::filesystem::path& path, const EvalOutput& output,
                         const std::vector<std::string>& var_names, std::size_t every) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write forecast dump '" + path.string() + "'");
    out.precision(17);
    out << "window,variable,step,truth,prediction\n";
    every = std::max<std::size_t>(every, 1);
    for (std::size_t w = 0; w < output.predictions.size(); w += every) {
        const Matrix& p = output.predictions[w];
        const Matrix& t = output.truths[w];
        for (Index i = 0; i < p.rows(); ++i) {
            for (Index s = 0; s < p.cols(); ++s) {
                out << w << ',' << var_names.at(static_cast<std::size_t>(i)) << ',' << s + 1 << ',' << t(i, s) << ','
                    << p(i, s) << '\n';
            }
        }
    }
}

}  // namespace gaets
