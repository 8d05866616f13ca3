#include "gaets/cli.hpp"

#include "gaets/errors.hpp"
#include "gaets/evaluation.hpp"
#include "gaets/serialization.hpp"
#include "gaets/synthetic.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace gaets {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string split_mode_name(SplitMode m) { return m == SplitMode::chronological ? "chronological" : "by_cycle"; }

SplitMode split_mode_from(const std::string& s) {
    if (s == "chronological") return SplitMode::chronological;
    if (s == "by_cycle") return SplitMode::by_cycle;
    throw ConfigError("unknown split mode '" + s + "' (expected chronological or by_cycle)");
}

std::vector<std::string> paths_to_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown option '" + key + "' in " + where);
    }
}

}  // namespace

json to_json(const RunConfig& c) {
    return json{{"train", to_json(c.train)},
                {"data",
                 {{"files", paths_to_strings(c.data_files)},
                  {"test_files", paths_to_strings(c.test_files)},
                  {"columns", c.columns},
                  {"smooth", c.smooth},
                  {"stride", c.stride},
                  {"split",
                   {{"train", c.split.train_fraction},
                    {"val", c.split.val_fraction},
                    {"test", c.split.test_fraction},
                    {"mode", split_mode_name(c.split.mode)}}}}},
                {"seeds", c.seeds},
                {"threads", c.threads},
                {"run_id", c.run_id},
                {"output_root", c.output_root.string()}};
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
    check_keys(j, {"train", "data", "seeds", "threads", "run_id", "output_root"}, "run configuration");
    try {
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
        if (j.contains("data")) {
            const json& d = j.at("data");
            check_keys(d, {"files", "test_files", "columns", "smooth", "stride", "split"}, "data section");
            if (d.contains("files")) {
                c.data_files.clear();
                for (const auto& f : d.at("files")) c.data_files.emplace_back(f.get<std::string>());
            }
            if (d.contains("test_files")) {
                c.test_files.clear();
                for (const auto& f : d.at("test_files")) c.test_files.emplace_back(f.get<std::string>());
            }
            if (d.contains("columns")) c.columns = d.at("columns").get<std::vector<std::string>>();
            if (d.contains("smooth")) c.smooth = d.at("smooth").get<Index>();
            if (d.contains("stride")) c.stride = d.at("stride").get<Index>();
            if (d.contains("split")) {
                const json& s = d.at("split");
                check_keys(s, {"train", "val", "test", "mode"}, "split section");
                if (s.contains("train")) c.split.train_fraction = s.at("train").get<double>();
                if (s.contains("val")) c.split.val_fraction = s.at("val").get<double>();
                if (s.contains("test")) c.split.test_fraction = s.at("test").get<double>();
                if (s.contains("mode")) c.split.mode = split_mode_from(s.at("mode").get<std::string>());
            }
        }
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("threads")) c.threads = j.at("threads").get<int>();
        if (j.contains("run_id")) c.run_id = j.at("run_id").get<std::string>();
        if (j.contains("output_root")) c.output_root = j.at("output_root").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value in run configuration: ") + e.what());
    }
    return c;
}

std::string run_config_hash(const RunConfig& config) {
    json j = to_json(config);
    j.erase("run_id");
    j.erase("output_root");
    j.erase("threads");
    return fnv1a_hex(j.dump());
}

namespace {

RawSeries load_series(const std::vector<fs::path>& files, const RunConfig& c) {
    RawSeries s = load_csv_files(files, c.columns);
    if (c.smooth > 1) s = moving_average(s, c.smooth);
    return s;
}

void validate_run(const RunConfig& c) {
    c.train.validate();
    if (c.stride < 1) throw ConfigError("stride must be >= 1");
    if (c.smooth < 0) throw ConfigError("smooth must be >= 0");
    if (c.seeds.empty()) throw ConfigError("at least one seed is required");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
        throw ConfigError("seeds must be distinct");
    }
}

}  // namespace

PreparedData load_prepared(const RunConfig& c) {
    if (c.data_files.empty()) throw ConfigError("no data files configured (use --data or data.files)");
    const RawSeries source = load_series(c.data_files, c);
    if (c.test_files.empty()) {
        return prepare_data(source, nullptr, c.train.input_horizon, c.train.horizon, c.stride, c.split);
    }
    const RawSeries test = load_series(c.test_files, c);
    return prepare_data(source, &test, c.train.input_horizon, c.train.horizon, c.stride, c.split);
}

namespace {

// ---- shared plumbing ----------------------------------------------------------------

struct Context {
    std::ostream& out;
    std::ostream& err;
};

fs::path output_root(const RunConfig& c) {
    if (!c.output_root.empty()) return c.output_root;
    if (const char* env = std::getenv("GAETS_OUT"); env != nullptr && *env != '\0') return env;
    return "runs";
}

std::string resolved_run_id(const RunConfig& c) {
    if (!c.run_id.empty()) return c.run_id;
    return to_string(c.train.mode) + "-tau" + std::to_string(c.train.horizon) + "-" +
           run_config_hash(c).substr(0, 8);
}

fs::path make_run_dir(const RunConfig& c) {
    const fs::path dir = output_root(c) / resolved_run_id(c);
    for (const char* sub : {"checkpoints", "logs", "reports"}) fs::create_directories(dir / sub);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

void write_resolved_config(const fs::path& run_dir, const RunConfig& c) {
    json j = to_json(c);
    j["run_id"] = resolved_run_id(c);
    j["output_root"] = output_root(c).string();
    j["config_hash"] = run_config_hash(c);
    write_json(run_dir / "config.json", j);
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("configuration '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

// Flags shared by commands that read a run configuration. Values are only
// applied when the flag was given, so the file stays authoritative otherwise.
struct RunFlags {
    std::string config_path;
    std::vector<std::string> data, test_data, columns, seeds;
    std::string mode, split_mode, run_id, out_dir, base_loss;
    std::optional<Index> horizon, input_horizon, smooth, stride, hidden;
    std::optional<int> epochs, threads, batch;
    std::optional<double> lr, train_frac, val_frac, test_frac;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run configuration");
        app.add_option("--data", data, "training CSV file(s)");
        app.add_option("--test-data", test_data, "held-out CSV file(s); replaces the test split");
        app.add_option("--columns", columns, "columns to read, in order")->delimiter(',');
        app.add_option("--mode", mode, "GAETS or GTS");
        app.add_option("--horizon", horizon, "forecast horizon tau");
        app.add_option("--input-horizon", input_horizon, "input window length T");
        app.add_option("--smooth", smooth, "trailing moving-average width (0 = off)");
        app.add_option("--stride", stride, "window stride");
        app.add_option("--split", split_mode, "chronological or by_cycle");
        app.add_option("--train-frac", train_frac);
        app.add_option("--val-frac", val_frac);
        app.add_option("--test-frac", test_frac);
        app.add_option("--seeds", seeds, "seed list, e.g. 1,2,3")->delimiter(',');
        app.add_option("--threads", threads, "worker threads for multi-seed runs");
        app.add_option("--epochs", epochs);
        app.add_option("--batch-size", batch);
        app.add_option("--lr", lr);
        app.add_option("--hidden", hidden, "DCGRU hidden width");
        app.add_option("--base-loss", base_loss, "l1 or l2");
        app.add_option("--run-id", run_id);
        app.add_option("--out", out_dir, "output root (default $GAETS_OUT or ./runs)");
    }

    RunConfig resolve() const {
        RunConfig c;
        if (!config_path.empty()) c = run_config_from_json(read_json_file(config_path));
        if (!data.empty()) c.data_files.assign(data.begin(), data.end());
        if (!test_data.empty()) c.test_files.assign(test_data.begin(), test_data.end());
        if (!columns.empty()) c.columns = columns;
        if (!mode.empty()) c.train.mode = mode_from_string(mode);
        if (horizon) c.train.horizon = *horizon;
        if (input_horizon) c.train.input_horizon = *input_horizon;
        if (smooth) c.smooth = *smooth;
        if (stride) c.stride = *stride;
        if (!split_mode.empty()) c.split.mode = split_mode_from(split_mode);
        if (train_frac) c.split.train_fraction = *train_frac;
        if (val_frac) c.split.val_fraction = *val_frac;
        if (test_frac) c.split.test_fraction = *test_frac;
        if (!seeds.empty()) {
            c.seeds.clear();
            for (const auto& s : seeds) {
                try {
                    c.seeds.push_back(std::stoull(s));
                } catch (const std::exception&) {
                    throw ConfigError("seed '" + s + "' is not a non-negative integer");
                }
            }
        }
        if (threads) c.threads = *threads;
        if (epochs) c.train.epochs = *epochs;
        if (batch) c.train.batch_size = *batch;
        if (lr) c.train.learning_rate = *lr;
        if (hidden) c.train.hidden = *hidden;
        if (!base_loss.empty()) {
            if (base_loss != "l1" && base_loss != "l2") throw ConfigError("base loss must be l1 or l2");
            c.train.base_loss = base_loss == "l1" ? BaseLossKind::l1 : BaseLossKind::l2;
        }
        if (!run_id.empty()) c.run_id = run_id;
        if (!out_dir.empty()) c.output_root = out_dir;
        c.train.seed = c.seeds.front();
        validate_run(c);
        return c;
    }
};

fs::path checkpoint_path(const fs::path& run_dir, std::uint64_t seed) {
    return run_dir / "checkpoints" / ("seed-" + std::to_string(seed) + ".json");
}

void print_splits(std::ostream& out, const DatasetSplits& s) {
    out << "windows: train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size() << '\n';
}

// ---- ingest ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c, Context& ctx) {
    const PreparedData data = load_prepared(c);
    const fs::path dir = make_run_dir(c);
    write_resolved_config(dir, c);
    const fs::path cache = dir / "dataset.json";
    save_dataset_cache(cache, data.splits, data.stats, data.var_names);
    for (const auto* part : {&data.splits.train, &data.splits.val, &data.splits.test}) {
        if (part->too_short) ctx.err << "warning: a segment is shorter than T + tau and produced no windows\n";
    }
    print_splits(ctx.out, data.splits);
    ctx.out << "dataset cache: " << cache.string() << '\n';
    return kExitOk;
}

// ---- synth ----------------------------------------------------------------------------

struct SynthFlags {
    Index nodes = 6, edges = 8, length = 4000, burn_in = 100;
    std::uint64_t seed = 1;
    double noise = 0.1;
    bool linear = false;
    std::string out_dir;
};

int cmd_synth(const SynthFlags& f, Context& ctx) {
    RandomGraphOptions o;
    o.n_vars = f.nodes;
    o.edges = f.edges;
    o.noise_std = f.noise;
    o.nonlinearity = f.linear ? Nonlinearity::linear : Nonlinearity::tanh;
    // Graph and series draw from different seeds so neither depends on the
    // other's consumption.
    const GroundTruthGraph g = random_graph(o, f.seed);
    const RawSeries s = generate(g, f.length, f.seed + 0x9e3779b97f4a7c15ULL, f.burn_in);

    fs::path dir = f.out_dir;
    if (dir.empty()) {
        RunConfig rc;
        dir = output_root(rc) / ("synth-n" + std::to_string(f.nodes) + "-e" + std::to_string(f.edges) + "-s" +
                                 std::to_string(f.seed));
    }
    fs::create_directories(dir);
    write_csv(dir / "series.csv", s);
    write_edge_list(dir / "truth_edges.csv", g, s.var_names);
    ctx.out << "wrote " << (dir / "series.csv").string() << " and " << (dir / "truth_edges.csv").string() << '\n';
    return kExitOk;
}

// ---- train ----------------------------------------------------------------------------

struct SeedOutcome {
    std::exception_ptr error;
    std::optional<Checkpoint> best;
};

int cmd_train(const RunConfig& c, Context& ctx) {
    const PreparedData data = load_prepared(c);
    print_splits(ctx.out, data.splits);
    const fs::path dir = make_run_dir(c);
    write_resolved_config(dir, c);

    std::vector<SeedOutcome> outcomes(c.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex io;
    auto worker = [&] {
        for (std::size_t k = next++; k < c.seeds.size(); k = next++) {
            TrainConfig tc = c.train;
            tc.seed = c.seeds[k];
            const fs::path log_path = dir / "logs" / ("seed-" + std::to_string(tc.seed) + ".ndjson");
            try {
                std::ofstream log(log_path);
                if (!log) throw DataError("cannot write '" + log_path.string() + "'");
                TrainResult r = train(tc, data, [&](const EpochRecord& rec) {
                    log << to_log_line(rec) << '\n' << std::flush;
                    std::lock_guard lock(io);
                    ctx.out << "seed " << rec.seed << " epoch " << rec.epoch << " base " << rec.train.base
                            << " ae " << rec.train.autoencoder << " val " << rec.val_base << '\n';
                });
                save_checkpoint(checkpoint_path(dir, tc.seed), r.best);
                outcomes[k].best = std::move(r.best);
            } catch (const TrainingDiverged& e) {
                save_checkpoint(dir / "checkpoints" / ("seed-" + std::to_string(tc.seed) + "-last-good.json"),
                                e.last_good());
                write_json(dir / "logs" / ("diagnostics-seed-" + std::to_string(tc.seed) + ".json"),
                           json{{"seed", tc.seed},
                                {"term", e.term()},
                                {"message", e.what()},
                                {"last_good_epoch", e.last_good().epoch}});
                outcomes[k].error = std::current_exception();
            } catch (...) {
                outcomes[k].error = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(c.threads), c.seeds.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& o : outcomes) {
        if (o.error) std::rethrow_exception(o.error);
    }

    std::vector<MetricsReport> reports;
    const WindowedDataset& eval_set = data.splits.test.empty() ? data.splits.val : data.splits.test;
    for (const auto& o : outcomes) reports.push_back(evaluate(*o.best, eval_set).report);
    const MetricsReport report = reports.size() > 1 ? aggregate_seeds(reports) : reports.front();
    write_report_json(dir / "reports" / "metrics.json", report);
    write_report_csv(dir / "reports" / "metrics.csv", report);
    ctx.out << "run directory: " << dir.string() << '\n';
    return kExitOk;
}

// ---- eval -----------------------------------------------------------------------------

struct EvalFlags {
    std::vector<std::string> checkpoints;
    std::string dataset_cache, which = "test", report_dir;
    bool report_ae = false;
    int mc_samples = 0;
    std::uint64_t mc_seed = 0;
    std::size_t dump_every = 1;
};

WindowedDataset eval_windows(const RunConfig& c, const Checkpoint& ckpt, const EvalFlags& f) {
    auto pick = [&](const DatasetSplits& s) -> WindowedDataset {
        if (f.which == "train") return s.train;
        if (f.which == "val") return s.val;
        return s.test;
    };
    if (!f.dataset_cache.empty()) return pick(load_dataset_cache(f.dataset_cache).splits);
    if (c.data_files.empty()) throw ConfigError("eval needs --data, --config or --dataset");
    const Index T = ckpt.config.input_horizon, tau = ckpt.config.horizon;
    if (f.which == "test" && !c.test_files.empty()) {
        return make_windows(apply_norm(load_series(c.test_files, c), ckpt.stats), T, tau, c.stride);
    }
    return pick(split(make_windows(apply_norm(load_series(c.data_files, c), ckpt.stats), T, tau, c.stride), c.split));
}

Vector mean_node_ae(const Checkpoint& ckpt, const WindowedDataset& data) {
    const Model model = model_from_checkpoint(ckpt);
    const Matrix adjacency = threshold_adjacency(ckpt.logits);
    Vector acc = Vector::Zero(ckpt.n_vars);
    for (std::size_t begin = 0; begin < data.size(); begin += 64) {
        const std::size_t end = std::min(data.size(), begin + 64);
        std::vector<const Matrix*> in;
        for (std::size_t i = begin; i < end; ++i) in.push_back(&data.inputs[i]);
        acc += per_node_reconstruction_error(model.params, model.sem, pack_batch(in), adjacency) *
               static_cast<double>(end - begin);
    }
    return acc / static_cast<double>(data.size());
}

int cmd_eval(const RunConfig& c, const EvalFlags& f, Context& ctx) {
    if (f.checkpoints.empty()) throw ConfigError("eval needs at least one --checkpoint");
    if (f.which != "train" && f.which != "val" && f.which != "test") {
        throw ConfigError("--split-name must be train, val or test");
    }
    std::vector<Checkpoint> ckpts;
    for (const auto& p : f.checkpoints) ckpts.push_back(load_checkpoint(p));

    fs::path dir = f.report_dir;
    if (dir.empty()) dir = fs::absolute(f.checkpoints.front()).parent_path().parent_path() / "reports";
    fs::create_directories(dir);

    EvalOptions opts;
    opts.mc_samples = f.mc_samples;
    opts.mc_seed = f.mc_seed;
    std::vector<MetricsReport> reports;
    json extras{{"mc_eval", json::array()}, {"autoencoder", json::array()}};
    for (const auto& ckpt : ckpts) {
        const WindowedDataset data = eval_windows(c, ckpt, f);
        const EvalOutput o = evaluate(ckpt, data, opts);
        reports.push_back(o.report);
        const std::string tag = "seed-" + std::to_string(ckpt.config.seed);
        write_forecast_dump(dir / ("forecasts-" + tag + ".csv"), o, ckpt.var_names, f.dump_every);
        if (!o.mc_metrics.empty()) {
            std::vector<double> maes, rmses;
            for (const auto& m : o.mc_metrics) {
                maes.push_back(m.mae);
                rmses.push_back(m.rmse);
            }
            auto mean_sd = [](const std::vector<double>& v) {
                double mean = 0.0, ss = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                for (double x : v) ss += (x - mean) * (x - mean);
                const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
                return json{{"mean", mean}, {"std", sd}};
            };
            extras["mc_eval"].push_back(
                {{"seed", ckpt.config.seed}, {"samples", o.mc_metrics.size()}, {"mae", mean_sd(maes)},
                 {"rmse", mean_sd(rmses)}});
        }
        if (f.report_ae) {
            const Vector ae = mean_node_ae(ckpt, data);
            json nodes = json::array();
            for (Index i = 0; i < ae.size(); ++i) {
                nodes.push_back({{"variable", ckpt.var_names.at(static_cast<std::size_t>(i))}, {"error", ae(i)}});
            }
            extras["autoencoder"].push_back({{"seed", ckpt.config.seed}, {"per_node", nodes}});
        }
    }
    for (const auto& r : reports) {
        if (r.mode != reports.front().mode) throw ConfigError("checkpoints mix GAETS and GTS runs");
    }
    const MetricsReport report = reports.size() > 1 ? aggregate_seeds(reports) : reports.front();
    json j = report_to_json(report);
    if (!extras["mc_eval"].empty()) j["mc_eval"] = extras["mc_eval"];
    if (!extras["autoencoder"].empty()) j["autoencoder"] = extras["autoencoder"];
    write_json(dir / "metrics.json", j);
    write_report_csv(dir / "metrics.csv", report);
    for (const auto& [h, m] : report.per_horizon) {
        ctx.out << report.mode << " tau=" << h << " MAE " << m.mae << " RMSE " << m.rmse << " MAPE ";
        if (m.mape) ctx.out << *m.mape; else ctx.out << "n/a";
        if (auto a = report.aggregate.find(h); a != report.aggregate.end()) {
            ctx.out << " (MAE 95% CI +-" << a->second.mae.half_width << ", " << a->second.seeds << " seeds)";
        }
        ctx.out << '\n';
    }
    ctx.out << "reports: " << dir.string() << '\n';
    return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------------------

struct GradcheckFlags {
    std::uint64_t seed = 1;
    std::string mode = "GAETS";
    std::vector<std::string> groups;
    bool straight_through = false;
    std::size_t max_per_group = 0;
};

int cmd_gradcheck(const GradcheckFlags& f, Context& ctx) {
    GradcheckOptions o;
    o.seed = f.seed;
    o.straight_through = f.straight_through;
    o.max_per_group = f.max_per_group;
    if (!f.groups.empty()) o.groups = f.groups;
    const GradcheckReport r = gradcheck(GradcheckProbe{}, mode_from_string(f.mode), o);
    for (const auto& g : r.groups) {
        ctx.out << g.name << ": " << g.probed << " entries, max rel error " << g.max_rel_error;
        if (g.zero_gradient) {
            ctx.out << " (zero gradient)";
        } else if (!g.worst_entry.empty()) {
            ctx.out << " at " << g.worst_entry;
        }
        ctx.out << '\n';
    }
    ctx.out << "max relative error " << r.max_rel_error << " over " << r.probed << " entries (" << r.resamples
            << " resamples)\n";
    if (r.vacuous) {
        ctx.err << "gradcheck probed no parameters\n";
        return kExitFailure;
    }
    return r.max_rel_error < 1e-4 ? kExitOk : kExitFailure;
}

// ---- export-graph ---------------------------------------------------------------------

int cmd_export_graph(const std::string& ckpt_path, const std::string& out_dir, Context& ctx) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    fs::path dir = out_dir;
    if (dir.empty()) dir = fs::absolute(ckpt_path).parent_path().parent_path() / "reports";
    fs::create_directories(dir);
    const Matrix p = edge_probabilities(ckpt.logits);
    const auto& names = ckpt.var_names;
    const std::string tag = "seed-" + std::to_string(ckpt.config.seed);
    {
        std::ofstream out(dir / ("edge_probabilities-" + tag + ".csv"));
        if (!out) throw DataError("cannot write to '" + dir.string() + "'");
        out.precision(17);
        out << "source";
        for (const auto& n : names) out << ',' << n;
        out << '\n';
        for (Index i = 0; i < p.rows(); ++i) {
            out << names.at(static_cast<std::size_t>(i));
            for (Index j = 0; j < p.cols(); ++j) out << ',' << p(i, j);
            out << '\n';
        }
    }
    std::ofstream edges(dir / ("edges-" + tag + ".csv"));
    edges.precision(17);
    edges << "source,target,probability\n";
    for (Index i = 0; i < p.rows(); ++i) {
        for (Index j = 0; j < p.cols(); ++j) {
            if (ckpt.logits(i, j) > 0.0) {
                edges << names.at(static_cast<std::size_t>(i)) << ',' << names.at(static_cast<std::size_t>(j)) << ','
                      << p(i, j) << '\n';
            }
        }
    }
    ctx.out << "graph written to " << dir.string() << '\n';
    return kExitOk;
}

int exit_code_for(const std::exception_ptr& e, std::ostream& err) {
    try {
        std::rethrow_exception(e);
    } catch (const ConfigError& x) {
        err << "config error: " << x.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& x) {
        err << "numeric failure (" << x.term() << "): " << x.what() << '\n';
        return kExitNumeric;
    } catch (const DataError& x) {
        err << "data error: " << x.what() << '\n';
        return kExitData;
    } catch (const DimensionError& x) {
        err << "config error: " << x.what() << '\n';
        return kExitConfig;
    } catch (const fs::filesystem_error& x) {
        err << "data error: " << x.what() << '\n';
        return kExitData;
    } catch (const std::exception& x) {
        err << "error: " << x.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx{out, err};
    CLI::App app{"Graph structure learning and multivariate forecasting"};
    app.require_subcommand(1);

    RunFlags ingest_flags, train_flags, eval_run_flags;
    auto* ingest = app.add_subcommand("ingest", "window and normalise CSV data into a dataset cache");
    ingest_flags.attach(*ingest);

    SynthFlags synth_flags;
    auto* synth = app.add_subcommand("synth", "generate a synthetic series with a known graph");
    synth->add_option("--nodes", synth_flags.nodes);
    synth->add_option("--edges", synth_flags.edges);
    synth->add_option("--length", synth_flags.length);
    synth->add_option("--burn-in", synth_flags.burn_in);
    synth->add_option("--seed", synth_flags.seed);
    synth->add_option("--noise", synth_flags.noise);
    synth->add_flag("--linear", synth_flags.linear, "identity link instead of tanh");
    synth->add_option("--output-dir", synth_flags.out_dir);

    auto* train_cmd = app.add_subcommand("train", "train one model per seed and score it");
    train_flags.attach(*train_cmd);

    EvalFlags eval_flags;
    auto* eval = app.add_subcommand("eval", "score checkpoints on a data split");
    eval_run_flags.attach(*eval);
    eval->add_option("--checkpoint", eval_flags.checkpoints, "checkpoint file(s)")->required();
    eval->add_option("--dataset", eval_flags.dataset_cache, "dataset cache written by ingest");
    eval->add_option("--split-name", eval_flags.which, "train, val or test");
    eval->add_option("--report-dir", eval_flags.report_dir);
    eval->add_flag("--report-ae", eval_flags.report_ae, "append per-node SEM reconstruction errors");
    eval->add_option("--mc-eval", eval_flags.mc_samples, "also score under this many sampled graphs");
    eval->add_option("--mc-seed", eval_flags.mc_seed);
    eval->add_option("--dump-every", eval_flags.dump_every, "keep every k-th window in the forecast dump");

    GradcheckFlags gc_flags;
    auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    gc->add_option("--seed", gc_flags.seed);
    gc->add_option("--mode", gc_flags.mode);
    gc->add_option("--groups", gc_flags.groups)->delimiter(',');
    gc->add_flag("--straight-through", gc_flags.straight_through, "use the hard sample in the forward pass");
    gc->add_option("--max-per-group", gc_flags.max_per_group);

    std::string export_ckpt, export_dir;
    auto* exp = app.add_subcommand("export-graph", "write edge probabilities of a checkpoint");
    exp->add_option("checkpoint", export_ckpt)->required();
    exp->add_option("--output-dir", export_dir);

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_flags.resolve(), ctx);
        if (synth->parsed()) return cmd_synth(synth_flags, ctx);
        if (train_cmd->parsed()) return cmd_train(train_flags.resolve(), ctx);
        if (eval->parsed()) return cmd_eval(eval_run_flags.resolve(), eval_flags, ctx);
        if (gc->parsed()) return cmd_gradcheck(gc_flags, ctx);
        if (exp->parsed()) return cmd_export_graph(export_ckpt, export_dir, ctx);
    } catch (...) {
        return exit_code_for(std::current_exception(), err);
    }
    return kExitConfig;
}

}  // namespace gaets
