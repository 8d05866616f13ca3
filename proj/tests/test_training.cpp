#include "gaets/serialization.hpp"
#include "gaets/synthetic.hpp"
#include "gaets/training.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace gaets;
using oracle::Mat;

namespace {

PreparedData tiny_data(std::uint64_t seed = 3, Index n = 3) {
    RandomGraphOptions opt;
    opt.n_vars = n;
    opt.edges = 2;
    const GroundTruthGraph g = random_graph(opt, seed);
    return prepare_data(generate(g, 160, seed + 1), nullptr, 6, 3, 1, SplitSpec{0.7, 0.15, 0.15});
}

TrainConfig tiny_config(Mode mode = Mode::gaets, int epochs = 2) {
    TrainConfig c = probe_config(GradcheckProbe{}, mode, 5);
    c.epochs = epochs;
    c.batch_size = 16;
    return c;
}

StepNoise noise_for(Index n, Index tau, std::uint64_t seed) {
    Rng rng(seed);
    StepNoise s;
    s.gumbel = draw_gumbel_difference(n, rng);
    s.teacher.assign(static_cast<std::size_t>(tau), 0);
    return s;
}

struct Batch {
    Matrix inputs, targets;
};

Batch first_batch(const PreparedData& d, std::size_t count) {
    std::vector<const Matrix*> in, tg;
    for (std::size_t i = 0; i < count; ++i) {
        in.push_back(&d.splits.train.inputs[i]);
        tg.push_back(&d.splits.train.targets[i]);
    }
    return {pack_batch(in), pack_batch(tg)};
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("base loss fixtures") {
    Mat pred = Mat::Zero(1, 2), truth(1, 2);
    truth << 1.0, 3.0;
    CHECK(base_loss(pred, truth) == doctest::Approx(2.0));
    CHECK(base_loss(pred, truth, BaseLossKind::l2) == doctest::Approx(5.0));
    CHECK(base_loss(truth, truth) == 0.0);
    CHECK_THROWS_AS(base_loss(Mat::Zero(2, 2), truth), DimensionError);

    std::mt19937_64 g(1);
    const Mat p = oracle::random_matrix(4, 6, g), t = oracle::random_matrix(4, 6, g);
    const std::vector<Index> perm{3, 5, 0, 1, 4, 2};
    Mat pp(4, 6), tp(4, 6);
    for (Index c = 0; c < 6; ++c) {
        pp.col(c) = p.col(perm[static_cast<std::size_t>(c)]);
        tp.col(c) = t.col(perm[static_cast<std::size_t>(c)]);
    }
    CHECK(base_loss(pp, tp) == doctest::Approx(base_loss(p, t)).epsilon(1e-14));
}

TEST_CASE("total is the exact sum of its parts") {
    const PreparedData d = tiny_data();
    const Batch b = first_batch(d, 4);
    std::mt19937_64 g(2);
    const Mat a = oracle::random_binary(3, g);
    for (Mode mode : {Mode::gaets, Mode::gts}) {
        const Model m = make_model(tiny_config(mode), 3);
        const LossBreakdown l = total_loss(m, b.inputs, b.targets, a);
        CHECK(l.total == l.base + l.autoencoder);

        // Components recomputed straight from the module APIs.
        ad::Tape tape;
        Binder bind(tape, m.params, false);
        const ad::Var av = tape.constant(a);
        const Mat pred = forecast(bind, m.forecaster, make_supports(av), b.inputs).value();
        CHECK(l.base == base_loss(pred, b.targets));
        if (mode == Mode::gts) {
            CHECK(l.autoencoder == 0.0);
            CHECK(l.total == l.base);
        } else {
            CHECK(l.autoencoder == autoencoder_loss(bind, m.sem, tape.constant(b.inputs), av).scalar());
            CHECK(l.autoencoder > 0.0);
        }

        const StepResult s = run_step(m, d.encoder_series, b.inputs, b.targets, noise_for(3, 3, 9));
        CHECK(s.loss.total == s.loss.base + s.loss.autoencoder);
    }
}

TEST_CASE("GTS mode leaves the SEM parameters without gradient") {
    const PreparedData d = tiny_data();
    const Batch b = first_batch(d, 4);
    const Model m = make_model(tiny_config(Mode::gts), 3);
    const StepResult s = run_step(m, d.encoder_series, b.inputs, b.targets, noise_for(3, 3, 4));
    REQUIRE(s.gradients.size() == m.params.size());
    bool any_sem = false, other_nonzero = false;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        if (m.params.name(i).rfind("sem.", 0) == 0) {
            any_sem = true;
            CHECK(s.gradients[i].isZero(0.0));
        } else if (!s.gradients[i].isZero(0.0)) {
            other_nonzero = true;
        }
    }
    CHECK(any_sem);
    CHECK(other_nonzero);

    const Model mg = make_model(tiny_config(Mode::gaets), 3);
    const StepResult sg = run_step(mg, d.encoder_series, b.inputs, b.targets, noise_for(3, 3, 4));
    CHECK(sg.gradients[mg.params.index_of("sem.g2.1.b")].norm() > 0.0);
}

TEST_CASE("the forecaster and SEM share one adjacency sample") {
    const PreparedData d = tiny_data();
    const Batch b = first_batch(d, 4);
    const Model m = make_model(tiny_config(), 3);
    const StepNoise noise = noise_for(3, 3, 11);
    const StepResult s = run_step(m, d.encoder_series, b.inputs, b.targets, noise);
    const LossBreakdown l = total_loss(m, b.inputs, b.targets, s.adjacency.hard);
    CHECK(l.base == doctest::Approx(s.loss.base).epsilon(1e-12));
    CHECK(l.autoencoder == doctest::Approx(s.loss.autoencoder).epsilon(1e-12));
}

TEST_CASE("teacher probability decays from c/(c+1)") {
    CHECK(teacher_probability(2000.0, 0) == doctest::Approx(2000.0 / 2001.0));
    CHECK(teacher_probability(2000.0, 20000) == doctest::Approx(2000.0 / (2000.0 + std::exp(10.0))));
    double prev = 1.0;
    for (std::int64_t s = 0; s < 50000; s += 500) {
        const double p = teacher_probability(2000.0, s);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("zero epochs return the initialised model") {
    const PreparedData d = tiny_data();
    const TrainResult r = train(tiny_config(Mode::gaets, 0), d);
    CHECK(r.log.empty());
    CHECK(r.best.epoch == -1);
    const Model m = make_model(tiny_config(Mode::gaets, 0), 3);
    REQUIRE(r.best.params.size() == m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i) CHECK(r.best.params.value(i) == m.params.value(i));
}

TEST_CASE("training is deterministic per seed") {
    const PreparedData d = tiny_data();
    const TrainResult a = train(tiny_config(Mode::gaets, 3), d);
    const TrainResult b = train(tiny_config(Mode::gaets, 3), d);
    REQUIRE(a.log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.log[e].train.total == b.log[e].train.total);
        CHECK(a.log[e].val_base == b.log[e].val_base);
        CHECK(a.log[e].logits == b.log[e].logits);
    }
    for (std::size_t i = 0; i < a.best.params.size(); ++i) CHECK(a.best.params.value(i) == b.best.params.value(i));

    TrainConfig other = tiny_config(Mode::gaets, 3);
    other.seed = 6;
    CHECK(train(other, d).log[0].train.total != a.log[0].train.total);
}

TEST_CASE("best checkpoint tracks the lowest validation loss") {
    const PreparedData d = tiny_data();
    const TrainResult r = train(tiny_config(Mode::gts, 4), d);
    double best = 1e300;
    int at = -1;
    for (const auto& e : r.log) {
        if (e.val_base < best) {
            best = e.val_base;
            at = e.epoch;
        }
    }
    CHECK(r.best.epoch == at);
    CHECK(r.best.val_base == best);
    // Re-evaluating the checkpoint reproduces its recorded loss.
    const Model m = model_from_checkpoint(r.best);
    CHECK(validation_loss(m, r.best.logits, d.splits.val, 16) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("mismatched horizons are a configuration error") {
    const PreparedData d = tiny_data();
    TrainConfig c = tiny_config();
    c.horizon = 4;
    CHECK_THROWS_AS(train(c, d), ConfigError);
    TrainConfig bad = tiny_config();
    bad.temperature = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip") {
    const PreparedData d = tiny_data();
    const TrainResult r = train(tiny_config(Mode::gaets, 1), d);
    testing_support::TempDir dir("training");
    save_checkpoint(dir / "ck.json", r.best);
    const Checkpoint back = load_checkpoint(dir / "ck.json");
    CHECK(back.n_vars == r.best.n_vars);
    CHECK(back.var_names == r.best.var_names);
    CHECK(back.epoch == r.best.epoch);
    CHECK(back.val_base == r.best.val_base);
    CHECK(back.config_hash == config_hash(r.best.config));
    CHECK(back.stats.mean == r.best.stats.mean);
    CHECK(back.stats.std == r.best.stats.std);
    CHECK(back.logits == r.best.logits);
    REQUIRE(back.params.size() == r.best.params.size());
    for (std::size_t i = 0; i < back.params.size(); ++i) {
        CHECK(back.params.name(i) == r.best.params.name(i));
        CHECK(back.params.value(i) == r.best.params.value(i));
    }
    CHECK(to_json(back.config) == to_json(r.best.config));

    testing_support::write_text(dir / "bad.json", "{\"version\": 99}");
    CHECK_THROWS(load_checkpoint(dir / "bad.json"));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), DataError);
}

TEST_CASE("config JSON") {
    TrainConfig c;
    c.mode = Mode::gts;
    c.hidden = 16;
    c.lr_milestones = {5, 9};
    c.conv.kernel1 = 7;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    TrainConfig d = c;
    d.seed = 2;
    CHECK(config_hash(d) != config_hash(c));

    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"hiden", 3}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"mode", "GATS"}}), ConfigError);
    CHECK(train_config_from_json(nlohmann::json{{"epochs", 7}}, c).hidden == 16);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("log lines are single JSON objects") {
    EpochRecord r;
    r.epoch = 3;
    r.train = {0.5, 0.25, 0.75};
    r.val_base = 0.6;
    r.seed = 9;
    const std::string line = to_log_line(r);
    CHECK(line.find('\n') == std::string::npos);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("epoch") == 3);
    CHECK(j.at("seed") == 9);
}

TEST_CASE("gradcheck on a healthy implementation") {
    for (Mode mode : {Mode::gaets, Mode::gts}) {
        GradcheckOptions opt;
        const GradcheckReport r = gradcheck(GradcheckProbe{}, mode, opt);
        CHECK_FALSE(r.vacuous);
        CHECK(r.probed > 0);
        CHECK(r.max_rel_error < 1e-4);
        bool saw_logits = false, saw_sem = false;
        for (const auto& grp : r.groups) {
            INFO(grp.name, " ", grp.worst_entry);
            CHECK(grp.max_rel_error < 1e-4);
            saw_logits |= grp.name == "edge_logits";
            if (grp.name == "sem") {
                saw_sem = true;
                CHECK(grp.zero_gradient == (mode == Mode::gts));
            } else {
                CHECK_FALSE(grp.zero_gradient);
            }
        }
        CHECK(saw_logits);
        CHECK(saw_sem);
    }
}

TEST_CASE("gradcheck catches a corrupted gate gradient") {
    const Model probe = make_model(probe_config(GradcheckProbe{}, Mode::gaets, 1), GradcheckProbe{}.n_vars);
    std::vector<std::size_t> gate;
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        if (probe.params.name(i).find(".update.") != std::string::npos) gate.push_back(i);
    }
    REQUIRE_FALSE(gate.empty());
    GradcheckOptions opt;
    opt.groups = std::vector<std::string>{"forecaster.encoder"};
    opt.corrupt = [gate](std::vector<Matrix>& grads, Matrix&) {
        for (std::size_t i : gate) grads[i] *= 1.5;
    };
    const GradcheckReport r = gradcheck(GradcheckProbe{}, Mode::gaets, opt);
    CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("gradcheck with nothing selected is vacuous") {
    GradcheckOptions opt;
    opt.groups = std::vector<std::string>{"no.such.group"};
    const GradcheckReport r = gradcheck(GradcheckProbe{}, Mode::gaets, opt);
    CHECK(r.vacuous);
    CHECK(r.probed == 0);
}

TEST_CASE("training loss mostly decreases over the first epochs" * doctest::timeout(600)) {
    const GroundTruthGraph g = random_graph({}, 42);
    const PreparedData d = prepare_data(generate(g, 4000, 43), nullptr, 80, 40, 4, SplitSpec{0.7, 0.15, 0.15});
    TrainConfig c;
    c.epochs = 10;
    c.hidden = 16;
    const TrainResult r = train(c, d);
    int increases = 0;
    for (std::size_t e = 1; e < r.log.size(); ++e) increases += r.log[e].train.total > r.log[e - 1].train.total;
    CHECK(increases <= 1);
}

}
