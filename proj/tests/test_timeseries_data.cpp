#include "gaets/errors.hpp"
#include "gaets/timeseries_data.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace gaets;
using testing_support::TempDir;
using testing_support::write_text;

namespace {

RawSeries series_of(const Matrix& values) {
    RawSeries s;
    s.values = values;
    for (Index i = 0; i < values.rows(); ++i) s.var_names.push_back("v" + std::to_string(i));
    return s;
}

}  // namespace

TEST_SUITE("timeseries_data") {

TEST_CASE("six battery channels load in schema order") {
    TempDir dir("csv");
    write_text(dir / "cells.csv",
               "Voltage,Current,Charge_Capacity,Discharge_Capacity,Charge_Energy,Discharge_Energy\n"
               "3.7,1.0,0.1,0.0,0.4,0.0\n"
               "3.8,1.1,0.2,0.0,0.8,0.0\n"
               "3.9,-1.0,0.2,0.1,0.8,0.3\n");
    const RawSeries s = load_csv(dir / "cells.csv");
    CHECK(s.n_vars() == 6);
    CHECK(s.length() == 3);
    CHECK(s.var_names[2] == "Charge_Capacity");
    CHECK(s.values(1, 2) == doctest::Approx(-1.0));

    const RawSeries picked = load_csv(dir / "cells.csv", {"Current", "Voltage"});
    CHECK(picked.var_names == std::vector<std::string>{"Current", "Voltage"});
    CHECK(picked.values(1, 0) == 3.7);
    CHECK(picked.values(0, 1) == 1.1);
}

TEST_CASE("two columns with one data row give a 2x1 series") {
    TempDir dir("csv");
    write_text(dir / "tiny.csv", "a,b\n1.5,2.5\n");
    const RawSeries s = load_csv(dir / "tiny.csv");
    CHECK(s.values.rows() == 2);
    CHECK(s.values.cols() == 1);
    CHECK(s.values(1, 0) == 2.5);
}

TEST_CASE("blank cell reports its file line") {
    TempDir dir("csv");
    std::ostringstream text;
    text << "a,b\n";
    for (int line = 2; line <= 20; ++line) text << (line == 17 ? "1.0," : "1.0,2.0") << '\n';
    write_text(dir / "gap.csv", text.str());
    try {
        load_csv(dir / "gap.csv");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 17);
        CHECK(std::string(e.what()).find(":17:") != std::string::npos);
    }
}

TEST_CASE("malformed inputs are rejected with specific errors") {
    TempDir dir("csv");
    write_text(dir / "empty.csv", "");
    CHECK_THROWS_AS(load_csv(dir / "empty.csv"), EmptyInputError);
    write_text(dir / "header_only.csv", "a,b\n\n");
    CHECK_THROWS_AS(load_csv(dir / "header_only.csv"), EmptyInputError);
    write_text(dir / "ok.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(dir / "ok.csv", {"a", "missing"}), SchemaError);
    write_text(dir / "nan.csv", "a,b\n1,nan\n");
    CHECK_THROWS_AS(load_csv(dir / "nan.csv"), ParseError);
    write_text(dir / "one.csv", "a\n1\n2\n");
    CHECK_THROWS_AS(load_csv(dir / "one.csv"), DataError);
    write_text(dir / "dup.csv", "a,a\n1,2\n");
    CHECK_THROWS_AS(load_csv(dir / "dup.csv"), SchemaError);
    CHECK_THROWS_AS(load_csv(dir / "absent.csv"), DataError);
}

TEST_CASE("csv round trip is exact") {
    TempDir dir("csv");
    std::mt19937_64 rng(3);
    const RawSeries s = series_of(oracle::random_matrix(3, 17, rng));
    write_csv(dir / "rt.csv", s);
    const RawSeries back = load_csv(dir / "rt.csv");
    CHECK(back.values == s.values);
    CHECK(back.var_names == s.var_names);
}

TEST_CASE("multi-file loads record segments and windows stay inside them") {
    TempDir dir("csv");
    write_text(dir / "c1.csv", "a,b\n1,10\n2,20\n3,30\n4,40\n");
    write_text(dir / "c2.csv", "a,b\n5,50\n6,60\n7,70\n");
    const RawSeries s = load_csv_files({dir / "c1.csv", dir / "c2.csv"});
    CHECK(s.length() == 7);
    CHECK(s.segment_lengths == std::vector<Index>{4, 3});
    const WindowedDataset w = make_windows(s, 2, 1, 1);
    // 2 windows in the first file, 1 in the second; none straddles.
    CHECK(w.size() == 3);
    CHECK(w.starts == std::vector<Index>{0, 1, 4});
    CHECK(w.segment == std::vector<int>{0, 0, 1});
}

TEST_CASE("normalize uses the population std") {
    Matrix two(2, 2);
    two << 2, 4, 1, 3;
    const auto [z, stats] = normalize(series_of(two));
    CHECK(z.values(0, 0) == doctest::Approx(-1.0));
    CHECK(z.values(0, 1) == doctest::Approx(1.0));
    CHECK(stats.mean(0) == doctest::Approx(3.0));
    CHECK(stats.std(0) == doctest::Approx(1.0));
}

TEST_CASE("constant variable is degenerate") {
    Matrix v(2, 3);
    v << 5, 5, 5, 1, 2, 3;
    try {
        normalize(series_of(v));
        FAIL("expected a degenerate-variable error");
    } catch (const DegenerateVariableError& e) {
        CHECK(e.variable() == "v0");
    }
}

TEST_CASE("normalising standardised data is the identity") {
    std::mt19937_64 rng(5);
    const auto [z, s1] = normalize(series_of(oracle::random_matrix(3, 50, rng, 4.0)));
    const auto [z2, s2] = normalize(z);
    CHECK((z2.values - z.values).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s2.mean.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s2.std.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("denormalize inverts normalize") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix x = oracle::random_matrix(4, 30, rng, 10.0);
        x.array() += 100.0;
        const RawSeries s = series_of(x);
        const auto [z, stats] = normalize(s);
        const RawSeries back = denormalize(z, stats);
        const double rel = ((back.values - x).cwiseAbs().array() / x.cwiseAbs().array()).maxCoeff();
        CHECK(rel < 1e-10);
    }
}

TEST_CASE("window counts for the experiment horizons") {
    CHECK(window_count(200, 80, 40, 1) == 81);
    for (Index tau : {40, 80, 120}) {
        RawSeries s = series_of(Matrix::Random(2, 400));
        const WindowedDataset w = make_windows(s, 80, tau, 1);
        CHECK(static_cast<Index>(w.size()) == 400 - 80 - tau + 1);
        CHECK(w.inputs.front().cols() == 80);
        CHECK(w.targets.front().cols() == tau);
    }
}

TEST_CASE("series shorter than T + tau gives no windows and a flag") {
    const WindowedDataset w = make_windows(series_of(Matrix::Random(2, 119)), 80, 40, 1);
    CHECK(w.empty());
    CHECK(w.too_short);
}

TEST_CASE("window count formula property") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<Index> pick(1, 500);
    for (int trial = 0; trial < 2000; ++trial) {
        const Index L = pick(rng), T = pick(rng), tau = pick(rng), s = pick(rng);
        const Index expected = L >= T + tau ? (L - T - tau) / s + 1 : 0;
        Index brute = 0;
        for (Index start = 0; start + T + tau <= L; start += s) ++brute;
        CHECK(window_count(L, T, tau, s) == expected);
        CHECK(brute == expected);
    }
    // make_windows agrees with the formula on smaller random cases.
    std::uniform_int_distribution<Index> small(1, 60);
    for (int trial = 0; trial < 200; ++trial) {
        const Index L = small(rng), T = small(rng) / 3 + 1, tau = small(rng) / 3 + 1, s = small(rng) / 6 + 1;
        const WindowedDataset w = make_windows(series_of(Matrix::Random(2, L)), T, tau, s);
        CHECK(static_cast<Index>(w.size()) == window_count(L, T, tau, s));
    }
}

TEST_CASE("input and target concatenate to the source slice") {
    std::mt19937_64 rng(23);
    const RawSeries s = series_of(oracle::random_matrix(3, 60, rng));
    const WindowedDataset w = make_windows(s, 7, 4, 3);
    for (std::size_t i = 0; i < w.size(); ++i) {
        Matrix joined(3, 11);
        joined << w.inputs[i], w.targets[i];
        CHECK(joined == s.values.middleCols(w.starts[i], 11));
    }
}

TEST_CASE("split sizes") {
    WindowedDataset ds = make_windows(series_of(Matrix::Random(2, 1710 + 3)), 2, 2, 1);
    REQUIRE(ds.size() == 1710);
    const DatasetSplits sizes = split(ds, SplitSpec{1497.0 / 1710.0, 213.0 / 1710.0, 0.0});
    CHECK(sizes.train.size() == 1497);
    CHECK(sizes.val.size() == 213);
    CHECK(sizes.test.size() == 0);

    const WindowedDataset ten = ds.subset(0, 10);
    const DatasetSplits s = split(ten, SplitSpec{0.8, 0.1, 0.1});
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);

    const DatasetSplits none = split(ds.subset(0, 0), SplitSpec{});
    CHECK(none.train.empty());
    CHECK(none.val.empty());
    CHECK(none.test.empty());

    CHECK_THROWS_AS(split(ten, SplitSpec{0.5, 0.1, 0.1}), ConfigError);
}

TEST_CASE("chronological splits are disjoint, ordered and complete") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double a = frac(rng), b = frac(rng) * (1.0 - a);
        const WindowedDataset ds = make_windows(series_of(Matrix::Random(2, 80 + trial)), 5, 3, 1);
        const DatasetSplits s = split(ds, SplitSpec{a, b, 1.0 - a - b});
        CHECK(s.train.size() + s.val.size() + s.test.size() == ds.size());
        std::vector<Index> all;
        for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(all.end(), part->starts.begin(), part->starts.end());
        CHECK(all == ds.starts);
    }
}

TEST_CASE("by-cycle split keeps segments whole") {
    RawSeries s = series_of(Matrix::Random(2, 60));
    s.segment_lengths = {20, 20, 20};
    const WindowedDataset ds = make_windows(s, 4, 2, 1);
    const DatasetSplits parts = split(ds, SplitSpec{0.6, 0.2, 0.2, SplitMode::by_cycle});
    auto segments_of = [](const WindowedDataset& w) { return std::set<int>(w.segment.begin(), w.segment.end()); };
    CHECK(segments_of(parts.train) == std::set<int>{0, 1});
    CHECK(segments_of(parts.val) == std::set<int>{2});
    CHECK(parts.test.empty());
}

TEST_CASE("moving average is trailing and per segment") {
    Matrix v(2, 5);
    v << 1, 2, 3, 4, 5, 10, 20, 30, 40, 50;
    RawSeries s = series_of(v);
    s.segment_lengths = {3, 2};
    const RawSeries m = moving_average(s, 2);
    CHECK(m.values(0, 0) == 1.0);
    CHECK(m.values(0, 1) == 1.5);
    CHECK(m.values(0, 2) == 2.5);
    CHECK(m.values(0, 3) == 4.0);  // restarts at the boundary
    CHECK(m.values(0, 4) == 4.5);
}

TEST_CASE("dataset cache round trip") {
    TempDir dir("cache");
    std::mt19937_64 rng(31);
    const auto [z, stats] = normalize(series_of(oracle::random_matrix(3, 40, rng)));
    const DatasetSplits s = split(make_windows(z, 6, 2, 2), SplitSpec{});
    save_dataset_cache(dir / "ds.json", s, stats, z.var_names);
    const DatasetCache c = load_dataset_cache(dir / "ds.json");
    CHECK(c.var_names == z.var_names);
    CHECK(c.stats.mean == stats.mean);
    CHECK(c.splits.train.size() == s.train.size());
    CHECK(c.splits.test.size() == s.test.size());
    CHECK(c.splits.val.inputs.back() == s.val.inputs.back());
    CHECK(c.splits.train.targets.front() == s.train.targets.front());
    CHECK(c.splits.train.starts == s.train.starts);

    write_text(dir / "bad.json", R"({"format":"gaets-dataset","version":99})");
    CHECK_THROWS_AS(load_dataset_cache(dir / "bad.json"), DataError);
}

}
