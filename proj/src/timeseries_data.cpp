#include "gaets/timeseries_data.hpp"

#include "gaets/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace gaets {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(trim(std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

bool parse_double(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* begin = cell.data();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace

std::vector<Index> RawSeries::segments() const {
    if (segment_lengths.empty()) return {length()};
    return segment_lengths;
}

void RawSeries::validate() const {
    if (n_vars() < 2) throw DataError("series needs at least 2 variables, got " + std::to_string(n_vars()));
    if (length() < 1) throw EmptyInputError("series has no samples");
    if (static_cast<Index>(var_names.size()) != n_vars()) {
        throw DataError("expected " + std::to_string(n_vars()) + " variable names, got " +
                        std::to_string(var_names.size()));
    }
    std::set<std::string> unique(var_names.begin(), var_names.end());
    if (unique.size() != var_names.size()) throw SchemaError("variable names are not unique");
    if (!values.allFinite()) throw DataError("series contains non-finite values");
    if (!segment_lengths.empty()) {
        const Index total = std::accumulate(segment_lengths.begin(), segment_lengths.end(), Index{0});
        if (total != length()) throw DataError("segment lengths do not sum to the series length");
    }
    if (!(timestep > 0)) throw DataError("timestep must be positive");
}

RawSeries load_csv(const std::filesystem::path& path, const std::vector<std::string>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");

    std::string line;
    long line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_line(line);
            break;
        }
    }
    if (header.empty()) throw EmptyInputError("data file '" + path.string() + "' is empty");
    if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header[0] = header[0].substr(3);
    }

    std::vector<std::string> names = schema.empty() ? header : schema;
    std::vector<std::size_t> column_of;
    for (const auto& name : names) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw SchemaError("column '" + name + "' missing from '" + path.string() + "'");
        }
        column_of.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                             line_no);
        }
        std::vector<double> row(column_of.size());
        for (std::size_t v = 0; v < column_of.size(); ++v) {
            const auto& cell = cells[column_of[v]];
            if (!parse_double(cell, row[v])) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": column '" + names[v] +
                                     "' is not a finite number ('" + cell + "')",
                                 line_no);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyInputError("data file '" + path.string() + "' has no data rows");

    RawSeries series;
    series.var_names = names;
    series.values.resize(static_cast<Index>(names.size()), static_cast<Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t v = 0; v < names.size(); ++v) {
            series.values(static_cast<Index>(v), static_cast<Index>(t)) = rows[t][v];
        }
    }
    series.validate();
    return series;
}

RawSeries load_csv_files(const std::vector<std::filesystem::path>& paths, const std::vector<std::string>& schema) {
    if (paths.empty()) throw ConfigError("no data files given");
    std::vector<RawSeries> parts;
    for (const auto& p : paths) parts.push_back(load_csv(p, schema));
    RawSeries out;
    out.var_names = parts.front().var_names;
    Index total = 0;
    for (const auto& p : parts) {
        if (p.var_names != out.var_names) throw SchemaError("data files disagree on column order");
        total += p.length();
    }
    out.values.resize(static_cast<Index>(out.var_names.size()), total);
    Index col = 0;
    for (const auto& p : parts) {
        out.values.middleCols(col, p.length()) = p.values;
        out.segment_lengths.push_back(p.length());
        col += p.length();
    }
    if (parts.size() == 1) out.segment_lengths.clear();
    return out;
}

void write_csv(const std::filesystem::path& path, const RawSeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (std::size_t v = 0; v < series.var_names.size(); ++v) out << (v ? "," : "") << series.var_names[v];
    out << '\n';
    out.precision(17);
    for (Index t = 0; t < series.length(); ++t) {
        for (Index v = 0; v < series.n_vars(); ++v) out << (v ? "," : "") << series.values(v, t);
        out << '\n';
    }
}

NormStats compute_norm_stats(const RawSeries& series) {
    if (series.length() < 1) throw EmptyInputError("cannot compute statistics of an empty series");
    NormStats stats;
    stats.mean = series.values.rowwise().mean();
    stats.std.resize(series.n_vars());
    for (Index v = 0; v < series.n_vars(); ++v) {
        const double var = (series.values.row(v).array() - stats.mean(v)).square().mean();
        stats.std(v) = std::sqrt(var);
        const double scale = std::max(1.0, std::abs(stats.mean(v)));
        if (!(stats.std(v) > 1e-12 * scale)) {
            const std::string name = v < static_cast<Index>(series.var_names.size()) ? series.var_names[v]
                                                                                       : std::to_string(v);
            throw DegenerateVariableError("variable '" + name + "' has zero variance", name);
        }
    }
    return stats;
}

RawSeries apply_norm(const RawSeries& series, const NormStats& stats) {
    if (stats.mean.size() != series.n_vars()) throw DimensionError("normalisation stats do not match variable count");
    RawSeries out = series;
    out.values = ((series.values.colwise() - stats.mean).array().colwise() / stats.std.array()).matrix();
    return out;
}

RawSeries denormalize(const RawSeries& series, const NormStats& stats) {
    if (stats.mean.size() != series.n_vars()) throw DimensionError("normalisation stats do not match variable count");
    RawSeries out = series;
    out.values = ((series.values.array().colwise() * stats.std.array()).matrix().colwise() + stats.mean);
    return out;
}

std::pair<RawSeries, NormStats> normalize(const RawSeries& series) {
    NormStats stats = compute_norm_stats(series);
    return {apply_norm(series, stats), stats};
}

RawSeries moving_average(const RawSeries& series, Index k) {
    if (k < 1) throw ConfigError("moving-average width must be >= 1");
    RawSeries out = series;
    Index offset = 0;
    for (const Index len : series.segments()) {
        for (Index t = 0; t < len; ++t) {
            const Index lo = std::max<Index>(0, t - k + 1);
            out.values.col(offset + t) = series.values.middleCols(offset + lo, t - lo + 1).rowwise().mean();
        }
        offset += len;
    }
    return out;
}

Index window_count(Index length, Index input_horizon, Index horizon, Index stride) {
    if (length < input_horizon + horizon) return 0;
    return (length - input_horizon - horizon) / stride + 1;
}

WindowedDataset make_windows(const RawSeries& series, Index input_horizon, Index horizon, Index stride) {
    if (input_horizon < 1 || horizon < 1 || stride < 1) {
        throw ConfigError("window sizes and stride must be >= 1");
    }
    WindowedDataset ds;
    ds.input_horizon = input_horizon;
    ds.horizon = horizon;
    ds.stride = stride;
    Index offset = 0;
    int seg = 0;
    for (const Index len : series.segments()) {
        const Index count = window_count(len, input_horizon, horizon, stride);
        if (count == 0) ds.too_short = true;
        for (Index i = 0; i < count; ++i) {
            const Index start = offset + i * stride;
            ds.inputs.push_back(series.values.middleCols(start, input_horizon));
            ds.targets.push_back(series.values.middleCols(start + input_horizon, horizon));
            ds.starts.push_back(start);
            ds.segment.push_back(seg);
        }
        offset += len;
        ++seg;
    }
    return ds;
}

WindowedDataset WindowedDataset::subset(std::size_t begin, std::size_t end) const {
    WindowedDataset out;
    out.input_horizon = input_horizon;
    out.horizon = horizon;
    out.stride = stride;
    out.too_short = too_short;
    end = std::min(end, size());
    for (std::size_t i = begin; i < end; ++i) {
        out.inputs.push_back(inputs[i]);
        out.targets.push_back(targets[i]);
        out.starts.push_back(starts[i]);
        out.segment.push_back(segment[i]);
    }
    return out;
}

DatasetSplits split(const WindowedDataset& dataset, const SplitSpec& spec) {
    const double fr[] = {spec.train_fraction, spec.val_fraction, spec.test_fraction};
    for (const double f : fr) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
    }
    if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    const auto n = static_cast<double>(dataset.size());
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
    const auto n_val = std::min(dataset.size() - std::min(n_train, dataset.size()),
                                static_cast<std::size_t>(std::llround(spec.val_fraction * n)));

    DatasetSplits out;
    if (spec.mode == SplitMode::chronological) {
        const std::size_t a = std::min(n_train, dataset.size());
        out.train = dataset.subset(0, a);
        out.val = dataset.subset(a, a + n_val);
        out.test = dataset.subset(a + n_val, dataset.size());
        return out;
    }

    // by_cycle: whole segments go to one split.
    out.train = dataset.subset(0, 0);
    out.val = dataset.subset(0, 0);
    out.test = dataset.subset(0, 0);
    std::size_t i = 0;
    while (i < dataset.size()) {
        std::size_t j = i;
        while (j < dataset.size() && dataset.segment[j] == dataset.segment[i]) ++j;
        WindowedDataset* dst = &out.test;
        if (out.train.size() < n_train) {
            dst = &out.train;
        } else if (out.val.size() < n_val) {
            dst = &out.val;
        }
        const WindowedDataset part = dataset.subset(i, j);
        for (std::size_t k = 0; k < part.size(); ++k) {
            dst->inputs.push_back(part.inputs[k]);
            dst->targets.push_back(part.targets[k]);
            dst->starts.push_back(part.starts[k]);
            dst->segment.push_back(part.segment[k]);
        }
        i = j;
    }
    return out;
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols) {
    Matrix m(rows, cols);
    if (static_cast<Index>(j.size()) != rows) throw DataError("dataset cache: row count mismatch");
    for (Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Index>(row.size()) != cols) throw DataError("dataset cache: column count mismatch");
        for (Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

json split_to_json(const WindowedDataset& ds) {
    json samples = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        samples.push_back({{"start", ds.starts[i]},
                           {"segment", ds.segment[i]},
                           {"input", matrix_to_json(ds.inputs[i])},
                           {"target", matrix_to_json(ds.targets[i])}});
    }
    return samples;
}

WindowedDataset split_from_json(const json& j, Index n_vars, Index input_horizon, Index horizon, Index stride) {
    WindowedDataset ds;
    ds.input_horizon = input_horizon;
    ds.horizon = horizon;
    ds.stride = stride;
    for (const auto& s : j) {
        ds.starts.push_back(s.at("start").get<Index>());
        ds.segment.push_back(s.at("segment").get<int>());
        ds.inputs.push_back(matrix_from_json(s.at("input"), n_vars, input_horizon));
        ds.targets.push_back(matrix_from_json(s.at("target"), n_vars, horizon));
    }
    return ds;
}

}  // namespace

void save_dataset_cache(const std::filesystem::path& path, const DatasetSplits& splits, const NormStats& stats,
                        const std::vector<std::string>& var_names) {
    json doc;
    doc["format"] = "gaets-dataset";
    doc["version"] = kDatasetCacheVersion;
    doc["var_names"] = var_names;
    doc["input_horizon"] = splits.train.input_horizon;
    doc["horizon"] = splits.train.horizon;
    doc["stride"] = splits.train.stride;
    doc["norm"] = {{"mean", std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size())},
                   {"std", std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size())}};
    doc["sizes"] = {{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()}};
    doc["train"] = split_to_json(splits.train);
    doc["val"] = split_to_json(splits.val);
    doc["test"] = split_to_json(splits.test);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset cache '" + path.string() + "'");
    out << doc.dump() << '\n';
}

DatasetCache load_dataset_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset cache '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("dataset cache '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (doc.value("format", "") != "gaets-dataset") throw DataError("not a dataset cache: " + path.string());
    if (doc.at("version").get<int>() != kDatasetCacheVersion) {
        throw DataError("unsupported dataset cache version " + doc.at("version").dump());
    }
    DatasetCache cache;
    cache.var_names = doc.at("var_names").get<std::vector<std::string>>();
    const auto mean = doc.at("norm").at("mean").get<std::vector<double>>();
    const auto std = doc.at("norm").at("std").get<std::vector<double>>();
    cache.stats.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
    cache.stats.std = Eigen::Map<const Vector>(std.data(), static_cast<Index>(std.size()));
    const auto n = static_cast<Index>(cache.var_names.size());
    const auto t_in = doc.at("input_horizon").get<Index>();
    const auto tau = doc.at("horizon").get<Index>();
    const auto stride = doc.at("stride").get<Index>();
    cache.splits.train = split_from_json(doc.at("train"), n, t_in, tau, stride);
    cache.splits.val = split_from_json(doc.at("val"), n, t_in, tau, stride);
    cache.splits.test = split_from_json(doc.at("test"), n, t_in, tau, stride);
    return cache;
}

}  // namespace gaets
