#include "xlstm/data.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "xlstm/model.hpp"
#include "xlstm/series_transforms.hpp"

namespace xlstm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string cell = trim(raw);
    if (cell.empty())
        throw std::runtime_error("load_csv: blank numeric cell at row " +
                                 std::to_string(row) + ", column " +
                                 std::to_string(col));
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw std::runtime_error("load_csv: unparseable numeric cell '" + cell +
                                 "' at row " + std::to_string(row) + ", column " +
                                 std::to_string(col));
    if (!std::isfinite(v))
        throw std::runtime_error("load_csv: non-finite value at row " +
                                 std::to_string(row) + ", column " +
                                 std::to_string(col));
    return v;
}

Dataset slice_dataset(const Dataset& ds, std::size_t begin, std::size_t end) {
    Dataset out;
    out.channel_names = ds.channel_names;
    out.channels = ds.channels;
    out.granularity = ds.granularity;
    out.total_timesteps = end - begin;
    out.values.assign(ds.values.begin() + begin * ds.channels,
                      ds.values.begin() + end * ds.channels);
    return out;
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_header,
                 std::optional<std::size_t> date_column) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

    Dataset ds;
    std::string line;
    std::size_t row = 0;
    std::size_t n_cols = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (n_cols == 0) {
            n_cols = cells.size();
            const std::size_t skip = date_column ? 1 : 0;
            check(n_cols > skip, "load_csv: no numeric columns in '" + path + "'");
            check(!date_column || *date_column < n_cols,
                  "load_csv: date column " + std::to_string(*date_column) +
                      " out of range for " + std::to_string(n_cols) + " columns");
            ds.channels = n_cols - skip;
            if (has_header) {
                for (std::size_t c = 0; c < n_cols; ++c)
                    if (!date_column || c != *date_column)
                        ds.channel_names.push_back(trim(cells[c]));
                continue;
            }
            for (std::size_t c = 0; c < ds.channels; ++c)
                ds.channel_names.push_back("ch" + std::to_string(c));
        }
        if (cells.size() != n_cols)
            throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(n_cols));
        for (std::size_t c = 0; c < n_cols; ++c) {
            if (date_column && c == *date_column) continue;
            ds.values.push_back(parse_cell(cells[c], row, c + 1));
        }
        ++ds.total_timesteps;
    }
    if (ds.total_timesteps == 0)
        throw std::runtime_error("load_csv: '" + path + "' contains no data rows");
    return ds;
}

Splits chronological_split(const Dataset& ds, const SplitRatios& ratios) {
    check(ratios.train > 0.0 && ratios.val >= 0.0 && ratios.test >= 0.0,
          "chronological_split: ratios must be positive");
    const double sum = ratios.train + ratios.val + ratios.test;
    check(sum <= 1.0 + 1e-9, "chronological_split: ratios sum to " +
                                 std::to_string(sum) + ", must be <= 1");
    const auto t = static_cast<double>(ds.total_timesteps);
    const auto b1 = static_cast<std::size_t>(std::floor(ratios.train * t));
    const auto b2 = static_cast<std::size_t>(std::floor((ratios.train + ratios.val) * t));
    const auto b3 = static_cast<std::size_t>(std::floor(sum * t));
    Splits s;
    s.train = slice_dataset(ds, 0, b1);
    s.val = slice_dataset(ds, b1, b2);
    s.test = slice_dataset(ds, b2, b3);
    return s;
}

Dataset borrow_tail(const Dataset& previous, const Dataset& ds, std::size_t rows) {
    check(previous.channels == ds.channels,
          "borrow_tail: channel counts differ (" + std::to_string(previous.channels) +
              " vs " + std::to_string(ds.channels) + ")");
    const std::size_t take = std::min(rows, previous.total_timesteps);
    Dataset out;
    out.channel_names = ds.channel_names;
    out.channels = ds.channels;
    out.granularity = ds.granularity;
    out.total_timesteps = ds.total_timesteps + take;
    out.values.reserve(out.total_timesteps * ds.channels);
    const std::size_t start = previous.total_timesteps - take;
    out.values.insert(out.values.end(),
                      previous.values.begin() + start * previous.channels,
                      previous.values.end());
    out.values.insert(out.values.end(), ds.values.begin(), ds.values.end());
    return out;
}

std::vector<std::size_t> make_windows(const Dataset& ds, const WindowSpec& spec) {
    check(spec.lookback >= 1 && spec.horizon >= 1 && spec.stride >= 1,
          "make_windows: lookback, horizon and stride must be >= 1");
    const std::size_t need = spec.lookback + spec.horizon;
    if (ds.total_timesteps < need)
        throw std::runtime_error("make_windows: dataset has " +
                                 std::to_string(ds.total_timesteps) +
                                 " timesteps but a window needs " +
                                 std::to_string(need));
    const std::size_t count = (ds.total_timesteps - need) / spec.stride + 1;
    std::vector<std::size_t> offsets(count);
    for (std::size_t i = 0; i < count; ++i) offsets[i] = i * spec.stride;
    return offsets;
}

std::pair<SeriesBatch, SeriesBatch> gather_batch(const Dataset& ds,
                                                 const WindowSpec& spec,
                                                 const std::vector<std::size_t>& offsets) {
    SeriesBatch input(offsets.size(), spec.lookback, ds.channels);
    SeriesBatch target(offsets.size(), spec.horizon, ds.channels);
    input.channel_names = ds.channel_names;
    target.channel_names = ds.channel_names;
    for (std::size_t b = 0; b < offsets.size(); ++b) {
        const std::size_t o = offsets[b];
        for (std::size_t t = 0; t < spec.lookback; ++t)
            for (std::size_t c = 0; c < ds.channels; ++c)
                input.at(b, t, c) = ds.at(o + t, c);
        for (std::size_t t = 0; t < spec.horizon; ++t)
            for (std::size_t c = 0; c < ds.channels; ++c)
                target.at(b, t, c) = ds.at(o + spec.lookback + t, c);
    }
    return {std::move(input), std::move(target)};
}

Dataset synth_sine_trend(std::size_t n, std::size_t m, double noise_sd,
                         std::uint64_t seed) {
    check(n >= 1 && m >= 1, "synth_sine_trend: n and m must be >= 1");
    Dataset ds;
    ds.total_timesteps = n;
    ds.channels = m;
    ds.granularity = "synthetic";
    ds.values.assign(n * m, 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> period_dist(20.0, 60.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> periods(m);
    for (std::size_t c = 0; c < m; ++c) {
        periods[c] = period_dist(rng);
        ds.channel_names.push_back("synth" + std::to_string(c));
    }
    const double two_pi = 2.0 * std::acos(-1.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < m; ++c)
            ds.at(t, c) = std::sin(two_pi * static_cast<double>(t) / periods[c]) +
                          0.001 * static_cast<double>(t) + noise_sd * noise(rng);
    return ds;
}

SeriesBatch naive_repeat_last(const SeriesBatch& input, std::size_t horizon) {
    check(input.time >= 1, "naive_repeat_last: empty input");
    SeriesBatch out(input.batch, horizon, input.channels);
    out.channel_names = input.channel_names;
    for (std::size_t b = 0; b < input.batch; ++b)
        for (std::size_t t = 0; t < horizon; ++t)
            for (std::size_t c = 0; c < input.channels; ++c)
                out.at(b, t, c) = input.at(b, input.time - 1, c);
    return out;
}

Metrics evaluate(ModelParams& params, const ModelConfig& config, const Dataset& ds,
                 const WindowSpec& spec, const std::vector<std::size_t>& offsets,
                 std::size_t batch_size) {
    check(!offsets.empty(), "evaluate: no windows");
    check(batch_size >= 1, "evaluate: batch size must be >= 1");
    double sq_sum = 0.0, abs_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < offsets.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, offsets.size());
        std::vector<std::size_t> chunk(offsets.begin() + begin, offsets.begin() + end);
        auto [input, target] = gather_batch(ds, spec, chunk);
        auto [pred, cache] = forward(params, config, input, /*training=*/false);
        for (std::size_t i = 0; i < pred.values.size(); ++i) {
            const double d = pred.values[i] - target.values[i];
            sq_sum += d * d;
            abs_sum += std::fabs(d);
        }
        count += pred.values.size();
    }
    return {sq_sum / static_cast<double>(count), abs_sum / static_cast<double>(count)};
}

StandardizeStats standardize_splits(Splits& splits) {
    const Dataset& train = splits.train;
    check(train.total_timesteps >= 2, "standardize_splits: train split too short");
    StandardizeStats stats;
    stats.mean.assign(train.channels, 0.0);
    stats.stddev.assign(train.channels, 0.0);
    const double inv_n = 1.0 / static_cast<double>(train.total_timesteps);
    for (std::size_t c = 0; c < train.channels; ++c) {
        double mean = 0.0;
        for (std::size_t t = 0; t < train.total_timesteps; ++t) mean += train.at(t, c);
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t t = 0; t < train.total_timesteps; ++t) {
            const double d = train.at(t, c) - mean;
            var += d * d;
        }
        var *= inv_n;
        stats.mean[c] = mean;
        stats.stddev[c] = std::sqrt(var);
    }
    apply_standardize(splits.train, stats);
    apply_standardize(splits.val, stats);
    apply_standardize(splits.test, stats);
    return stats;
}

void apply_standardize(Dataset& ds, const StandardizeStats& stats) {
    check(ds.channels == stats.mean.size(),
          "apply_standardize: dataset has " + std::to_string(ds.channels) +
              " channels, stats have " + std::to_string(stats.mean.size()));
    for (std::size_t t = 0; t < ds.total_timesteps; ++t)
        for (std::size_t c = 0; c < ds.channels; ++c)
            ds.at(t, c) = (ds.at(t, c) - stats.mean[c]) / (stats.stddev[c] + kNormEpsilon);
}

void invert_standardize(SeriesBatch& batch, const StandardizeStats& stats) {
    check(batch.channels == stats.mean.size(),
          "invert_standardize: batch has " + std::to_string(batch.channels) +
              " channels, stats have " + std::to_string(stats.mean.size()));
    for (std::size_t b = 0; b < batch.batch; ++b)
        for (std::size_t t = 0; t < batch.time; ++t)
            for (std::size_t c = 0; c < batch.channels; ++c)
                batch.at(b, t, c) =
                    batch.at(b, t, c) * (stats.stddev[c] + kNormEpsilon) + stats.mean[c];
}

}  // namespace xlstm
