#pragma once

// Dataset ingestion, chronological splits, sliding windows, synthetic data,
// and the naive baseline used as an accuracy floor.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlstm/series_batch.hpp"

namespace xlstm {

struct ModelConfig;
struct ModelParams;

struct Dataset {
    std::vector<std::string> channel_names;
    std::vector<double> values;  // total_timesteps x channels, row-major
    std::size_t total_timesteps = 0;
    std::size_t channels = 0;
    std::string granularity;  // informational only

    double at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
    double& at(std::size_t t, std::size_t c) { return values[t * channels + c]; }
};

struct WindowSpec {
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t stride = 1;
};

// Comma-separated numeric columns; a date column, when given, is skipped for
// the math. Any unparseable or blank cell is a hard error naming row and
// column (1-based file coordinates).
Dataset load_csv(const std::string& path, bool has_header,
                 std::optional<std::size_t> date_column = std::nullopt);

struct SplitRatios {
    double train = 0.7, val = 0.1, test = 0.2;
};

struct Splits {
    Dataset train, val, test;
};

// Contiguous chronological segments; boundaries at cumulative floor(ratio * T).
Splits chronological_split(const Dataset& ds, const SplitRatios& ratios);

// Prepend the last `rows` rows of the preceding split so that early windows
// can reach back across the boundary. Changes the window count, so it is an
// explicit opt-in.
Dataset borrow_tail(const Dataset& previous, const Dataset& ds, std::size_t rows);

// Window start offsets at 0, stride, 2*stride, ...
std::vector<std::size_t> make_windows(const Dataset& ds, const WindowSpec& spec);

// Materialize (input, target) blocks for the given window offsets.
std::pair<SeriesBatch, SeriesBatch> gather_batch(const Dataset& ds,
                                                 const WindowSpec& spec,
                                                 const std::vector<std::size_t>& offsets);

// Per-channel sine with a slow linear drift plus optional gaussian noise;
// channel periods are drawn from [20, 60], deterministic per seed.
Dataset synth_sine_trend(std::size_t n, std::size_t m, double noise_sd,
                         std::uint64_t seed);

// Every forecast row repeats the last observed input row.
SeriesBatch naive_repeat_last(const SeriesBatch& input, std::size_t horizon);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

// Eval-mode forward over all windows; metrics averaged over every element.
// Accumulation is window-ordered, so results do not depend on batch size.
Metrics evaluate(ModelParams& params, const ModelConfig& config, const Dataset& ds,
                 const WindowSpec& spec, const std::vector<std::size_t>& offsets,
                 std::size_t batch_size);

struct StandardizeStats {
    std::vector<double> mean, stddev;  // per channel
};

// z-score every split with the train split's per-channel statistics.
StandardizeStats standardize_splits(Splits& splits);
void apply_standardize(Dataset& ds, const StandardizeStats& stats);
void invert_standardize(SeriesBatch& batch, const StandardizeStats& stats);

}  // namespace xlstm
