// Command-line front end: train / evaluate / forecast / gradcheck / decompose.
//
// Exit codes: 0 success, 2 config or usage error, 3 numerical failure,
// 4 I/O error. gradcheck exits 1 when a block exceeds tolerance.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xlstm/data.hpp"
#include "xlstm/model.hpp"
#include "xlstm/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace xlstm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGradcheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct DataOptions {
    std::string data{"synthetic"};
    bool header = true;
    int date_column = -1;
    double train_ratio = 0.7, val_ratio = 0.1, test_ratio = 0.2;
    bool standardize = true;
    bool borrow_context = false;
    std::size_t synth_n = 2000, synth_m = 2;
    double synth_noise = 0.05;
};

struct ModelOptions {
    std::size_t lookback = 96, horizon = 24, hidden = 64, cell_steps = 16;
    std::string backend{"auto"};
    std::size_t decomp_window = 25;
    bool decomp_learnable = false;
    std::string forget_gate{"sigmoid"};
    std::string readout_denom{"abs"};
    std::string instnorm{"revin"};
    std::uint64_t seed = 0;
};

struct TrainCliOptions {
    std::size_t epochs = 50, batch_size = 32, patience = 5;
    double lr = 1e-4, clip_norm = 5.0;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--data", d.data, "dataset CSV path, or 'synthetic'");
    cmd->add_flag("--csv-header,!--no-csv-header", d.header,
                  "first CSV row is a header");
    cmd->add_option("--date-column", d.date_column,
                    "index of a date column to skip (-1: none)");
    cmd->add_option("--train-ratio", d.train_ratio, "chronological train fraction");
    cmd->add_option("--val-ratio", d.val_ratio, "chronological validation fraction");
    cmd->add_option("--test-ratio", d.test_ratio, "chronological test fraction");
    cmd->add_flag("--standardize,!--no-standardize", d.standardize,
                  "z-score all splits with train statistics");
    cmd->add_flag("--borrow-context", d.borrow_context,
                  "let val/test windows reach back into the preceding split");
    cmd->add_option("--synth-n", d.synth_n, "synthetic series length");
    cmd->add_option("--synth-m", d.synth_m, "synthetic channel count");
    cmd->add_option("--synth-noise", d.synth_noise, "synthetic noise std");
}

void add_model_options(CLI::App* cmd, ModelOptions& m, bool with_backend_choice) {
    cmd->add_option("--lookback", m.lookback, "look-back window L");
    cmd->add_option("--horizon", m.horizon, "forecast horizon T");
    cmd->add_option("--hidden", m.hidden, "hidden dimension");
    cmd->add_option("--cell-steps", m.cell_steps, "recurrence steps fed to the cell");
    if (with_backend_choice)
        cmd->add_option("--backend", m.backend, "auto | slstm | mlstm")
            ->check(CLI::IsMember({"auto", "slstm", "mlstm"}));
    cmd->add_option("--decomp-window", m.decomp_window, "decomposition window (odd)");
    cmd->add_flag("--decomp-learnable,!--no-decomp-learnable", m.decomp_learnable,
                  "train the decomposition kernel");
    cmd->add_option("--forget-gate", m.forget_gate, "sigmoid | exp")
        ->check(CLI::IsMember({"sigmoid", "exp"}));
    cmd->add_option("--readout-denom", m.readout_denom, "readout denominator: abs | strict")
        ->check(CLI::IsMember({"abs", "strict"}));
    cmd->add_option("--instnorm", m.instnorm, "revin | literal | off")
        ->check(CLI::IsMember({"revin", "literal", "off"}));
    cmd->add_option("--seed", m.seed, "seed for all randomness");
}

ModelConfig build_model_config(const ModelOptions& m, std::size_t channels,
                               std::size_t timesteps) {
    ModelConfig c;
    c.lookback = m.lookback;
    c.horizon = m.horizon;
    c.channels = channels;
    c.hidden_dim = m.hidden;
    c.cell_steps = m.cell_steps;
    c.backend = m.backend == "auto"    ? select_backend(channels, timesteps)
                : m.backend == "mlstm" ? Backend::kMlstm
                                       : Backend::kSlstm;
    c.decomp_window = m.decomp_window;
    c.decomp_learnable = m.decomp_learnable;
    c.forget_gate = m.forget_gate == "exp" ? ForgetGate::kExp : ForgetGate::kSigmoid;
    c.readout_denom = m.readout_denom == "strict" ? ReadoutDenominator::kStrict : ReadoutDenominator::kAbs;
    c.instnorm = m.instnorm == "revin"     ? InstNorm::kRevin
                 : m.instnorm == "literal" ? InstNorm::kLiteral
                                           : InstNorm::kOff;
    c.seed = m.seed;
    return c;
}

Dataset load_dataset(const DataOptions& d) {
    if (d.data == "synthetic")
        return synth_sine_trend(d.synth_n, d.synth_m, d.synth_noise, 12345);
    if (!fs::exists(d.data))
        throw std::runtime_error("dataset file not found: " + d.data);
    std::optional<std::size_t> date_col;
    if (d.date_column >= 0) date_col = static_cast<std::size_t>(d.date_column);
    return load_csv(d.data, d.header, date_col);
}

std::optional<StandardizeStats> checkpoint_standardize_stats(const Checkpoint& ckpt) {
    StandardizeStats stats;
    bool has_mean = false, has_std = false;
    for (const auto& [name, values] : ckpt.extra) {
        if (name == "standardize_mean") {
            stats.mean = values;
            has_mean = true;
        } else if (name == "standardize_std") {
            stats.stddev = values;
            has_std = true;
        }
    }
    if (has_mean && has_std) return stats;
    return std::nullopt;
}

// Every subcommand echoes its fully resolved settings before running and
// writes the same lines next to its outputs. Keys reuse the flag spellings.
struct ConfigEcho {
    std::vector<std::pair<std::string, std::string>> entries;

    void add(const std::string& key, const std::string& value) {
        entries.emplace_back(key, value);
    }
    void add(const std::string& key, const char* value) {
        entries.emplace_back(key, value);
    }
    void add(const std::string& key, std::size_t value) {
        add(key, std::to_string(value));
    }
    void add(const std::string& key, double value) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        add(key, std::string(buf));
    }
    void add(const std::string& key, bool value) { add(key, value ? "true" : "false"); }

    std::string text() const {
        std::string out;
        for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
        return out;
    }
    void print_and_write(const fs::path& out_dir) const {
        std::fputs(text().c_str(), stdout);
        std::fflush(stdout);
        std::ofstream file(out_dir / "config_resolved.txt");
        file << text();
    }
};

void echo_data(ConfigEcho& echo, const DataOptions& d) {
    echo.add("data", d.data);
    echo.add("csv-header", d.header);
    echo.add("date-column", std::to_string(d.date_column));
    echo.add("train-ratio", d.train_ratio);
    echo.add("val-ratio", d.val_ratio);
    echo.add("test-ratio", d.test_ratio);
    echo.add("standardize", d.standardize);
    echo.add("borrow-context", d.borrow_context);
    if (d.data == "synthetic") {
        echo.add("synth-n", d.synth_n);
        echo.add("synth-m", d.synth_m);
        echo.add("synth-noise", d.synth_noise);
    }
}

void echo_model(ConfigEcho& echo, const ModelOptions& m, const ModelConfig& config) {
    echo.add("lookback", config.lookback);
    echo.add("horizon", config.horizon);
    echo.add("channels", config.channels);
    echo.add("hidden", config.hidden_dim);
    echo.add("cell-steps", config.cell_steps);
    echo.add("backend", m.backend);
    echo.add("backend-resolved", backend_name(config.backend));
    echo.add("decomp-window", config.decomp_window);
    echo.add("decomp-learnable", config.decomp_learnable);
    echo.add("forget-gate", forget_gate_name(config.forget_gate));
    echo.add("readout-denom", readout_denom_name(config.readout_denom));
    echo.add("instnorm", instnorm_name(config.instnorm));
    echo.add("seed", std::to_string(config.seed));
}

json config_to_json(const ModelConfig& c) {
    json j;
    j["lookback"] = c.lookback;
    j["horizon"] = c.horizon;
    j["channels"] = c.channels;
    j["hidden_dim"] = c.hidden_dim;
    j["cell_steps"] = c.cell_steps;
    j["backend"] = backend_name(c.backend);
    j["decomp_window"] = c.decomp_window;
    j["decomp_learnable"] = c.decomp_learnable;
    j["forget_gate"] = forget_gate_name(c.forget_gate);
    j["readout_denom"] = readout_denom_name(c.readout_denom);
    j["instnorm"] = instnorm_name(c.instnorm);
    j["seed"] = c.seed;
    return j;
}

void write_predictions_csv(const fs::path& path, const Dataset& ds,
                           const WindowSpec& spec,
                           const std::vector<std::size_t>& offsets,
                           ModelParams& params, const ModelConfig& config,
                           std::size_t batch_size) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "window_index,horizon_step,channel,y_true,y_pred\n";
    char buf[64];
    for (std::size_t begin = 0; begin < offsets.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, offsets.size());
        std::vector<std::size_t> chunk(offsets.begin() + begin, offsets.begin() + end);
        auto [input, target] = gather_batch(ds, spec, chunk);
        auto [pred, cache] = forward(params, config, input, false);
        for (std::size_t b = 0; b < chunk.size(); ++b)
            for (std::size_t t = 0; t < spec.horizon; ++t)
                for (std::size_t c = 0; c < pred.channels; ++c) {
                    out << (begin + b) << ',' << t << ',' << c << ',';
                    std::snprintf(buf, sizeof buf, "%.17g", target.at(b, t, c));
                    out << buf << ',';
                    std::snprintf(buf, sizeof buf, "%.17g", pred.at(b, t, c));
                    out << buf << '\n';
                }
    }
}

int cmd_train(const DataOptions& data_opts, const ModelOptions& model_opts,
              const TrainCliOptions& train_opts, const std::string& out_dir,
              bool quiet) {
    fs::create_directories(out_dir);
    Dataset ds = load_dataset(data_opts);
    Splits splits = chronological_split(
        ds, {data_opts.train_ratio, data_opts.val_ratio, data_opts.test_ratio});
    std::optional<StandardizeStats> stats;
    if (data_opts.standardize) stats = standardize_splits(splits);

    ModelConfig config = build_model_config(model_opts, ds.channels, ds.total_timesteps);
    validate_config(config);
    if (data_opts.borrow_context)
        splits.val = borrow_tail(splits.train, splits.val, config.lookback);

    ConfigEcho echo;
    echo.add("command", "train");
    echo_data(echo, data_opts);
    echo_model(echo, model_opts, config);
    echo.add("epochs", train_opts.epochs);
    echo.add("batch-size", train_opts.batch_size);
    echo.add("lr", train_opts.lr);
    echo.add("patience", train_opts.patience);
    echo.add("clip-norm", train_opts.clip_norm);
    echo.add("out", out_dir);
    echo.print_and_write(out_dir);

    TrainOptions options;
    options.epochs = train_opts.epochs;
    options.batch_size = train_opts.batch_size;
    options.lr = train_opts.lr;
    options.patience = train_opts.patience;
    options.clip_norm = train_opts.clip_norm;
    options.verbose = !quiet;

    WindowSpec spec{config.lookback, config.horizon, 1};
    auto [params, report] = train(config, splits.train, splits.val, spec, options);

    std::vector<std::pair<std::string, Vector>> extra;
    if (stats) {
        extra.emplace_back("standardize_mean", stats->mean);
        extra.emplace_back("standardize_std", stats->stddev);
    }
    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), config, params,
                    extra);

    json j;
    j["seed"] = report.seed;
    j["best_epoch"] = report.best_epoch;
    j["best_val_mse"] = report.best_val_mse;
    j["epochs"] = json::array();
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        json row;
        row["epoch"] = e + 1;
        row["train_mae"] = report.epochs[e].train_mae;
        row["val_mse"] = report.epochs[e].val_mse;
        row["val_mae"] = report.epochs[e].val_mae;
        j["epochs"].push_back(row);
    }
    j["config"] = config_to_json(config);
    std::ofstream report_file(fs::path(out_dir) / "train_report.json");
    report_file << j.dump(2) << '\n';

    if (!quiet)
        std::fprintf(stderr, "best epoch %zu, val_mse %.6f\n", report.best_epoch,
                     report.best_val_mse);
    return kExitOk;
}

int cmd_evaluate(const DataOptions& data_opts, const std::string& checkpoint_path,
                 const std::string& split_name, std::size_t batch_size,
                 const std::string& out_dir) {
    fs::create_directories(out_dir);
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset ds = load_dataset(data_opts);
    if (ds.channels != ckpt.config.channels)
        throw std::invalid_argument(
            "evaluate: dataset has " + std::to_string(ds.channels) +
            " channels but the checkpoint was trained with " +
            std::to_string(ckpt.config.channels));

    Splits splits = chronological_split(
        ds, {data_opts.train_ratio, data_opts.val_ratio, data_opts.test_ratio});
    if (auto stats = checkpoint_standardize_stats(ckpt)) {
        apply_standardize(splits.train, *stats);
        apply_standardize(splits.val, *stats);
        apply_standardize(splits.test, *stats);
    }

    Dataset target_split = split_name == "train" ? splits.train
                           : split_name == "val" ? splits.val
                                                 : splits.test;
    if (data_opts.borrow_context) {
        if (split_name == "val")
            target_split = borrow_tail(splits.train, splits.val, ckpt.config.lookback);
        else if (split_name == "test")
            target_split = borrow_tail(splits.val, splits.test, ckpt.config.lookback);
    }
    WindowSpec spec{ckpt.config.lookback, ckpt.config.horizon, 1};
    auto offsets = make_windows(target_split, spec);

    ConfigEcho echo;
    echo.add("command", "evaluate");
    echo.add("checkpoint", checkpoint_path);
    echo_data(echo, data_opts);
    echo.add("split", split_name);
    echo.add("batch-size", batch_size);
    echo.add("windows", offsets.size());
    echo.add("lookback", ckpt.config.lookback);
    echo.add("horizon", ckpt.config.horizon);
    echo.add("channels", ckpt.config.channels);
    echo.add("backend", backend_name(ckpt.config.backend));
    echo.add("out", out_dir);
    echo.print_and_write(out_dir);

    Metrics metrics =
        evaluate(ckpt.params, ckpt.config, target_split, spec, offsets, batch_size);

    json j;
    j["mse"] = metrics.mse;
    j["mae"] = metrics.mae;
    j["split"] = split_name;
    j["windows"] = offsets.size();
    j["seed"] = ckpt.config.seed;
    j["config"] = config_to_json(ckpt.config);
    std::ofstream metrics_file(fs::path(out_dir) / "metrics.json");
    metrics_file << j.dump(2) << '\n';

    write_predictions_csv(fs::path(out_dir) / "predictions.csv", target_split, spec,
                          offsets, ckpt.params, ckpt.config, batch_size);

    std::printf("mse = %.6f\nmae = %.6f\n", metrics.mse, metrics.mae);
    return kExitOk;
}

int cmd_forecast(const DataOptions& data_opts, const std::string& checkpoint_path,
                 const std::string& input_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    std::optional<std::size_t> date_col;
    if (data_opts.date_column >= 0)
        date_col = static_cast<std::size_t>(data_opts.date_column);
    if (!fs::exists(input_path))
        throw std::runtime_error("input file not found: " + input_path);
    Dataset ds = load_csv(input_path, data_opts.header, date_col);

    if (ds.channels != ckpt.config.channels)
        throw std::invalid_argument(
            "forecast: input has " + std::to_string(ds.channels) +
            " channels but the checkpoint expects " +
            std::to_string(ckpt.config.channels));
    const std::size_t lookback = ckpt.config.lookback;
    if (ds.total_timesteps < lookback)
        throw std::invalid_argument("forecast: input has " +
                                    std::to_string(ds.total_timesteps) +
                                    " rows but the model requires at least " +
                                    std::to_string(lookback));

    const auto stats = checkpoint_standardize_stats(ckpt);
    if (stats) apply_standardize(ds, *stats);

    ConfigEcho echo;
    echo.add("command", "forecast");
    echo.add("checkpoint", checkpoint_path);
    echo.add("input", input_path);
    echo.add("input-rows", ds.total_timesteps);
    echo.add("lookback", lookback);
    echo.add("horizon", ckpt.config.horizon);
    echo.add("channels", ckpt.config.channels);
    echo.add("standardize", stats.has_value());
    echo.add("out", out_dir);
    echo.print_and_write(out_dir);

    // the last L rows form the input window
    SeriesBatch input(1, lookback, ds.channels);
    const std::size_t start = ds.total_timesteps - lookback;
    for (std::size_t t = 0; t < lookback; ++t)
        for (std::size_t c = 0; c < ds.channels; ++c)
            input.at(0, t, c) = ds.at(start + t, c);

    auto [pred, cache] = forward(ckpt.params, ckpt.config, input, false);
    if (stats) invert_standardize(pred, *stats);

    std::ofstream out(fs::path(out_dir) / "forecast.csv");
    if (!out) throw std::runtime_error("cannot write forecast.csv");
    for (std::size_t c = 0; c < ds.channels; ++c)
        out << (c ? "," : "") << ds.channel_names[c];
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < ckpt.config.horizon; ++t) {
        for (std::size_t c = 0; c < ds.channels; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", pred.at(0, t, c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
    return kExitOk;
}

int cmd_gradcheck(const ModelOptions& model_opts, const std::string& which,
                  double step, double tolerance, std::size_t samples, bool corrupt) {
    std::vector<Backend> backends;
    if (which == "slstm" || which == "both") backends.push_back(Backend::kSlstm);
    if (which == "mlstm" || which == "both") backends.push_back(Backend::kMlstm);

    ConfigEcho echo;
    echo.add("command", "gradcheck");
    echo.add("backend", which);
    echo.add("lookback", model_opts.lookback);
    echo.add("horizon", model_opts.horizon);
    echo.add("channels", std::size_t{2});
    echo.add("hidden", model_opts.hidden);
    echo.add("cell-steps", model_opts.cell_steps);
    echo.add("decomp-window", model_opts.decomp_window);
    echo.add("decomp-learnable", model_opts.decomp_learnable);
    echo.add("forget-gate", model_opts.forget_gate);
    echo.add("step", step);
    echo.add("tolerance", tolerance);
    echo.add("gc-samples", samples);
    echo.add("seed", std::to_string(model_opts.seed));
    std::fputs(echo.text().c_str(), stdout);

    bool all_ok = true;
    for (Backend backend : backends) {
        ModelConfig config;
        config.lookback = model_opts.lookback;
        config.horizon = model_opts.horizon;
        config.channels = 2;
        config.hidden_dim = model_opts.hidden;
        config.cell_steps = model_opts.cell_steps;
        config.decomp_window = model_opts.decomp_window;
        config.decomp_learnable = model_opts.decomp_learnable;
        config.backend = backend;
        config.forget_gate =
            model_opts.forget_gate == "exp" ? ForgetGate::kExp : ForgetGate::kSigmoid;
        config.seed = model_opts.seed;
        validate_config(config);

        Dataset ds = synth_sine_trend(config.lookback + config.horizon + 8,
                                      config.channels, 0.1, config.seed + 17);
        WindowSpec spec{config.lookback, config.horizon, 1};
        auto offsets = make_windows(ds, spec);
        offsets.resize(std::min<std::size_t>(offsets.size(), 2));
        auto [batch, target] = gather_batch(ds, spec, offsets);

        GradCheckOptions options;
        options.step = step;
        options.tolerance = tolerance;
        options.max_coords_per_block = samples;
        options.seed = config.seed;
        options.corrupt_analytic = corrupt;

        std::printf("gradcheck backend=%s\n", backend_name(backend));
        auto checks = grad_check(config, batch, target, options);
        for (const auto& c : checks) {
            const bool ok = c.max_rel_error < tolerance;
            all_ok &= ok;
            std::printf("  %-22s max_rel_err %.3e over %zu coords  [%s]\n",
                        c.name.c_str(), c.max_rel_error, c.sampled, ok ? "ok" : "FAIL");
        }
    }
    std::printf(all_ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return all_ok ? kExitOk : kExitGradcheckFailed;
}

int cmd_decompose(const DataOptions& data_opts, const std::string& input_path,
                  std::size_t window, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::optional<std::size_t> date_col;
    if (data_opts.date_column >= 0)
        date_col = static_cast<std::size_t>(data_opts.date_column);
    if (!fs::exists(input_path))
        throw std::runtime_error("input file not found: " + input_path);
    Dataset ds = load_csv(input_path, data_opts.header, date_col);

    ConfigEcho echo;
    echo.add("command", "decompose");
    echo.add("input", input_path);
    echo.add("rows", ds.total_timesteps);
    echo.add("channels", ds.channels);
    echo.add("window", window);
    echo.add("out", out_dir);
    echo.print_and_write(out_dir);

    DecompKernel kernel = uniform_decomp_kernel(window);
    SeriesBatch x(1, ds.total_timesteps, ds.channels);
    for (std::size_t t = 0; t < ds.total_timesteps; ++t)
        for (std::size_t c = 0; c < ds.channels; ++c) x.at(0, t, c) = ds.at(t, c);
    auto [trend, seasonal] = decompose(x, kernel);

    auto write_part = [&](const fs::path& path, const SeriesBatch& part) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        for (std::size_t c = 0; c < ds.channels; ++c)
            out << (c ? "," : "") << ds.channel_names[c];
        out << '\n';
        char buf[64];
        for (std::size_t t = 0; t < ds.total_timesteps; ++t) {
            for (std::size_t c = 0; c < ds.channels; ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", part.at(0, t, c));
                out << (c ? "," : "") << buf;
            }
            out << '\n';
        }
    };
    write_part(fs::path(out_dir) / "trend.csv", trend);
    write_part(fs::path(out_dir) / "seasonal.csv", seasonal);
    return kExitOk;
}

int classify_error(const std::exception& e) {
    const std::string what = e.what();
    if (what.find("diverged") != std::string::npos ||
        what.find("non-finite") != std::string::npos ||
        what.find("normalizer hit zero") != std::string::npos)
        return kExitNumerical;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return kExitConfig;
    return kExitIo;
}

std::string trim_ws(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Expand `--config FILE` into `--key=value` tokens placed directly after the
// subcommand name. Command-line flags come later in the token stream and all
// options take the last value given, so flags always win over the file.
std::vector<std::string> expand_config_file(int argc, char** argv) {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == "--config" && i + 1 < tokens.size())
            config_path = tokens[i + 1];
        else if (tokens[i].rfind("--config=", 0) == 0)
            config_path = tokens[i].substr(9);
    }
    if (config_path.empty()) return tokens;

    std::ifstream file(config_path);
    if (!file)
        throw std::invalid_argument("cannot open config file '" + config_path + "'");
    std::vector<std::string> expanded;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim_ws(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config file '" + config_path + "' line " +
                                        std::to_string(line_no) +
                                        ": expected key = value");
        const std::string key = trim_ws(line.substr(0, eq));
        const std::string value = trim_ws(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config file '" + config_path + "' line " +
                                        std::to_string(line_no) + ": empty key");
        if (key == "config")
            throw std::invalid_argument("config file '" + config_path +
                                        "' may not set 'config'");
        expanded.push_back("--" + key + "=" + value);
    }

    // insert after the subcommand name (the first bare token)
    std::vector<std::string> out;
    bool inserted = false;
    for (const std::string& tok : tokens) {
        out.push_back(tok);
        if (!inserted && !tok.empty() && tok[0] != '-') {
            out.insert(out.end(), expanded.begin(), expanded.end());
            inserted = true;
        }
    }
    if (!inserted) out.insert(out.end(), expanded.begin(), expanded.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"xLSTM-style time series forecasting engine"};
    app.require_subcommand(1);

    DataOptions data_opts;
    ModelOptions model_opts;
    // gradcheck defaults to a tiny configuration so finite differences stay fast
    ModelOptions gc_opts;
    gc_opts.lookback = 16;
    gc_opts.horizon = 4;
    gc_opts.hidden = 8;
    gc_opts.cell_steps = 3;
    gc_opts.decomp_window = 5;

    TrainCliOptions train_opts;
    std::string out_dir = "out";
    std::string checkpoint_path, input_path, split_name = "test";
    std::size_t batch_size = 32, decompose_window = 25;
    std::string gradcheck_backend = "both";
    double gc_step = 1e-5, gc_tolerance = 1e-4;
    std::size_t gc_samples = 200;
    bool gc_corrupt = false;
    bool quiet = false;

    // The config file is pre-expanded into tokens before parsing; this option
    // documents the flag and absorbs it. Subcommands take the last value per
    // option, so command-line flags override file entries.
    std::string config_path;
    auto make_subcommand = [&app](const std::string& name, const std::string& desc) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        return cmd;
    };
    auto add_config_file = [&config_path](CLI::App* cmd) {
        cmd->add_option("--config", config_path,
                        "flat key = value config file; flags win");
    };

    CLI::App* train_cmd = make_subcommand("train", "fit a model and save a checkpoint");
    add_data_options(train_cmd, data_opts);
    add_model_options(train_cmd, model_opts, /*with_backend_choice=*/true);
    train_cmd->add_option("--epochs", train_opts.epochs, "epoch budget");
    train_cmd->add_option("--batch-size", train_opts.batch_size, "windows per batch");
    train_cmd->add_option("--lr", train_opts.lr, "Adam learning rate");
    train_cmd->add_option("--patience", train_opts.patience,
                          "early-stop after this many non-improving epochs");
    train_cmd->add_option("--clip-norm", train_opts.clip_norm,
                          "global gradient-norm clip (0 disables)");
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_flag("--quiet", quiet, "suppress progress lines");
    add_config_file(train_cmd);

    CLI::App* eval_cmd = make_subcommand("evaluate", "metrics + predictions CSV");
    add_data_options(eval_cmd, data_opts);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
    eval_cmd->add_option("--split", split_name, "train | val | test")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval_cmd->add_option("--batch-size", batch_size, "evaluation batch size");
    eval_cmd->add_option("--out", out_dir, "output directory");
    add_config_file(eval_cmd);

    CLI::App* forecast_cmd =
        make_subcommand("forecast", "predict the horizon after an input CSV");
    forecast_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")
        ->required();
    forecast_cmd->add_option("--input", input_path, "CSV with at least L rows")
        ->required();
    forecast_cmd->add_flag("--csv-header,!--no-csv-header", data_opts.header,
                           "first CSV row is a header");
    forecast_cmd->add_option("--date-column", data_opts.date_column,
                             "index of a date column to skip (-1: none)");
    forecast_cmd->add_option("--out", out_dir, "output directory");
    add_config_file(forecast_cmd);

    CLI::App* gradcheck_cmd =
        make_subcommand("gradcheck", "finite-difference check of the backward pass");
    add_model_options(gradcheck_cmd, gc_opts, /*with_backend_choice=*/false);
    gradcheck_cmd->add_option("--backend", gradcheck_backend, "slstm | mlstm | both")
        ->check(CLI::IsMember({"slstm", "mlstm", "both"}));
    gradcheck_cmd->add_option("--step", gc_step, "finite-difference step");
    gradcheck_cmd->add_option("--tolerance", gc_tolerance, "max relative error");
    gradcheck_cmd->add_option("--gc-samples", gc_samples, "sampled coords per block");
    gradcheck_cmd
        ->add_flag("--test-corrupt-gradient", gc_corrupt,
                   "test hook: corrupt the analytic gradient so the check fails")
        ->group("");  // hidden
    add_config_file(gradcheck_cmd);

    CLI::App* decompose_cmd =
        make_subcommand("decompose", "split a CSV into trend and seasonal parts");
    decompose_cmd->add_option("--input", input_path, "input CSV")->required();
    decompose_cmd->add_option("--window", decompose_window,
                              "moving-average window (odd)");
    decompose_cmd->add_flag("--csv-header,!--no-csv-header", data_opts.header,
                            "first CSV row is a header");
    decompose_cmd->add_option("--date-column", data_opts.date_column,
                              "index of a date column to skip (-1: none)");
    decompose_cmd->add_option("--out", out_dir, "output directory");
    add_config_file(decompose_cmd);

    try {
        std::vector<std::string> tokens = expand_config_file(argc, argv);
        std::reverse(tokens.begin(), tokens.end());  // CLI11 parses back to front
        app.parse(tokens);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(data_opts, model_opts, train_opts, out_dir, quiet);
        if (eval_cmd->parsed())
            return cmd_evaluate(data_opts, checkpoint_path, split_name, batch_size,
                                out_dir);
        if (forecast_cmd->parsed())
            return cmd_forecast(data_opts, checkpoint_path, input_path, out_dir);
        if (gradcheck_cmd->parsed())
            return cmd_gradcheck(gc_opts, gradcheck_backend, gc_step, gc_tolerance,
                                 gc_samples, gc_corrupt);
        if (decompose_cmd->parsed())
            return cmd_decompose(data_opts, input_path, decompose_window, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify_error(e);
    }
    return kExitConfig;
}
