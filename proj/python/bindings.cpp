// Python bindings over the forecasting core. Arrays cross the boundary as
// numpy float64; shapes follow the C++ conventions (batch x time x channels).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xlstm/data.hpp"
#include "xlstm/model.hpp"
#include "xlstm/training.hpp"

namespace py = pybind11;
using namespace xlstm;

namespace {

SeriesBatch batch_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3)
        throw std::invalid_argument("expected an array of shape (batch, time, channels)");
    SeriesBatch b(arr.shape(0), arr.shape(1), arr.shape(2));
    std::copy(arr.data(), arr.data() + arr.size(), b.values.begin());
    return b;
}

py::array_t<double> array_from_batch(const SeriesBatch& b) {
    py::array_t<double> arr({b.batch, b.time, b.channels});
    std::copy(b.values.begin(), b.values.end(), arr.mutable_data());
    return arr;
}

Dataset dataset_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2)
        throw std::invalid_argument("expected an array of shape (time, channels)");
    Dataset ds;
    ds.total_timesteps = arr.shape(0);
    ds.channels = arr.shape(1);
    ds.values.assign(arr.data(), arr.data() + arr.size());
    for (std::size_t c = 0; c < ds.channels; ++c)
        ds.channel_names.push_back("ch" + std::to_string(c));
    return ds;
}

ModelConfig config_from_kwargs(std::size_t lookback, std::size_t horizon,
                               std::size_t channels, std::size_t hidden,
                               std::size_t cell_steps, const std::string& backend,
                               std::size_t decomp_window, bool decomp_learnable,
                               const std::string& forget_gate, const std::string& readout_denom,
                               const std::string& instnorm, std::uint64_t seed) {
    ModelConfig c;
    c.lookback = lookback;
    c.horizon = horizon;
    c.channels = channels;
    c.hidden_dim = hidden;
    c.cell_steps = cell_steps;
    c.backend = backend == "mlstm" ? Backend::kMlstm : Backend::kSlstm;
    c.decomp_window = decomp_window;
    c.decomp_learnable = decomp_learnable;
    c.forget_gate = forget_gate == "exp" ? ForgetGate::kExp : ForgetGate::kSigmoid;
    c.readout_denom = readout_denom == "strict" ? ReadoutDenominator::kStrict : ReadoutDenominator::kAbs;
    c.instnorm = instnorm == "literal" ? InstNorm::kLiteral
                 : instnorm == "off"   ? InstNorm::kOff
                                       : InstNorm::kRevin;
    c.seed = seed;
    validate_config(c);
    return c;
}

// Config + parameters + optional standardization stats, mirroring what a
// checkpoint file holds.
class Forecaster {
public:
    Forecaster(ModelConfig config) : config_(config), params_(init_model(config)) {}

    static Forecaster load(const std::string& path) {
        Checkpoint ckpt = load_checkpoint(path);
        Forecaster f(ckpt.config);
        f.params_ = std::move(ckpt.params);
        f.extra_ = std::move(ckpt.extra);
        return f;
    }

    void save(const std::string& path) {
        save_checkpoint(path, config_, params_, extra_);
    }

    py::array_t<double> predict(py::array_t<double, py::array::c_style | py::array::forcecast> x) {
        SeriesBatch batch = batch_from_array(x);
        auto [pred, cache] = forward(params_, config_, batch, /*training=*/false);
        return array_from_batch(pred);
    }

    py::dict fit(py::array_t<double, py::array::c_style | py::array::forcecast> data,
                 std::size_t epochs, std::size_t batch_size, double lr,
                 std::size_t patience, double train_ratio, double val_ratio) {
        Dataset ds = dataset_from_array(data);
        Splits splits = chronological_split(
            ds, {train_ratio, val_ratio, 1.0 - train_ratio - val_ratio});
        TrainOptions options;
        options.epochs = epochs;
        options.batch_size = batch_size;
        options.lr = lr;
        options.patience = patience;
        WindowSpec spec{config_.lookback, config_.horizon, 1};
        auto [best, report] = train(config_, splits.train, splits.val, spec, options);
        params_ = std::move(best);

        py::dict out;
        out["best_epoch"] = report.best_epoch;
        out["best_val_mse"] = report.best_val_mse;
        py::list epochs_list;
        for (const auto& e : report.epochs) {
            py::dict row;
            row["train_mae"] = e.train_mae;
            row["val_mse"] = e.val_mse;
            row["val_mae"] = e.val_mae;
            epochs_list.append(row);
        }
        out["epochs"] = epochs_list;
        return out;
    }

    py::tuple evaluate_on(py::array_t<double, py::array::c_style | py::array::forcecast> data,
                          std::size_t batch_size) {
        Dataset ds = dataset_from_array(data);
        WindowSpec spec{config_.lookback, config_.horizon, 1};
        auto offsets = make_windows(ds, spec);
        Metrics m = evaluate(params_, config_, ds, spec, offsets, batch_size);
        return py::make_tuple(m.mse, m.mae);
    }

    std::string backend() const { return backend_name(config_.backend); }
    std::size_t lookback() const { return config_.lookback; }
    std::size_t horizon() const { return config_.horizon; }
    std::size_t channels() const { return config_.channels; }

private:
    ModelConfig config_;
    ModelParams params_;
    std::vector<std::pair<std::string, Vector>> extra_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "sLSTM/mLSTM time series forecasting core";

    m.def("sigmoid", py::vectorize(static_cast<double (*)(double)>(&sigmoid)),
          "numerically stable logistic function");

    m.def(
        "decompose",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           std::size_t window) {
            py::array_t<double, py::array::c_style | py::array::forcecast> arr = x;
            if (arr.ndim() != 1)
                throw std::invalid_argument("decompose expects a 1-d series");
            DecompKernel kernel = uniform_decomp_kernel(window);
            const std::size_t len = arr.shape(0);
            std::vector<double> trend(len), seasonal(len);
            decompose_series(arr.data(), len, kernel, trend.data(), seasonal.data());
            return py::make_tuple(
                py::array_t<double>(static_cast<py::ssize_t>(len), trend.data()),
                py::array_t<double>(static_cast<py::ssize_t>(len), seasonal.data()));
        },
        py::arg("x"), py::arg("window") = 25,
        "moving-average trend + seasonal split; trend + seasonal == x");

    m.def(
        "instance_normalize",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            SeriesBatch batch = batch_from_array(x);
            auto [y, stats] = instance_normalize(batch);
            py::dict stats_dict;
            stats_dict["mean"] = stats.mean;
            stats_dict["stddev"] = stats.stddev;
            stats_dict["epsilon"] = stats.epsilon;
            return py::make_tuple(array_from_batch(y), stats_dict);
        },
        py::arg("x"), "per-instance per-channel normalization over the time axis");

    m.def(
        "instance_denormalize",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> y,
           py::dict stats_dict) {
            SeriesBatch batch = batch_from_array(y);
            InstanceNormStats stats;
            stats.batch = batch.batch;
            stats.channels = batch.channels;
            stats.mean = stats_dict["mean"].cast<std::vector<double>>();
            stats.stddev = stats_dict["stddev"].cast<std::vector<double>>();
            stats.epsilon = stats_dict["epsilon"].cast<double>();
            return array_from_batch(instance_denormalize(batch, stats));
        },
        py::arg("y"), py::arg("stats"), "inverse of instance_normalize");

    m.def(
        "select_backend",
        [](std::size_t channels, std::size_t timesteps) {
            return std::string(backend_name(select_backend(channels, timesteps)));
        },
        py::arg("channels"), py::arg("timesteps"),
        "'mlstm' for wide datasets, 'slstm' otherwise");

    m.def(
        "synth_sine_trend",
        [](std::size_t n, std::size_t m_channels, double noise_sd, std::uint64_t seed) {
            Dataset ds = synth_sine_trend(n, m_channels, noise_sd, seed);
            py::array_t<double> arr({ds.total_timesteps, ds.channels});
            std::copy(ds.values.begin(), ds.values.end(), arr.mutable_data());
            return arr;
        },
        py::arg("n"), py::arg("m"), py::arg("noise_sd") = 0.0, py::arg("seed") = 0,
        "seeded sine + linear drift test data, shape (n, m)");

    m.def(
        "gradcheck",
        [](const std::string& backend, std::size_t lookback, std::size_t horizon,
           std::size_t hidden, std::size_t cell_steps, std::size_t samples,
           std::uint64_t seed) {
            ModelConfig config = config_from_kwargs(
                lookback, horizon, 2, hidden, cell_steps, backend, 5, false, "sigmoid",
                "abs", "revin", seed);
            Dataset ds = synth_sine_trend(lookback + horizon + 8, 2, 0.1, seed + 17);
            WindowSpec spec{lookback, horizon, 1};
            auto offsets = make_windows(ds, spec);
            offsets.resize(std::min<std::size_t>(offsets.size(), 2));
            auto [batch, target] = gather_batch(ds, spec, offsets);
            GradCheckOptions options;
            options.max_coords_per_block = samples;
            options.seed = seed;
            py::dict out;
            for (const auto& c : grad_check(config, batch, target, options))
                out[py::str(c.name)] = c.max_rel_error;
            return out;
        },
        py::arg("backend") = "slstm", py::arg("lookback") = 16, py::arg("horizon") = 4,
        py::arg("hidden") = 8, py::arg("cell_steps") = 3, py::arg("samples") = 50,
        py::arg("seed") = 0,
        "max relative error of the analytic gradients per parameter block");

    py::class_<Forecaster>(m, "Forecaster")
        .def(py::init([](std::size_t lookback, std::size_t horizon, std::size_t channels,
                         std::size_t hidden, std::size_t cell_steps,
                         const std::string& backend, std::size_t decomp_window,
                         bool decomp_learnable, const std::string& forget_gate,
                         const std::string& readout_denom, const std::string& instnorm,
                         std::uint64_t seed) {
                 return Forecaster(config_from_kwargs(
                     lookback, horizon, channels, hidden, cell_steps, backend,
                     decomp_window, decomp_learnable, forget_gate, readout_denom, instnorm,
                     seed));
             }),
             py::arg("lookback") = 96, py::arg("horizon") = 24, py::arg("channels") = 1,
             py::arg("hidden") = 64, py::arg("cell_steps") = 16,
             py::arg("backend") = "slstm", py::arg("decomp_window") = 25,
             py::arg("decomp_learnable") = false, py::arg("forget_gate") = "sigmoid",
             py::arg("readout_denom") = "abs", py::arg("instnorm") = "revin", py::arg("seed") = 0)
        .def_static("load", &Forecaster::load, py::arg("path"))
        .def("save", &Forecaster::save, py::arg("path"))
        .def("predict", &Forecaster::predict, py::arg("x"),
             "forward pass, (B, L, m) -> (B, T, m)")
        .def("fit", &Forecaster::fit, py::arg("data"), py::arg("epochs") = 10,
             py::arg("batch_size") = 32, py::arg("lr") = 1e-4, py::arg("patience") = 5,
             py::arg("train_ratio") = 0.7, py::arg("val_ratio") = 0.1)
        .def("evaluate", &Forecaster::evaluate_on, py::arg("data"),
             py::arg("batch_size") = 32, "returns (mse, mae) over all windows")
        .def_property_readonly("backend", &Forecaster::backend)
        .def_property_readonly("lookback", &Forecaster::lookback)
        .def_property_readonly("horizon", &Forecaster::horizon)
        .def_property_readonly("channels", &Forecaster::channels);
}
