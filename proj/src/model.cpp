#include "xlstm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace xlstm {

namespace {

void fill_uniform(std::vector<double>& v, double k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-k, k);
    for (double& x : v) x = dist(rng);
}

}  // namespace

void validate_config(const ModelConfig& config) {
    std::string problems;
    auto require = [&](bool ok, const std::string& what) {
        if (!ok) problems += problems.empty() ? what : "; " + what;
    };
    require(config.lookback >= 1, "lookback must be >= 1");
    require(config.horizon >= 1, "horizon must be >= 1");
    require(config.channels >= 1, "channels must be >= 1");
    require(config.hidden_dim >= 1, "hidden_dim must be >= 1");
    require(config.cell_steps >= 1, "cell_steps must be >= 1");
    require(config.decomp_window >= 1 && config.decomp_window % 2 == 1,
            "decomp_window must be odd and positive");
    require(config.decomp_window <= 2 * config.lookback,
            "decomp_window must be <= 2 * lookback");
    check(problems.empty(), "invalid model config: " + problems);
}

std::vector<ParamBlock> param_blocks(ModelParams& params) {
    std::vector<ParamBlock> blocks;
    auto add = [&](const std::string& name, std::vector<double>& v, bool trainable) {
        blocks.push_back({name, v.data(), v.size(), trainable});
    };
    add("input_linear.W", params.input_w.data, true);
    add("input_linear.b", params.input_b, true);
    add("batchnorm.gamma", params.bn.gamma, true);
    add("batchnorm.beta", params.bn.beta, true);
    add("batchnorm.running_mean", params.bn.running_mean, false);
    add("batchnorm.running_var", params.bn.running_var, false);
    if (auto* s = std::get_if<SlstmParams>(&params.cell)) {
        add("slstm.W_z", s->w_z.data, true);
        add("slstm.W_i", s->w_i.data, true);
        add("slstm.W_f", s->w_f.data, true);
        add("slstm.W_o", s->w_o.data, true);
        add("slstm.r_z", s->r_z.data, true);
        add("slstm.r_i", s->r_i.data, true);
        add("slstm.r_f", s->r_f.data, true);
        add("slstm.r_o", s->r_o.data, true);
        add("slstm.b_z", s->b_z, true);
        add("slstm.b_i", s->b_i, true);
        add("slstm.b_f", s->b_f, true);
        add("slstm.b_o", s->b_o, true);
    } else {
        auto* m = std::get_if<MlstmParams>(&params.cell);
        add("mlstm.W_q", m->w_q.data, true);
        add("mlstm.W_k", m->w_k.data, true);
        add("mlstm.W_v", m->w_v.data, true);
        add("mlstm.b_q", m->b_q, true);
        add("mlstm.b_k", m->b_k, true);
        add("mlstm.b_v", m->b_v, true);
        add("mlstm.w_i", m->w_i, true);
        add("mlstm.w_f", m->w_f, true);
        blocks.push_back({"mlstm.b_i", &m->b_i, 1, true});
        blocks.push_back({"mlstm.b_f", &m->b_f, 1, true});
        add("mlstm.W_o", m->w_o.data, true);
        add("mlstm.b_o", m->b_o, true);
    }
    add("output_linear.W", params.output_w.data, true);
    add("output_linear.b", params.output_b, true);
    add("decomp.kernel", params.kernel.weights, params.kernel.learnable);
    return blocks;
}

ModelParams init_model(const ModelConfig& config) {
    validate_config(config);
    std::mt19937_64 rng(config.seed);
    ModelParams p;
    const std::size_t in_features = 2 * config.lookback;
    const std::size_t projected = config.projected_dim();
    p.input_w = Matrix(projected, in_features);
    p.input_b = Vector(projected, 0.0);
    const double k_in = 1.0 / std::sqrt(static_cast<double>(in_features));
    fill_uniform(p.input_w.data, k_in, rng);
    fill_uniform(p.input_b, k_in, rng);

    p.bn = BatchNormParams(projected);

    if (config.backend == Backend::kSlstm)
        p.cell = init_slstm_params(config.hidden_dim, config.hidden_dim, rng);
    else
        p.cell = init_mlstm_params(config.hidden_dim, config.hidden_dim, rng);

    p.output_w = Matrix(config.horizon, config.hidden_dim);
    p.output_b = Vector(config.horizon, 0.0);
    const double k_out = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
    fill_uniform(p.output_w.data, k_out, rng);
    fill_uniform(p.output_b, k_out, rng);

    p.kernel = uniform_decomp_kernel(config.decomp_window, config.decomp_learnable);
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z = params;
    for (auto& block : param_blocks(z))
        std::fill(block.data, block.data + block.size, 0.0);
    return z;
}

std::pair<SeriesBatch, ForwardCache> forward(ModelParams& params,
                                             const ModelConfig& config,
                                             const SeriesBatch& batch, bool training) {
    check(batch.time == config.lookback && batch.channels == config.channels,
          "forward: batch shape " + batch.shape_str() + " does not match config " +
              std::to_string(config.lookback) + " lookback x " +
              std::to_string(config.channels) + " channels");
    check(batch.batch >= 1, "forward: empty batch");

    const std::size_t instances = batch.batch * batch.channels;
    const std::size_t lookback = config.lookback;
    const std::size_t hidden = config.hidden_dim;
    const std::size_t steps = config.cell_steps;
    const std::size_t projected = config.projected_dim();

    ForwardCache cache;
    cache.training = training;
    cache.batch = batch.batch;
    cache.window.resize(instances);
    if (config.instnorm == InstNorm::kRevin) {
        cache.revin_mean.resize(instances);
        cache.revin_scale.resize(instances);
    }

    // Stage 1: per-instance normalization + decomposition + projection.
    cache.projected = Matrix(instances, projected);
    Vector concat(2 * lookback);
    std::vector<double> trend(lookback), seasonal(lookback);
    for (std::size_t b = 0; b < batch.batch; ++b)
        for (std::size_t c = 0; c < batch.channels; ++c) {
            const std::size_t inst = b * batch.channels + c;
            Vector window(lookback);
            for (std::size_t t = 0; t < lookback; ++t) window[t] = batch.at(b, t, c);
            if (config.instnorm == InstNorm::kRevin) {
                double mean = 0.0;
                for (double v : window) mean += v;
                mean /= static_cast<double>(lookback);
                double var = 0.0;
                for (double v : window) var += (v - mean) * (v - mean);
                var /= static_cast<double>(lookback);
                const double scale = std::sqrt(var) + kNormEpsilon;
                for (double& v : window) v = (v - mean) / scale;
                cache.revin_mean[inst] = mean;
                cache.revin_scale[inst] = scale;
            }
            decompose_series(window.data(), lookback, params.kernel, trend.data(),
                             seasonal.data());
            for (std::size_t t = 0; t < lookback; ++t) {
                concat[t] = trend[t];
                concat[lookback + t] = seasonal[t];
            }
            Vector proj = matvec(params.input_w, concat);
            for (std::size_t j = 0; j < projected; ++j)
                cache.projected(inst, j) = proj[j] + params.input_b[j];
            cache.window[inst] = std::move(window);
        }

    // Stage 2: batch norm over all instances at once.
    Matrix normalized =
        batchnorm_forward(cache.projected, params.bn, training, &cache.bn);

    // Stage 3: recurrence and horizon head per instance.
    SeriesBatch preds(batch.batch, config.horizon, batch.channels);
    preds.channel_names = batch.channel_names;
    if (config.backend == Backend::kSlstm)
        cache.slstm_caches.resize(instances);
    else
        cache.mlstm_caches.resize(instances);
    cache.last_hidden.resize(instances);
    cache.head_out.resize(instances);
    if (config.instnorm == InstNorm::kLiteral) {
        cache.literal_mean.resize(instances);
        cache.literal_std.resize(instances);
    }

    for (std::size_t inst = 0; inst < instances; ++inst) {
        std::vector<Vector> xs(steps, Vector(hidden));
        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t j = 0; j < hidden; ++j)
                xs[s][j] = normalized(inst, s * hidden + j);

        Vector last;
        if (config.backend == Backend::kSlstm) {
            const auto& cell = std::get<SlstmParams>(params.cell);
            auto [hs, caches] =
                slstm_forward(cell, zero_slstm_state(hidden), xs, config.forget_gate);
            last = hs.back();
            cache.slstm_caches[inst] = std::move(caches);
        } else {
            const auto& cell = std::get<MlstmParams>(params.cell);
            auto [hs, caches] = mlstm_forward(cell, zero_mlstm_state(hidden), xs,
                                              config.forget_gate, config.readout_denom);
            last = hs.back();
            cache.mlstm_caches[inst] = std::move(caches);
        }

        Vector out = matvec(params.output_w, last);
        for (std::size_t t = 0; t < config.horizon; ++t) out[t] += params.output_b[t];
        cache.last_hidden[inst] = std::move(last);
        cache.head_out[inst] = out;

        const std::size_t b = inst / batch.channels;
        const std::size_t c = inst % batch.channels;
        if (config.instnorm == InstNorm::kRevin) {
            for (std::size_t t = 0; t < config.horizon; ++t)
                preds.at(b, t, c) =
                    out[t] * cache.revin_scale[inst] + cache.revin_mean[inst];
        } else if (config.instnorm == InstNorm::kLiteral) {
            double mean = 0.0;
            for (double v : out) mean += v;
            mean /= static_cast<double>(config.horizon);
            double var = 0.0;
            for (double v : out) var += (v - mean) * (v - mean);
            var /= static_cast<double>(config.horizon);
            const double sd = std::sqrt(var);
            cache.literal_mean[inst] = mean;
            cache.literal_std[inst] = sd;
            for (std::size_t t = 0; t < config.horizon; ++t)
                preds.at(b, t, c) = (out[t] - mean) / (sd + kNormEpsilon);
        } else {
            for (std::size_t t = 0; t < config.horizon; ++t) preds.at(b, t, c) = out[t];
        }
    }
    return {std::move(preds), std::move(cache)};
}

ModelParams backward(const ModelParams& params, const ModelConfig& config,
                     const ForwardCache& cache, const SeriesBatch& grad_predictions) {
    check(cache.training, "backward: cache must come from a training-mode forward");
    check(grad_predictions.batch == cache.batch &&
              grad_predictions.time == config.horizon &&
              grad_predictions.channels == config.channels,
          "backward: gradient shape " + grad_predictions.shape_str() +
              " does not match predictions");

    const std::size_t instances = cache.batch * config.channels;
    const std::size_t lookback = config.lookback;
    const std::size_t hidden = config.hidden_dim;
    const std::size_t steps = config.cell_steps;
    const std::size_t projected = config.projected_dim();

    ModelParams grads = zeros_like(params);

    Matrix grad_normalized(instances, projected);

    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::size_t b = inst / config.channels;
        const std::size_t c = inst % config.channels;

        // Undo the output-side instance normalization.
        Vector grad_out(config.horizon);
        if (config.instnorm == InstNorm::kRevin) {
            for (std::size_t t = 0; t < config.horizon; ++t)
                grad_out[t] = grad_predictions.at(b, t, c) * cache.revin_scale[inst];
        } else if (config.instnorm == InstNorm::kLiteral) {
            const double sd = cache.literal_std[inst];
            const double s = sd + kNormEpsilon;
            const double n = static_cast<double>(config.horizon);
            const Vector& y = cache.head_out[inst];
            const double mean = cache.literal_mean[inst];
            double g_sum = 0.0, g_dot = 0.0;
            for (std::size_t t = 0; t < config.horizon; ++t) {
                g_sum += grad_predictions.at(b, t, c);
                g_dot += grad_predictions.at(b, t, c) * (y[t] - mean);
            }
            for (std::size_t t = 0; t < config.horizon; ++t) {
                double g = (grad_predictions.at(b, t, c) - g_sum / n) / s;
                if (sd > 0.0) g -= g_dot * (y[t] - mean) / (s * s * n * sd);
                grad_out[t] = g;
            }
        } else {
            for (std::size_t t = 0; t < config.horizon; ++t)
                grad_out[t] = grad_predictions.at(b, t, c);
        }

        // Horizon head.
        add_outer(grads.output_w, grad_out, cache.last_hidden[inst]);
        for (std::size_t t = 0; t < config.horizon; ++t)
            grads.output_b[t] += grad_out[t];
        Vector grad_last(hidden, 0.0);
        matvec_transpose_add(params.output_w, grad_out, grad_last);

        // Cell; only the final step receives a hidden gradient.
        std::vector<Vector> grad_h_seq(steps, Vector(hidden, 0.0));
        grad_h_seq[steps - 1] = grad_last;
        std::vector<Vector> grad_xs;
        if (config.backend == Backend::kSlstm) {
            const auto& cell = std::get<SlstmParams>(params.cell);
            auto& gcell = std::get<SlstmParams>(grads.cell);
            SlstmGrads g = slstm_backward(cell, cache.slstm_caches[inst], grad_h_seq,
                                          config.forget_gate);
            auto acc = [](Matrix& dst, const Matrix& src) {
                for (std::size_t i = 0; i < dst.data.size(); ++i)
                    dst.data[i] += src.data[i];
            };
            auto accv = [](Vector& dst, const Vector& src) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            };
            acc(gcell.w_z, g.by_param.w_z);
            acc(gcell.w_i, g.by_param.w_i);
            acc(gcell.w_f, g.by_param.w_f);
            acc(gcell.w_o, g.by_param.w_o);
            acc(gcell.r_z, g.by_param.r_z);
            acc(gcell.r_i, g.by_param.r_i);
            acc(gcell.r_f, g.by_param.r_f);
            acc(gcell.r_o, g.by_param.r_o);
            accv(gcell.b_z, g.by_param.b_z);
            accv(gcell.b_i, g.by_param.b_i);
            accv(gcell.b_f, g.by_param.b_f);
            accv(gcell.b_o, g.by_param.b_o);
            grad_xs = std::move(g.by_input);
        } else {
            const auto& cell = std::get<MlstmParams>(params.cell);
            auto& gcell = std::get<MlstmParams>(grads.cell);
            MlstmGrads g = mlstm_backward(cell, cache.mlstm_caches[inst], grad_h_seq,
                                          config.forget_gate, config.readout_denom);
            auto acc = [](Matrix& dst, const Matrix& src) {
                for (std::size_t i = 0; i < dst.data.size(); ++i)
                    dst.data[i] += src.data[i];
            };
            auto accv = [](Vector& dst, const Vector& src) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            };
            acc(gcell.w_q, g.by_param.w_q);
            acc(gcell.w_k, g.by_param.w_k);
            acc(gcell.w_v, g.by_param.w_v);
            accv(gcell.b_q, g.by_param.b_q);
            accv(gcell.b_k, g.by_param.b_k);
            accv(gcell.b_v, g.by_param.b_v);
            accv(gcell.w_i, g.by_param.w_i);
            accv(gcell.w_f, g.by_param.w_f);
            gcell.b_i += g.by_param.b_i;
            gcell.b_f += g.by_param.b_f;
            acc(gcell.w_o, g.by_param.w_o);
            accv(gcell.b_o, g.by_param.b_o);
            grad_xs = std::move(g.by_input);
        }

        for (std::size_t s = 0; s < steps; ++s)
            for (std::size_t j = 0; j < hidden; ++j)
                grad_normalized(inst, s * hidden + j) = grad_xs[s][j];
    }

    // Batch norm backward over the whole instance block.
    BatchNormGrads bn_grads = batchnorm_backward(cache.bn, grad_normalized);
    grads.bn.gamma = bn_grads.grad_gamma;
    grads.bn.beta = bn_grads.grad_beta;

    // Input linear and, when learnable, the decomposition kernel.
    Vector concat(2 * lookback);
    std::vector<double> trend(lookback), seasonal(lookback);
    Vector grad_concat(2 * lookback);
    std::vector<double> grad_trend_total(lookback);
    for (std::size_t inst = 0; inst < instances; ++inst) {
        Vector grad_proj(projected);
        for (std::size_t j = 0; j < projected; ++j)
            grad_proj[j] = bn_grads.grad_x(inst, j);

        const Vector& window = cache.window[inst];
        decompose_series(window.data(), lookback, params.kernel, trend.data(),
                         seasonal.data());
        for (std::size_t t = 0; t < lookback; ++t) {
            concat[t] = trend[t];
            concat[lookback + t] = seasonal[t];
        }
        add_outer(grads.input_w, grad_proj, concat);
        for (std::size_t j = 0; j < projected; ++j) grads.input_b[j] += grad_proj[j];

        if (params.kernel.learnable) {
            std::fill(grad_concat.begin(), grad_concat.end(), 0.0);
            matvec_transpose_add(params.input_w, grad_proj, grad_concat);
            // seasonal = window - trend, so its trend-derivative is -1.
            for (std::size_t t = 0; t < lookback; ++t)
                grad_trend_total[t] = grad_concat[t] - grad_concat[lookback + t];
            decompose_kernel_grad(window.data(), lookback, params.kernel,
                                  grad_trend_total.data(),
                                  grads.kernel.weights.data());
        }
    }
    return grads;
}

Backend select_backend(std::size_t channel_count, std::size_t timesteps) {
    check(channel_count >= 1 && timesteps >= 1,
          "select_backend: inputs must be positive");
    return channel_count >= 100 ? Backend::kMlstm : Backend::kSlstm;
}

const char* backend_name(Backend b) {
    return b == Backend::kSlstm ? "slstm" : "mlstm";
}
const char* forget_gate_name(ForgetGate f) {
    return f == ForgetGate::kSigmoid ? "sigmoid" : "exp";
}
const char* readout_denom_name(ReadoutDenominator e) {
    return e == ReadoutDenominator::kAbs ? "abs" : "strict";
}
const char* instnorm_name(InstNorm i) {
    switch (i) {
        case InstNorm::kRevin: return "revin";
        case InstNorm::kLiteral: return "literal";
        default: return "off";
    }
}

}  // namespace xlstm
