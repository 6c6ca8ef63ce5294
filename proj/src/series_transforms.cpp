#include "xlstm/series_transforms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xlstm {

namespace {

// Replicate-padded sample: index i ranges over [-pad, len + pad).
inline double padded_at(const double* x, std::size_t len, long i) {
    if (i < 0) return x[0];
    if (i >= static_cast<long>(len)) return x[len - 1];
    return x[i];
}

}  // namespace

DecompKernel uniform_decomp_kernel(std::size_t window, bool learnable) {
    check(window >= 1 && window % 2 == 1,
          "decomposition window must be odd and positive, got " +
              std::to_string(window));
    DecompKernel k;
    k.window = window;
    k.weights.assign(window, 1.0 / static_cast<double>(window));
    k.learnable = learnable;
    return k;
}

void renormalize_kernel(DecompKernel& kernel) {
    double sum = 0.0;
    for (double& w : kernel.weights) {
        if (w < 0.0) w = 0.0;
        sum += w;
    }
    if (sum <= 0.0) {
        kernel.weights.assign(kernel.window, 1.0 / static_cast<double>(kernel.window));
        return;
    }
    for (double& w : kernel.weights) w /= sum;
}

void decompose_series(const double* x, std::size_t len, const DecompKernel& kernel,
                      double* trend, double* seasonal) {
    check(kernel.window % 2 == 1,
          "decompose: window must be odd, got " + std::to_string(kernel.window));
    check(kernel.weights.size() == kernel.window,
          "decompose: kernel has " + std::to_string(kernel.weights.size()) +
              " weights for window " + std::to_string(kernel.window));
    check(len >= 1, "decompose: empty series");
    check(kernel.window <= 2 * len,
          "decompose: window " + std::to_string(kernel.window) +
              " exceeds twice the series length " + std::to_string(len));
    const long pad = static_cast<long>(kernel.window - 1) / 2;
    for (std::size_t t = 0; t < len; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < kernel.window; ++j)
            acc += kernel.weights[j] *
                   padded_at(x, len, static_cast<long>(t) - pad + static_cast<long>(j));
        trend[t] = acc;
        seasonal[t] = x[t] - acc;
    }
}

std::pair<SeriesBatch, SeriesBatch> decompose(const SeriesBatch& x,
                                              const DecompKernel& kernel) {
    SeriesBatch trend(x.batch, x.time, x.channels);
    SeriesBatch seasonal(x.batch, x.time, x.channels);
    trend.channel_names = x.channel_names;
    seasonal.channel_names = x.channel_names;
    std::vector<double> series(x.time), tr(x.time), se(x.time);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            for (std::size_t t = 0; t < x.time; ++t) series[t] = x.at(b, t, c);
            decompose_series(series.data(), x.time, kernel, tr.data(), se.data());
            for (std::size_t t = 0; t < x.time; ++t) {
                trend.at(b, t, c) = tr[t];
                seasonal.at(b, t, c) = se[t];
            }
        }
    return {std::move(trend), std::move(seasonal)};
}

void decompose_kernel_grad(const double* x, std::size_t len,
                           const DecompKernel& kernel, const double* grad_trend,
                           double* grad_weights) {
    const long pad = static_cast<long>(kernel.window - 1) / 2;
    for (std::size_t j = 0; j < kernel.window; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < len; ++t)
            acc += grad_trend[t] *
                   padded_at(x, len, static_cast<long>(t) - pad + static_cast<long>(j));
        grad_weights[j] += acc;
    }
}

std::pair<SeriesBatch, InstanceNormStats> instance_normalize(const SeriesBatch& x) {
    check(x.time >= 1, "instance_normalize: series length must be >= 1");
    SeriesBatch y(x.batch, x.time, x.channels);
    y.channel_names = x.channel_names;
    InstanceNormStats stats;
    stats.batch = x.batch;
    stats.channels = x.channels;
    stats.mean.assign(x.batch * x.channels, 0.0);
    stats.stddev.assign(x.batch * x.channels, 0.0);
    const double inv_len = 1.0 / static_cast<double>(x.time);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t c = 0; c < x.channels; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t < x.time; ++t) mean += x.at(b, t, c);
            mean *= inv_len;
            double var = 0.0;
            for (std::size_t t = 0; t < x.time; ++t) {
                const double d = x.at(b, t, c) - mean;
                var += d * d;
            }
            var *= inv_len;
            const double sd = std::sqrt(var);
            stats.mean[b * x.channels + c] = mean;
            stats.stddev[b * x.channels + c] = sd;
            const double denom = sd + stats.epsilon;
            for (std::size_t t = 0; t < x.time; ++t)
                y.at(b, t, c) = (x.at(b, t, c) - mean) / denom;
        }
    return {std::move(y), std::move(stats)};
}

SeriesBatch instance_denormalize(const SeriesBatch& y, const InstanceNormStats& stats) {
    check(y.batch == stats.batch && y.channels == stats.channels,
          "instance_denormalize: batch " + y.shape_str() +
              " does not match stats for " + std::to_string(stats.batch) + "x" +
              std::to_string(stats.channels) + " instances");
    SeriesBatch x(y.batch, y.time, y.channels);
    x.channel_names = y.channel_names;
    for (std::size_t b = 0; b < y.batch; ++b)
        for (std::size_t c = 0; c < y.channels; ++c) {
            const double mean = stats.mean[b * y.channels + c];
            const double scale = stats.stddev[b * y.channels + c] + stats.epsilon;
            for (std::size_t t = 0; t < y.time; ++t)
                x.at(b, t, c) = y.at(b, t, c) * scale + mean;
        }
    return x;
}

Matrix batchnorm_forward(const Matrix& x, BatchNormParams& params, bool training,
                         BatchNormCache* cache) {
    const std::size_t features = params.features();
    check(x.cols == features, "batchnorm_forward: input has " +
                                  std::to_string(x.cols) + " features, params have " +
                                  std::to_string(features));
    if (training)
        check(x.rows >= 2, "batchnorm_forward: training mode needs batch size >= 2, got " +
                               std::to_string(x.rows));

    Matrix y(x.rows, x.cols);
    if (cache) {
        cache->training = training;
        cache->x_hat = Matrix(x.rows, x.cols);
        cache->inv_std.assign(features, 0.0);
        cache->gamma = params.gamma;
    }

    const double inv_n = 1.0 / static_cast<double>(x.rows);
    for (std::size_t j = 0; j < features; ++j) {
        double mean, var;
        if (training) {
            mean = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
            mean *= inv_n;
            var = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                const double d = x(i, j) - mean;
                var += d * d;
            }
            var *= inv_n;
            params.running_mean[j] = (1.0 - params.momentum) * params.running_mean[j] +
                                     params.momentum * mean;
            params.running_var[j] = (1.0 - params.momentum) * params.running_var[j] +
                                    params.momentum * var;
        } else {
            mean = params.running_mean[j];
            var = params.running_var[j];
        }
        const double inv_std = 1.0 / std::sqrt(var + params.epsilon);
        if (cache) cache->inv_std[j] = inv_std;
        for (std::size_t i = 0; i < x.rows; ++i) {
            const double x_hat = (x(i, j) - mean) * inv_std;
            if (cache) cache->x_hat(i, j) = x_hat;
            y(i, j) = params.gamma[j] * x_hat + params.beta[j];
        }
    }
    return y;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Matrix& grad_out) {
    check(cache.training, "batchnorm_backward: cache must come from a training-mode forward");
    check(grad_out.rows == cache.x_hat.rows && grad_out.cols == cache.x_hat.cols,
          "batchnorm_backward: gradient shape " + std::to_string(grad_out.rows) + "x" +
              std::to_string(grad_out.cols) + " does not match cache " +
              std::to_string(cache.x_hat.rows) + "x" + std::to_string(cache.x_hat.cols));

    const std::size_t n = grad_out.rows;
    const std::size_t features = grad_out.cols;
    BatchNormGrads g;
    g.grad_x = Matrix(n, features);
    g.grad_gamma.assign(features, 0.0);
    g.grad_beta.assign(features, 0.0);

    for (std::size_t j = 0; j < features; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_g += grad_out(i, j);
            sum_gx += grad_out(i, j) * cache.x_hat(i, j);
        }
        g.grad_beta[j] = sum_g;
        g.grad_gamma[j] = sum_gx;
        const double scale = cache.gamma[j] * cache.inv_std[j] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            g.grad_x(i, j) = scale * (static_cast<double>(n) * grad_out(i, j) - sum_g -
                                      cache.x_hat(i, j) * sum_gx);
    }
    return g;
}

}  // namespace xlstm
