#pragma once

// Trend/seasonal decomposition and the two normalization blocks of the
// forecasting pipeline.

#include <cstddef>
#include <vector>

#include "xlstm/numeric.hpp"
#include "xlstm/series_batch.hpp"

namespace xlstm {

inline constexpr double kNormEpsilon = 1e-5;

// Moving-average kernel for the trend extraction. Window must be odd so the
// replicate padding stays centered; weights sum to 1.
struct DecompKernel {
    std::size_t window = 25;
    Vector weights;  // length == window, sum == 1
    bool learnable = false;
};

DecompKernel uniform_decomp_kernel(std::size_t window, bool learnable = false);

// Clamp negatives to zero and rescale so the weights sum to 1 again; applied
// after each optimizer update when the kernel is learnable.
void renormalize_kernel(DecompKernel& kernel);

// trend = moving average under replicate padding, seasonal = x - trend.
// trend + seasonal reconstructs x bit-exactly.
void decompose_series(const double* x, std::size_t len, const DecompKernel& kernel,
                      double* trend, double* seasonal);

std::pair<SeriesBatch, SeriesBatch> decompose(const SeriesBatch& x,
                                              const DecompKernel& kernel);

// Adjoint of decompose_series with respect to the kernel weights:
// grad_w[j] += sum_t grad_trend[t] * x_padded[t + j].
void decompose_kernel_grad(const double* x, std::size_t len,
                           const DecompKernel& kernel, const double* grad_trend,
                           double* grad_weights);

// Per-(instance, channel) statistics captured at normalization time.
struct InstanceNormStats {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::vector<double> mean;    // batch * channels
    std::vector<double> stddev;  // population std, batch * channels
    double epsilon = kNormEpsilon;
};

// y = (x - mean) / (std + eps), per instance per channel over the time axis.
std::pair<SeriesBatch, InstanceNormStats> instance_normalize(const SeriesBatch& x);

// Inverse transform: x = y * (std + eps) + mean.
SeriesBatch instance_denormalize(const SeriesBatch& y, const InstanceNormStats& stats);

struct BatchNormParams {
    Vector gamma, beta;
    Vector running_mean, running_var;
    double momentum = 0.1;
    double epsilon = kNormEpsilon;

    explicit BatchNormParams(std::size_t features = 0)
        : gamma(features, 1.0),
          beta(features, 0.0),
          running_mean(features, 0.0),
          running_var(features, 1.0) {}

    std::size_t features() const { return gamma.size(); }
};

struct BatchNormCache {
    bool training = false;
    Matrix x_hat;   // normalized inputs
    Vector inv_std; // 1 / sqrt(var + eps), per feature
    Vector gamma;
};

// x is batch rows x feature columns. Training mode normalizes by batch
// statistics (population variance) and folds them into the running stats;
// eval mode uses the running stats.
Matrix batchnorm_forward(const Matrix& x, BatchNormParams& params, bool training,
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
    Matrix grad_x;
    Vector grad_gamma, grad_beta;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Matrix& grad_out);

}  // namespace xlstm
