#include <cmath>
#include <random>

#include "doctest.h"
#include "xlstm/series_transforms.hpp"

using namespace xlstm;

namespace {

SeriesBatch single_series(const std::vector<double>& values) {
    SeriesBatch b(1, values.size(), 1);
    for (std::size_t t = 0; t < values.size(); ++t) b.at(0, t, 0) = values[t];
    return b;
}

SeriesBatch random_batch(std::size_t n, std::size_t t, std::size_t c,
                         std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    SeriesBatch b(n, t, c);
    for (double& v : b.values) v = dist(rng);
    return b;
}

}  // namespace

TEST_CASE("decompose preserves constants") {
    auto [trend, seasonal] = decompose(single_series({5, 5, 5, 5}),
                                       uniform_decomp_kernel(3));
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(trend.at(0, t, 0) == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(seasonal.at(0, t, 0) == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("hand-convolved ramp under replicate padding") {
    auto [trend, seasonal] = decompose(single_series({1, 2, 3, 4, 5}),
                                       uniform_decomp_kernel(3));
    const double expected[5] = {4.0 / 3.0, 2.0, 3.0, 4.0, 14.0 / 3.0};
    for (std::size_t t = 0; t < 5; ++t)
        CHECK(trend.at(0, t, 0) == doctest::Approx(expected[t]).epsilon(1e-14));
}

TEST_CASE("decomposition identity: seasonal is exactly x - trend") {
    SeriesBatch x = random_batch(3, 40, 2, 9, 10.0);
    auto [trend, seasonal] = decompose(x, uniform_decomp_kernel(7));
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        // bitwise in the construction order
        CHECK(x.values[i] - trend.values[i] == seasonal.values[i]);
        // re-adding rounds once, so the reconstruction is exact to the ulp
        CHECK(trend.values[i] + seasonal.values[i] ==
              doctest::Approx(x.values[i]).epsilon(1e-15));
    }
}

TEST_CASE("decomposition is shift-equivariant for constant offsets") {
    SeriesBatch x = random_batch(1, 30, 1, 10);
    SeriesBatch shifted = x;
    for (double& v : shifted.values) v += 3.25;
    auto [trend_a, seasonal_a] = decompose(x, uniform_decomp_kernel(5));
    auto [trend_b, seasonal_b] = decompose(shifted, uniform_decomp_kernel(5));
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        CHECK(trend_b.values[i] == doctest::Approx(trend_a.values[i] + 3.25).epsilon(1e-12));
        CHECK(seasonal_b.values[i] == doctest::Approx(seasonal_a.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("even windows are rejected") {
    CHECK_THROWS_AS(uniform_decomp_kernel(4), std::invalid_argument);
    DecompKernel k = uniform_decomp_kernel(3);
    k.window = 4;
    k.weights.assign(4, 0.25);
    std::vector<double> series{1, 2, 3}, trend(3), seasonal(3);
    CHECK_THROWS_AS(decompose_series(series.data(), 3, k, trend.data(), seasonal.data()),
                    std::invalid_argument);
}

TEST_CASE("kernel renormalization clamps and rescales") {
    DecompKernel k = uniform_decomp_kernel(3, true);
    k.weights = {0.5, -0.2, 0.3};
    renormalize_kernel(k);
    CHECK(k.weights[1] == 0.0);
    CHECK(k.weights[0] == doctest::Approx(0.625).epsilon(1e-12));
    double sum = 0.0;
    for (double w : k.weights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("instance normalization: already-centered channel is near-fixed") {
    auto [y, stats] = instance_normalize(single_series({-1.0, 1.0}));
    CHECK(stats.mean[0] == 0.0);
    CHECK(stats.stddev[0] == 1.0);
    CHECK(y.at(0, 0, 0) == doctest::Approx(-1.0).epsilon(2e-5));
    CHECK(y.at(0, 1, 0) == doctest::Approx(1.0).epsilon(2e-5));
}

TEST_CASE("instance normalization: constant channel maps to zeros") {
    auto [y, stats] = instance_normalize(single_series({3.0, 3.0, 3.0}));
    for (std::size_t t = 0; t < 3; ++t) CHECK(y.at(0, t, 0) == 0.0);
}

TEST_CASE("instance normalization: direct formula on [1,2,3]") {
    auto [y, stats] = instance_normalize(single_series({1.0, 2.0, 3.0}));
    CHECK(stats.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    // direct evaluation of (x - mean) / (std + eps)
    const double expected = 1.0 / (std::sqrt(2.0 / 3.0) + kNormEpsilon);
    CHECK(y.at(0, 0, 0) == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(y.at(0, 1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.at(0, 2, 0) == doctest::Approx(expected).epsilon(1e-12));
    // the epsilon-free value is 1.224745; the epsilon shifts it by ~1.5e-5
    CHECK(std::fabs(y.at(0, 2, 0) - 1.224745) < 2e-5);
}

TEST_CASE("denormalize inverts normalize across magnitudes") {
    for (double scale : {1e-3, 1.0, 1e3}) {
        SeriesBatch x = random_batch(2, 25, 3, 77, scale);
        auto [y, stats] = instance_normalize(x);
        SeriesBatch back = instance_denormalize(y, stats);
        for (std::size_t i = 0; i < x.values.size(); ++i)
            CHECK(std::fabs(back.values[i] - x.values[i]) < 1e-10);
    }
}

TEST_CASE("denormalize of zeros returns the mean; inverse of the [1,2,3] example") {
    auto [y, stats] = instance_normalize(single_series({1.0, 2.0, 3.0}));
    SeriesBatch zeros(1, 3, 1);
    SeriesBatch back = instance_denormalize(zeros, stats);
    for (std::size_t t = 0; t < 3; ++t) CHECK(back.at(0, t, 0) == 2.0);

    SeriesBatch stated(1, 3, 1);
    stated.at(0, 0, 0) = -1.224745;
    stated.at(0, 1, 0) = 0.0;
    stated.at(0, 2, 0) = 1.224745;
    SeriesBatch restored = instance_denormalize(stated, stats);
    CHECK(restored.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(restored.at(0, 2, 0) == doctest::Approx(3.0).epsilon(1e-4));
}

TEST_CASE("denormalize rejects channel mismatch") {
    auto [y, stats] = instance_normalize(random_batch(1, 5, 2, 3));
    SeriesBatch wrong(1, 5, 3);
    CHECK_THROWS_AS(instance_denormalize(wrong, stats), std::invalid_argument);
}

TEST_CASE("normalized channels have near-zero mean and near-unit std") {
    SeriesBatch x = random_batch(3, 50, 2, 5, 1e3);  // sigma >> eps
    auto [y, stats] = instance_normalize(x);
    for (std::size_t b = 0; b < y.batch; ++b)
        for (std::size_t c = 0; c < y.channels; ++c) {
            double mean = 0.0;
            for (std::size_t t = 0; t < y.time; ++t) mean += y.at(b, t, c);
            mean /= static_cast<double>(y.time);
            double var = 0.0;
            for (std::size_t t = 0; t < y.time; ++t) {
                const double d = y.at(b, t, c) - mean;
                var += d * d;
            }
            var /= static_cast<double>(y.time);
            const double sd = std::sqrt(var);
            CHECK(std::fabs(mean) < 1e-10);
            const double sigma = stats.stddev[b * y.channels + c];
            CHECK(std::fabs(sd - sigma / (sigma + stats.epsilon)) < 1e-8);
            CHECK(std::fabs(sd - 1.0) < 1e-6);
        }
}

TEST_CASE("batch norm eval mode with identity stats is near-identity") {
    BatchNormParams params(2);  // running mean 0, var 1, gamma 1, beta 0
    Matrix x(3, 2);
    x(0, 0) = 1.0; x(0, 1) = -2.0;
    x(1, 0) = 0.5; x(1, 1) = 4.0;
    x(2, 0) = -1.5; x(2, 1) = 0.0;
    Matrix y = batchnorm_forward(x, params, /*training=*/false);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-5));
}

TEST_CASE("batch norm training normalizes by batch statistics") {
    BatchNormParams params(1);
    Matrix x(2, 1);
    x(0, 0) = 1.0;
    x(1, 0) = 3.0;
    Matrix y = batchnorm_forward(x, params, /*training=*/true);
    // mean 2, population var 1; epsilon shifts the result by ~5e-6
    CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y(1, 0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(params.running_mean[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(params.running_var[0] == doctest::Approx(0.9 + 0.1 * 1.0).epsilon(1e-12));
}

TEST_CASE("batch norm with gamma 0 collapses to beta") {
    BatchNormParams params(2);
    params.gamma.assign(2, 0.0);
    params.beta = {0.7, -0.3};
    Matrix x(4, 2);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (double& v : x.data) v = dist(rng);
    Matrix y = batchnorm_forward(x, params, /*training=*/true);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(y(i, 0) == 0.7);
        CHECK(y(i, 1) == -0.3);
    }
}

TEST_CASE("batch norm training rejects batches smaller than 2") {
    BatchNormParams params(2);
    Matrix x(1, 2);
    CHECK_THROWS_AS(batchnorm_forward(x, params, /*training=*/true),
                    std::invalid_argument);
}

TEST_CASE("batch norm backward: zero gradient, beta gradient, eval cache rejection") {
    BatchNormParams params(3);
    Matrix x(4, 3);
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : x.data) v = dist(rng);
    BatchNormCache cache;
    batchnorm_forward(x, params, /*training=*/true, &cache);

    Matrix zero(4, 3);
    BatchNormGrads g = batchnorm_backward(cache, zero);
    for (double v : g.grad_x.data) CHECK(v == 0.0);
    for (double v : g.grad_gamma) CHECK(v == 0.0);

    Matrix grad(4, 3);
    for (double& v : grad.data) v = dist(rng);
    BatchNormGrads g2 = batchnorm_backward(cache, grad);
    for (std::size_t j = 0; j < 3; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < 4; ++i) col += grad(i, j);
        CHECK(g2.grad_beta[j] == col);
    }

    BatchNormCache eval_cache;
    batchnorm_forward(x, params, /*training=*/false, &eval_cache);
    CHECK_THROWS_AS(batchnorm_backward(eval_cache, grad), std::invalid_argument);
}

TEST_CASE("batch norm backward matches finite differences") {
    const std::size_t n = 4, f = 3;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Matrix x(n, f);
    for (double& v : x.data) v = dist(rng);
    BatchNormParams params(f);
    for (double& v : params.gamma) v = 1.0 + 0.3 * dist(rng);
    for (double& v : params.beta) v = 0.3 * dist(rng);
    Matrix grad_out(n, f);
    for (double& v : grad_out.data) v = dist(rng);

    auto loss_of = [&](const Matrix& input, BatchNormParams p) {
        Matrix y = batchnorm_forward(input, p, /*training=*/true);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * grad_out.data[i];
        return acc;
    };

    BatchNormCache cache;
    BatchNormParams run = params;
    batchnorm_forward(x, run, /*training=*/true, &cache);
    BatchNormGrads analytic = batchnorm_backward(cache, grad_out);

    const double step = 1e-5;
    auto rel_err = [](double a, double nn) {
        return std::fabs(a - nn) / std::max({std::fabs(a), std::fabs(nn), 1e-8});
    };
    double max_err = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        Matrix xp = x, xm = x;
        xp.data[i] += step;
        xm.data[i] -= step;
        const double numeric = (loss_of(xp, params) - loss_of(xm, params)) / (2 * step);
        max_err = std::max(max_err, rel_err(analytic.grad_x.data[i], numeric));
    }
    for (std::size_t j = 0; j < f; ++j) {
        BatchNormParams pp = params, pm = params;
        pp.gamma[j] += step;
        pm.gamma[j] -= step;
        const double numeric = (loss_of(x, pp) - loss_of(x, pm)) / (2 * step);
        max_err = std::max(max_err, rel_err(analytic.grad_gamma[j], numeric));
        pp = params; pm = params;
        pp.beta[j] += step;
        pm.beta[j] -= step;
        const double numeric_b = (loss_of(x, pp) - loss_of(x, pm)) / (2 * step);
        max_err = std::max(max_err, rel_err(analytic.grad_beta[j], numeric_b));
    }
    CHECK(max_err < 1e-4);
}
