#include "xlstm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace xlstm {

LossResult mae_loss(const SeriesBatch& pred, const SeriesBatch& target) {
    check(pred.same_shape(target), "mae_loss: prediction shape " + pred.shape_str() +
                                       " does not match target " + target.shape_str());
    LossResult r;
    r.grad = SeriesBatch(pred.batch, pred.time, pred.channels);
    const double inv_n = 1.0 / static_cast<double>(pred.values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - target.values[i];
        sum += std::fabs(d);
        r.grad.values[i] = d > 0.0 ? inv_n : d < 0.0 ? -inv_n : 0.0;
    }
    r.value = sum * inv_n;
    return r;
}

double mse_metric(const SeriesBatch& pred, const SeriesBatch& target) {
    check(pred.same_shape(target), "mse_metric: prediction shape " + pred.shape_str() +
                                       " does not match target " + target.shape_str());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - target.values[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.values.size());
}

double mae_metric(const SeriesBatch& pred, const SeriesBatch& target) {
    check(pred.same_shape(target), "mae_metric: prediction shape " + pred.shape_str() +
                                       " does not match target " + target.shape_str());
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i)
        sum += std::fabs(pred.values[i] - target.values[i]);
    return sum / static_cast<double>(pred.values.size());
}

AdamState make_adam_state(const ModelParams& params, double lr) {
    AdamState state;
    state.m = zeros_like(params);
    state.v = zeros_like(params);
    state.lr = lr;
    return state;
}

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

    auto p_blocks = param_blocks(params);
    auto g_blocks = param_blocks(grads);
    auto m_blocks = param_blocks(state.m);
    auto v_blocks = param_blocks(state.v);
    for (std::size_t b = 0; b < p_blocks.size(); ++b) {
        if (!p_blocks[b].trainable) continue;
        double* p = p_blocks[b].data;
        double* g = g_blocks[b].data;
        double* m = m_blocks[b].data;
        double* v = v_blocks[b].data;
        for (std::size_t i = 0; i < p_blocks[b].size; ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("adam_step: non-finite gradient in block '" +
                                         p_blocks[b].name + "'");
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

void clip_global_norm(ModelParams& grads, double max_norm) {
    double sq = 0.0;
    auto blocks = param_blocks(grads);
    for (const auto& block : blocks) {
        if (!block.trainable) continue;
        for (std::size_t i = 0; i < block.size; ++i) sq += block.data[i] * block.data[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (const auto& block : blocks) {
        if (!block.trainable) continue;
        for (std::size_t i = 0; i < block.size; ++i) block.data[i] *= scale;
    }
}

std::pair<ModelParams, TrainReport> train(const ModelConfig& config,
                                          const Dataset& train_split,
                                          const Dataset& val_split,
                                          const WindowSpec& spec,
                                          const TrainOptions& options) {
    check(train_split.total_timesteps >= spec.lookback + spec.horizon,
          "train: train split too short for one window");
    check(val_split.total_timesteps >= spec.lookback + spec.horizon,
          "train: validation split too short for one window");

    ModelParams params = init_model(config);
    ModelParams best_params = params;
    AdamState adam = make_adam_state(params, options.lr);
    std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> train_offsets = make_windows(train_split, spec);
    const std::vector<std::size_t> val_offsets = make_windows(val_split, spec);

    TrainReport report;
    report.seed = config.seed;
    report.best_val_mse = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(train_offsets.begin(), train_offsets.end(), shuffle_rng);

        // Batch boundaries; a trailing single-window batch folds into its
        // predecessor when batch norm would see fewer than two rows.
        std::vector<std::size_t> bounds;
        for (std::size_t begin = 0; begin < train_offsets.size();
             begin += options.batch_size)
            bounds.push_back(begin);
        bounds.push_back(train_offsets.size());
        if (bounds.size() > 2 && config.channels == 1 &&
            bounds[bounds.size() - 1] - bounds[bounds.size() - 2] < 2)
            bounds.erase(bounds.end() - 2);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t bi = 0; bi + 1 < bounds.size(); ++bi) {
            std::vector<std::size_t> chunk(train_offsets.begin() + bounds[bi],
                                           train_offsets.begin() + bounds[bi + 1]);
            auto [input, target] = gather_batch(train_split, spec, chunk);
            auto [pred, cache] = forward(params, config, input, /*training=*/true);
            LossResult loss = mae_loss(pred, target);
            if (!std::isfinite(loss.value))
                throw std::runtime_error("train: loss diverged at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(bi));
            loss_sum += loss.value * static_cast<double>(chunk.size());
            loss_count += chunk.size();
            ModelParams grads = backward(params, config, cache, loss.grad);
            if (options.clip_norm > 0.0) clip_global_norm(grads, options.clip_norm);
            adam_step(params, grads, adam);
            if (params.kernel.learnable) renormalize_kernel(params.kernel);
        }

        const Metrics val =
            evaluate(params, config, val_split, spec, val_offsets, options.batch_size);

        EpochStats stats;
        stats.train_mae = loss_sum / static_cast<double>(loss_count);
        stats.val_mse = val.mse;
        stats.val_mae = val.mae;
        stats.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(stats);
        if (options.verbose)
            std::fprintf(stderr,
                         "epoch %zu: train_mae %.6f val_mse %.6f val_mae %.6f (%.1fs)\n",
                         epoch, stats.train_mae, stats.val_mse, stats.val_mae,
                         stats.wall_clock_s);

        if (val.mse < report.best_val_mse) {
            report.best_val_mse = val.mse;
            report.best_epoch = epoch;
            best_params = params;
            since_best = 0;
        } else if (++since_best >= options.patience) {
            break;
        }
    }
    if (report.epochs.empty()) {
        best_params = params;
        report.best_val_mse = 0.0;
    }
    return {std::move(best_params), std::move(report)};
}

std::vector<BlockCheck> grad_check(const ModelConfig& config,
                                   const SeriesBatch& batch,
                                   const SeriesBatch& target,
                                   const GradCheckOptions& options) {
    ModelParams params = init_model(config);

    // Analytic pass. Running-stat updates do not feed the training-mode loss,
    // so repeated forwards stay consistent.
    auto [pred, cache] = forward(params, config, batch, /*training=*/true);
    LossResult loss = mae_loss(pred, target);
    ModelParams analytic = backward(params, config, cache, loss.grad);
    if (options.corrupt_analytic) {
        auto blocks = param_blocks(analytic);
        for (auto& block : blocks)
            if (block.trainable && block.size > 0) {
                for (std::size_t i = 0; i < block.size; ++i) block.data[i] += 1.0;
                break;
            }
    }

    auto loss_at = [&](ModelParams& p) {
        auto [pr, ca] = forward(p, config, batch, /*training=*/true);
        return mae_loss(pr, target).value;
    };

    // Central differences at the configured step and at 10x the step; a
    // coordinate passes against whichever estimate it matches better. The
    // small step controls truncation, the wide one controls roundoff
    // (~ulp(loss)/2h, which swamps gradients below ~1e-7 at h = 1e-5; the
    // normalizer even makes the sLSTM input-gate bias an exact null
    // direction, where the small-step estimate is pure rounding noise).
    auto rel_error_at = [&](double* coord, double analytic) {
        const double saved = *coord;
        auto estimate = [&](double h) {
            *coord = saved + h;
            const double plus = loss_at(params);
            *coord = saved - h;
            const double minus = loss_at(params);
            *coord = saved;
            return (plus - minus) / (2.0 * h);
        };
        auto rel = [&](double numeric) {
            return std::fabs(analytic - numeric) /
                   std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        };
        const double fine = rel(estimate(options.step));
        if (fine < options.tolerance) return fine;
        return std::min(fine, rel(estimate(options.step * 10.0)));
    };

    std::mt19937_64 rng(options.seed ^ 0x51e5d5c721a8f0b3ull);
    std::vector<BlockCheck> checks;
    auto p_blocks = param_blocks(params);
    auto a_blocks = param_blocks(analytic);
    for (std::size_t b = 0; b < p_blocks.size(); ++b) {
        if (!p_blocks[b].trainable) continue;
        BlockCheck bc;
        bc.name = p_blocks[b].name;

        std::vector<std::size_t> coords(p_blocks[b].size);
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > options.max_coords_per_block) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_block);
        }
        bc.sampled = coords.size();

        for (std::size_t i : coords)
            bc.max_rel_error = std::max(
                bc.max_rel_error, rel_error_at(&p_blocks[b].data[i], a_blocks[b].data[i]));
        checks.push_back(std::move(bc));
    }
    return checks;
}

}  // namespace xlstm
