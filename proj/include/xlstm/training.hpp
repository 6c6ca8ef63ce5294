#pragma once

// Losses, Adam, the epoch loop, and the finite-difference gradient checker.

#include <cstdint>
#include <string>
#include <vector>

#include "xlstm/data.hpp"
#include "xlstm/model.hpp"
#include "xlstm/series_batch.hpp"

namespace xlstm {

struct LossResult {
    double value = 0.0;
    SeriesBatch grad;  // dL/d pred
};

// Mean absolute error over all elements; subgradient 0 at exact ties.
LossResult mae_loss(const SeriesBatch& pred, const SeriesBatch& target);

double mse_metric(const SeriesBatch& pred, const SeriesBatch& target);
double mae_metric(const SeriesBatch& pred, const SeriesBatch& target);

struct AdamState {
    ModelParams m, v;  // moment accumulators, parameter-shaped
    std::size_t t = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const ModelParams& params, double lr);

// Standard Adam with bias correction over every trainable block.
void adam_step(ModelParams& params, ModelParams& grads, AdamState& state);

// Scale all trainable gradients so their global L2 norm is at most max_norm.
void clip_global_norm(ModelParams& grads, double max_norm);

struct EpochStats {
    double train_mae = 0.0;
    double val_mse = 0.0;
    double val_mae = 0.0;
    double wall_clock_s = 0.0;  // console display only, never serialized
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;  // 1-based, 0 when no epoch ran
    double best_val_mse = 0.0;
    std::uint64_t seed = 0;
};

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    std::size_t patience = 5;
    double clip_norm = 5.0;
    bool verbose = false;
};

// Seeded shuffled mini-batch loop with MAE loss, Adam, per-epoch validation
// and early stopping; returns the best-validation parameters.
std::pair<ModelParams, TrainReport> train(const ModelConfig& config,
                                          const Dataset& train_split,
                                          const Dataset& val_split,
                                          const WindowSpec& spec,
                                          const TrainOptions& options);

struct BlockCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t sampled = 0;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    std::size_t max_coords_per_block = 200;
    std::uint64_t seed = 0;
    // Test hook: perturb one analytic gradient entry so the check must fail.
    bool corrupt_analytic = false;
};

// Central finite differences of the MAE loss against the analytic backward
// pass, sampled per trainable block; relative error is
// |a - n| / max(|a|, |n|, 1e-8).
std::vector<BlockCheck> grad_check(const ModelConfig& config,
                                   const SeriesBatch& batch,
                                   const SeriesBatch& target,
                                   const GradCheckOptions& options);

}  // namespace xlstm
