#pragma once

// Full forecasting pipeline: per-channel instance normalization, trend and
// seasonal decomposition, linear projection, batch normalization, an sLSTM
// or mLSTM recurrence, and a linear horizon head. Channels are processed
// independently with shared weights, so a B x L x m batch runs as B*m
// single-channel instances.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "xlstm/mlstm.hpp"
#include "xlstm/numeric.hpp"
#include "xlstm/series_batch.hpp"
#include "xlstm/series_transforms.hpp"
#include "xlstm/slstm.hpp"

namespace xlstm {

enum class Backend { kSlstm, kMlstm };

enum class InstNorm {
    kRevin,    // normalize input, denormalize output with the stored stats
    kLiteral,  // normalize the output against its own stats, no inverse
    kOff,
};

struct ModelConfig {
    std::size_t lookback = 512;
    std::size_t horizon = 96;
    std::size_t channels = 1;
    std::size_t hidden_dim = 128;
    std::size_t cell_steps = 16;  // recurrence length fed to the cell
    Backend backend = Backend::kSlstm;
    std::size_t decomp_window = 25;
    bool decomp_learnable = false;
    ForgetGate forget_gate = ForgetGate::kSigmoid;
    ReadoutDenominator readout_denom = ReadoutDenominator::kAbs;
    InstNorm instnorm = InstNorm::kRevin;
    std::uint64_t seed = 0;

    std::size_t projected_dim() const { return cell_steps * hidden_dim; }
};

void validate_config(const ModelConfig& config);

struct ModelParams {
    Matrix input_w;  // (cell_steps * hidden) x 2L
    Vector input_b;
    BatchNormParams bn;  // over the projected features
    std::variant<SlstmParams, MlstmParams> cell;
    Matrix output_w;  // horizon x hidden
    Vector output_b;
    DecompKernel kernel;
};

// Named view over one parameter tensor; non-trainable blocks cover the batch
// norm running statistics.
struct ParamBlock {
    std::string name;
    double* data;
    std::size_t size;
    bool trainable;
};

std::vector<ParamBlock> param_blocks(ModelParams& params);

// Deterministic seeded initialization; same seed gives identical bytes.
ModelParams init_model(const ModelConfig& config);

ModelParams zeros_like(const ModelParams& params);

struct ForwardCache {
    bool training = false;
    std::size_t batch = 0;
    // per instance (batch-major, channel-fastest):
    std::vector<double> revin_mean, revin_scale;       // revin mode
    std::vector<Vector> window;                        // normalized channel window
    Matrix projected;                                  // instances x projected_dim
    BatchNormCache bn;
    std::vector<std::vector<SlstmCache>> slstm_caches;
    std::vector<std::vector<MlstmCache>> mlstm_caches;
    std::vector<Vector> last_hidden;
    std::vector<Vector> head_out;                      // pre-instnorm output
    std::vector<double> literal_mean, literal_std;     // literal mode
};

std::pair<SeriesBatch, ForwardCache> forward(ModelParams& params,
                                             const ModelConfig& config,
                                             const SeriesBatch& batch, bool training);

// Gradients for every trainable parameter given dL/d predictions.
ModelParams backward(const ModelParams& params, const ModelConfig& config,
                     const ForwardCache& cache, const SeriesBatch& grad_predictions);

// Datasets with many channels get the matrix memory, small ones the scalar
// cell; threshold at 100 channels.
Backend select_backend(std::size_t channel_count, std::size_t timesteps);

const char* backend_name(Backend b);
const char* forget_gate_name(ForgetGate f);
const char* readout_denom_name(ReadoutDenominator e);
const char* instnorm_name(InstNorm i);

// Checkpoint container: magic + version, config as key/value strings, every
// parameter tensor with a shape header, and a trailing FNV-1a checksum.
// Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     ModelParams& params,
                     const std::vector<std::pair<std::string, Vector>>& extra = {});

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    std::vector<std::pair<std::string, Vector>> extra;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace xlstm
