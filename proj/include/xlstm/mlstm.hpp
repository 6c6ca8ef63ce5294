#pragma once

// Matrix-memory LSTM cell. Key-value associations are written into a d x d
// memory by a covariance-style rank-1 update and read back with a query:
//
//   q = W_q x + b_q
//   k = (1/sqrt(d)) (W_k x + b_k)
//   v = W_v x + b_v
//   i = exp(w_i . x + b_i)          scalar input gate
//   f = sigmoid(w_f . x + b_f)      scalar forget gate (or exp(f~))
//   o = sigmoid(W_o x + b_o)        elementwise output gate
//   C = f C_prev + i v k^T
//   n = f n_prev + i k
//   h = o * C q / max(|n^T q|, 1)
//
// Gates and projections read only the input, never the previous hidden
// state, so steps have no hidden-to-hidden dependence.

#include <cstddef>
#include <random>
#include <vector>

#include "xlstm/numeric.hpp"
#include "xlstm/slstm.hpp"  // ForgetGate

namespace xlstm {

// Readout denominator: the default takes max(|n^T q|, 1) so a large negative
// correlation cannot shrink the divisor; strict mode uses max(n^T q, 1).
enum class ReadoutDenominator { kAbs, kStrict };

// Exponential gate pre-activations are clamped here before exp; the mLSTM
// carries no stabilizer state, so this is the overflow guard.
inline constexpr double kMlstmExpClamp = 30.0;

struct MlstmParams {
    Matrix w_q, w_k, w_v;  // d x input
    Vector b_q, b_k, b_v;  // d
    Vector w_i, w_f;       // input (scalar gates)
    double b_i = 0.0, b_f = 0.0;
    Matrix w_o;  // d x input
    Vector b_o;  // d

    std::size_t head_dim() const { return w_q.rows; }
    std::size_t input_dim() const { return w_q.cols; }
};

struct MlstmState {
    Matrix c;  // d x d matrix memory
    Vector n;  // normalizer, d
    Vector h;  // hidden, d
};

struct MlstmCache {
    Vector x;
    MlstmState prev;
    Vector q, k, v;
    double i_pre = 0.0, f_pre = 0.0;
    double i_gate = 0.0, f_gate = 0.0;
    Vector o_pre, o;
    double n_dot_q = 0.0, denom = 1.0;
    Vector readout;  // C q
    MlstmState out;
};

struct MlstmGrads {
    MlstmParams by_param;
    std::vector<Vector> by_input;
};

MlstmParams make_mlstm_params(std::size_t head_dim, std::size_t input_dim);

MlstmParams init_mlstm_params(std::size_t head_dim, std::size_t input_dim,
                              std::mt19937_64& rng);

MlstmState zero_mlstm_state(std::size_t head_dim);

std::pair<MlstmState, MlstmCache> mlstm_step(
    const MlstmParams& params, const MlstmState& prev, const Vector& x,
    ForgetGate forget = ForgetGate::kSigmoid,
    ReadoutDenominator denom_mode = ReadoutDenominator::kAbs);

std::pair<std::vector<Vector>, std::vector<MlstmCache>> mlstm_forward(
    const MlstmParams& params, const MlstmState& init,
    const std::vector<Vector>& xs, ForgetGate forget = ForgetGate::kSigmoid,
    ReadoutDenominator denom_mode = ReadoutDenominator::kAbs);

// Exact gradients of sum_t <grad_h[t], h_t>. Where |n^T q| <= 1 the
// denominator is the constant 1 and carries no gradient.
MlstmGrads mlstm_backward(const MlstmParams& params,
                          const std::vector<MlstmCache>& caches,
                          const std::vector<Vector>& grad_h_seq,
                          ForgetGate forget = ForgetGate::kSigmoid,
                          ReadoutDenominator denom_mode = ReadoutDenominator::kAbs);

}  // namespace xlstm
