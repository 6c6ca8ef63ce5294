#pragma once

// Stabilized scalar-memory LSTM cell with exponential input gating.
// Forward recurrence per step, all elementwise over the hidden dimension:
//
//   z~ = W_z x + r_z h_prev + b_z        z = tanh(z~)
//   i~ = W_i x + r_i h_prev + b_i        (input gate drives exp)
//   f~ = W_f x + r_f h_prev + b_f        log f = log_sigmoid(f~)  or  f~
//   o~ = W_o x + r_o h_prev + b_o        o = sigmoid(o~)
//   m  = max(log f + m_prev, i~)         running stabilizer
//   i' = exp(i~ - m)                     f' = exp(log f + m_prev - m)
//   c  = f' c_prev + i' z
//   n  = f' n_prev + i'
//   h  = o * (c / n)
//
// The rescaling by m cancels in c/n, so h equals the unstabilized value
// while both exponentials stay bounded.

#include <cstddef>
#include <random>
#include <vector>

#include "xlstm/numeric.hpp"

namespace xlstm {

enum class ForgetGate { kSigmoid, kExp };

struct SlstmParams {
    Matrix w_z, w_i, w_f, w_o;  // hidden x input
    Matrix r_z, r_i, r_f, r_o;  // hidden x hidden
    Vector b_z, b_i, b_f, b_o;  // hidden

    std::size_t hidden_dim() const { return w_z.rows; }
    std::size_t input_dim() const { return w_z.cols; }
};

struct SlstmState {
    Vector c;  // cell state
    Vector n;  // normalizer
    Vector h;  // hidden state
    Vector m;  // stabilizer (log scale)
};

// Every intermediate the backward pass needs. Replaying the step from
// (x, prev) reproduces the cached outputs bit-exactly.
struct SlstmCache {
    Vector x;
    SlstmState prev;
    Vector z_pre, i_pre, f_pre, o_pre;  // pre-activations
    Vector z, o, log_f;
    Vector i_stab, f_stab;  // rescaled gates i', f'
    SlstmState out;
};

struct SlstmGrads {
    SlstmParams by_param;  // same shapes as the parameters
    std::vector<Vector> by_input;
};

SlstmParams make_slstm_params(std::size_t hidden_dim, std::size_t input_dim);

// Seeded uniform init in [-k, k], k = 1/sqrt(fan-in).
SlstmParams init_slstm_params(std::size_t hidden_dim, std::size_t input_dim,
                              std::mt19937_64& rng);

SlstmState zero_slstm_state(std::size_t hidden_dim);

std::pair<SlstmState, SlstmCache> slstm_step(const SlstmParams& params,
                                             const SlstmState& prev,
                                             const Vector& x,
                                             ForgetGate forget = ForgetGate::kSigmoid);

// Unrolls slstm_step left to right. Returns all hidden states and caches.
std::pair<std::vector<Vector>, std::vector<SlstmCache>> slstm_forward(
    const SlstmParams& params, const SlstmState& init,
    const std::vector<Vector>& xs, ForgetGate forget = ForgetGate::kSigmoid);

// Exact reverse-mode gradients of sum_t <grad_h[t], h_t> with respect to
// every parameter and every input. Ties in the stabilizer max route the
// gradient to the forget branch.
SlstmGrads slstm_backward(const SlstmParams& params,
                          const std::vector<SlstmCache>& caches,
                          const std::vector<Vector>& grad_h_seq,
                          ForgetGate forget = ForgetGate::kSigmoid);

}  // namespace xlstm
