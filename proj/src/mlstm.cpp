#include "xlstm/mlstm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xlstm {

namespace {

void fill_uniform(std::vector<double>& v, double k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-k, k);
    for (double& x : v) x = dist(rng);
}

double scalar_uniform(double k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-k, k);
    return dist(rng);
}

}  // namespace

MlstmParams make_mlstm_params(std::size_t head_dim, std::size_t input_dim) {
    MlstmParams p;
    p.w_q = Matrix(head_dim, input_dim);
    p.w_k = Matrix(head_dim, input_dim);
    p.w_v = Matrix(head_dim, input_dim);
    p.b_q = Vector(head_dim, 0.0);
    p.b_k = Vector(head_dim, 0.0);
    p.b_v = Vector(head_dim, 0.0);
    p.w_i = Vector(input_dim, 0.0);
    p.w_f = Vector(input_dim, 0.0);
    p.w_o = Matrix(head_dim, input_dim);
    p.b_o = Vector(head_dim, 0.0);
    return p;
}

MlstmParams init_mlstm_params(std::size_t head_dim, std::size_t input_dim,
                              std::mt19937_64& rng) {
    MlstmParams p = make_mlstm_params(head_dim, input_dim);
    const double k = 1.0 / std::sqrt(static_cast<double>(input_dim));
    fill_uniform(p.w_q.data, k, rng);
    fill_uniform(p.w_k.data, k, rng);
    fill_uniform(p.w_v.data, k, rng);
    fill_uniform(p.b_q, k, rng);
    fill_uniform(p.b_k, k, rng);
    fill_uniform(p.b_v, k, rng);
    fill_uniform(p.w_i, k, rng);
    fill_uniform(p.w_f, k, rng);
    p.b_i = scalar_uniform(k, rng);
    p.b_f = scalar_uniform(k, rng);
    fill_uniform(p.w_o.data, k, rng);
    fill_uniform(p.b_o, k, rng);
    return p;
}

MlstmState zero_mlstm_state(std::size_t head_dim) {
    MlstmState s;
    s.c = Matrix(head_dim, head_dim);
    s.n = Vector(head_dim, 0.0);
    s.h = Vector(head_dim, 0.0);
    return s;
}

std::pair<MlstmState, MlstmCache> mlstm_step(const MlstmParams& params,
                                             const MlstmState& prev,
                                             const Vector& x, ForgetGate forget,
                                             ReadoutDenominator denom_mode) {
    const std::size_t d = params.head_dim();
    check(x.size() == params.input_dim(),
          "mlstm_step: input length " + std::to_string(x.size()) +
              " does not match parameter input dim " +
              std::to_string(params.input_dim()));
    check(prev.c.rows == d && prev.c.cols == d && prev.n.size() == d,
          "mlstm_step: previous state does not match head dim " +
              std::to_string(d));
    if (long idx = first_non_finite(x); idx >= 0)
        throw std::invalid_argument("mlstm_step: non-finite input at component " +
                                    std::to_string(idx));
    check(all_finite(prev.c) && all_finite(prev.n),
          "mlstm_step: non-finite previous state");

    MlstmCache cache;
    cache.x = x;
    cache.prev = prev;
    cache.q = matvec(params.w_q, x);
    for (std::size_t a = 0; a < d; ++a) cache.q[a] += params.b_q[a];
    cache.k = matvec(params.w_k, x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t a = 0; a < d; ++a) cache.k[a] = scale * (cache.k[a] + params.b_k[a]);
    cache.v = matvec(params.w_v, x);
    for (std::size_t a = 0; a < d; ++a) cache.v[a] += params.b_v[a];

    cache.i_pre = dot(params.w_i, x) + params.b_i;
    cache.f_pre = dot(params.w_f, x) + params.b_f;
    cache.i_gate = std::exp(std::min(cache.i_pre, kMlstmExpClamp));
    cache.f_gate = forget == ForgetGate::kSigmoid
                       ? sigmoid(cache.f_pre)
                       : std::exp(std::min(cache.f_pre, kMlstmExpClamp));

    cache.o_pre = matvec(params.w_o, x);
    cache.o.resize(d);
    for (std::size_t a = 0; a < d; ++a) {
        cache.o_pre[a] += params.b_o[a];
        cache.o[a] = sigmoid(cache.o_pre[a]);
    }

    MlstmState out;
    out.c = Matrix(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
            out.c(a, b) = cache.f_gate * prev.c(a, b) +
                          cache.i_gate * cache.v[a] * cache.k[b];
    out.n.resize(d);
    for (std::size_t a = 0; a < d; ++a)
        out.n[a] = cache.f_gate * prev.n[a] + cache.i_gate * cache.k[a];

    cache.n_dot_q = dot(out.n, cache.q);
    cache.denom = denom_mode == ReadoutDenominator::kAbs
                      ? std::max(std::fabs(cache.n_dot_q), 1.0)
                      : std::max(cache.n_dot_q, 1.0);
    cache.readout = matvec(out.c, cache.q);
    out.h.resize(d);
    for (std::size_t a = 0; a < d; ++a)
        out.h[a] = cache.o[a] * cache.readout[a] / cache.denom;

    cache.out = out;
    return {out, cache};
}

std::pair<std::vector<Vector>, std::vector<MlstmCache>> mlstm_forward(
    const MlstmParams& params, const MlstmState& init,
    const std::vector<Vector>& xs, ForgetGate forget,
    ReadoutDenominator denom_mode) {
    check(!xs.empty(), "mlstm_forward: empty input sequence");
    std::vector<Vector> hs;
    std::vector<MlstmCache> caches;
    hs.reserve(xs.size());
    caches.reserve(xs.size());
    MlstmState state = init;
    for (const Vector& x : xs) {
        auto [next, cache] = mlstm_step(params, state, x, forget, denom_mode);
        hs.push_back(next.h);
        caches.push_back(std::move(cache));
        state = std::move(next);
    }
    return {std::move(hs), std::move(caches)};
}

MlstmGrads mlstm_backward(const MlstmParams& params,
                          const std::vector<MlstmCache>& caches,
                          const std::vector<Vector>& grad_h_seq,
                          ForgetGate forget, ReadoutDenominator denom_mode) {
    check(caches.size() == grad_h_seq.size(),
          "mlstm_backward: " + std::to_string(caches.size()) + " caches but " +
              std::to_string(grad_h_seq.size()) + " hidden gradients");
    check(!caches.empty(), "mlstm_backward: empty sequence");

    const std::size_t d = params.head_dim();
    const std::size_t input = params.input_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    MlstmGrads grads;
    grads.by_param = make_mlstm_params(d, input);
    grads.by_input.assign(caches.size(), Vector(input, 0.0));

    Matrix g_c(d, d);       // dL/dC_t carried backward
    Vector g_n(d, 0.0);     // dL/dn_t carried backward

    for (std::size_t t = caches.size(); t-- > 0;) {
        const MlstmCache& cc = caches[t];
        check(grad_h_seq[t].size() == d,
              "mlstm_backward: hidden gradient at step " + std::to_string(t) +
                  " has length " + std::to_string(grad_h_seq[t].size()));
        Vector& gx = grads.by_input[t];

        // h = o * readout / denom
        Vector g_readout(d), go_pre(d);
        double g_denom = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            const double gh = grad_h_seq[t][a];
            const double h_tilde = cc.readout[a] / cc.denom;
            const double g_o = gh * h_tilde;
            go_pre[a] = g_o * cc.o[a] * (1.0 - cc.o[a]);
            g_readout[a] = gh * cc.o[a] / cc.denom;
            g_denom -= gh * cc.o[a] * cc.readout[a] / (cc.denom * cc.denom);
        }

        // denom = max(|n.q|, 1); the constant branch carries no gradient.
        double g_ndotq = 0.0;
        if (denom_mode == ReadoutDenominator::kAbs) {
            if (std::fabs(cc.n_dot_q) > 1.0)
                g_ndotq = g_denom * (cc.n_dot_q >= 0.0 ? 1.0 : -1.0);
        } else {
            if (cc.n_dot_q > 1.0) g_ndotq = g_denom;
        }

        // readout = C q, n_dot_q = n . q
        Vector g_q(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                g_c(a, b) += g_readout[a] * cc.q[b];
                g_q[b] += cc.out.c(a, b) * g_readout[a];
            }
            g_q[a] += g_ndotq * cc.out.n[a];
            g_n[a] += g_ndotq * cc.q[a];
        }

        // C = f C_prev + i v k^T ; n = f n_prev + i k
        double g_f = 0.0, g_i = 0.0;
        Vector g_v(d, 0.0), g_k(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                const double g = g_c(a, b);
                g_f += g * cc.prev.c(a, b);
                g_i += g * cc.v[a] * cc.k[b];
                g_v[a] += g * cc.i_gate * cc.k[b];
                g_k[b] += g * cc.i_gate * cc.v[a];
            }
            g_f += g_n[a] * cc.prev.n[a];
            g_i += g_n[a] * cc.k[a];
            g_k[a] += g_n[a] * cc.i_gate;
        }

        // carry to step t-1
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) g_c(a, b) *= cc.f_gate;
            g_n[a] *= cc.f_gate;
        }

        // scalar gates; clamped exponentials carry no gradient past the clamp
        double g_i_pre = cc.i_pre <= kMlstmExpClamp ? g_i * cc.i_gate : 0.0;
        double g_f_pre;
        if (forget == ForgetGate::kSigmoid)
            g_f_pre = g_f * cc.f_gate * (1.0 - cc.f_gate);
        else
            g_f_pre = cc.f_pre <= kMlstmExpClamp ? g_f * cc.f_gate : 0.0;
        for (std::size_t j = 0; j < input; ++j) {
            grads.by_param.w_i[j] += g_i_pre * cc.x[j];
            grads.by_param.w_f[j] += g_f_pre * cc.x[j];
            gx[j] += g_i_pre * params.w_i[j] + g_f_pre * params.w_f[j];
        }
        grads.by_param.b_i += g_i_pre;
        grads.by_param.b_f += g_f_pre;

        // projections: q = W_q x + b_q, k = scale (W_k x + b_k), v = W_v x + b_v
        Vector g_k_pre(d);
        for (std::size_t a = 0; a < d; ++a) g_k_pre[a] = g_k[a] * scale;
        add_outer(grads.by_param.w_q, g_q, cc.x);
        add_outer(grads.by_param.w_k, g_k_pre, cc.x);
        add_outer(grads.by_param.w_v, g_v, cc.x);
        add_outer(grads.by_param.w_o, go_pre, cc.x);
        for (std::size_t a = 0; a < d; ++a) {
            grads.by_param.b_q[a] += g_q[a];
            grads.by_param.b_k[a] += g_k_pre[a];
            grads.by_param.b_v[a] += g_v[a];
            grads.by_param.b_o[a] += go_pre[a];
        }
        matvec_transpose_add(params.w_q, g_q, gx);
        matvec_transpose_add(params.w_k, g_k_pre, gx);
        matvec_transpose_add(params.w_v, g_v, gx);
        matvec_transpose_add(params.w_o, go_pre, gx);
    }
    return grads;
}

}  // namespace xlstm
