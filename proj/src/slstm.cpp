#include "xlstm/slstm.hpp"

#include <algorithm>
#include <string>

namespace xlstm {

namespace {

void fill_uniform(std::vector<double>& v, double k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-k, k);
    for (double& x : v) x = dist(rng);
}

Vector preactivation(const Matrix& w, const Matrix& r, const Vector& b,
                     const Vector& x, const Vector& h_prev) {
    Vector a = matvec(w, x);
    Vector rh = matvec(r, h_prev);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += rh[k] + b[k];
    return a;
}

}  // namespace

SlstmParams make_slstm_params(std::size_t hidden_dim, std::size_t input_dim) {
    SlstmParams p;
    p.w_z = Matrix(hidden_dim, input_dim);
    p.w_i = Matrix(hidden_dim, input_dim);
    p.w_f = Matrix(hidden_dim, input_dim);
    p.w_o = Matrix(hidden_dim, input_dim);
    p.r_z = Matrix(hidden_dim, hidden_dim);
    p.r_i = Matrix(hidden_dim, hidden_dim);
    p.r_f = Matrix(hidden_dim, hidden_dim);
    p.r_o = Matrix(hidden_dim, hidden_dim);
    p.b_z = Vector(hidden_dim, 0.0);
    p.b_i = Vector(hidden_dim, 0.0);
    p.b_f = Vector(hidden_dim, 0.0);
    p.b_o = Vector(hidden_dim, 0.0);
    return p;
}

SlstmParams init_slstm_params(std::size_t hidden_dim, std::size_t input_dim,
                              std::mt19937_64& rng) {
    SlstmParams p = make_slstm_params(hidden_dim, input_dim);
    const double kw = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double kr = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    fill_uniform(p.w_z.data, kw, rng);
    fill_uniform(p.w_i.data, kw, rng);
    fill_uniform(p.w_f.data, kw, rng);
    fill_uniform(p.w_o.data, kw, rng);
    fill_uniform(p.r_z.data, kr, rng);
    fill_uniform(p.r_i.data, kr, rng);
    fill_uniform(p.r_f.data, kr, rng);
    fill_uniform(p.r_o.data, kr, rng);
    fill_uniform(p.b_z, kr, rng);
    fill_uniform(p.b_i, kr, rng);
    fill_uniform(p.b_f, kr, rng);
    fill_uniform(p.b_o, kr, rng);
    return p;
}

SlstmState zero_slstm_state(std::size_t hidden_dim) {
    SlstmState s;
    s.c = Vector(hidden_dim, 0.0);
    s.n = Vector(hidden_dim, 0.0);
    s.h = Vector(hidden_dim, 0.0);
    s.m = Vector(hidden_dim, 0.0);
    return s;
}

std::pair<SlstmState, SlstmCache> slstm_step(const SlstmParams& params,
                                             const SlstmState& prev,
                                             const Vector& x, ForgetGate forget) {
    const std::size_t hidden = params.hidden_dim();
    check(x.size() == params.input_dim(),
          "slstm_step: input length " + std::to_string(x.size()) +
              " does not match parameter input dim " +
              std::to_string(params.input_dim()));
    check(prev.c.size() == hidden && prev.n.size() == hidden &&
              prev.h.size() == hidden && prev.m.size() == hidden,
          "slstm_step: previous state does not match hidden dim " +
              std::to_string(hidden));
    if (long idx = first_non_finite(x); idx >= 0)
        throw std::invalid_argument("slstm_step: non-finite input at component " +
                                    std::to_string(idx));
    for (const Vector* v : {&prev.c, &prev.n, &prev.h, &prev.m})
        if (long idx = first_non_finite(*v); idx >= 0)
            throw std::invalid_argument(
                "slstm_step: non-finite previous state at component " +
                std::to_string(idx));

    SlstmCache cache;
    cache.x = x;
    cache.prev = prev;
    cache.z_pre = preactivation(params.w_z, params.r_z, params.b_z, x, prev.h);
    cache.i_pre = preactivation(params.w_i, params.r_i, params.b_i, x, prev.h);
    cache.f_pre = preactivation(params.w_f, params.r_f, params.b_f, x, prev.h);
    cache.o_pre = preactivation(params.w_o, params.r_o, params.b_o, x, prev.h);

    SlstmState out;
    out.c.resize(hidden);
    out.n.resize(hidden);
    out.h.resize(hidden);
    out.m.resize(hidden);
    cache.z.resize(hidden);
    cache.o.resize(hidden);
    cache.log_f.resize(hidden);
    cache.i_stab.resize(hidden);
    cache.f_stab.resize(hidden);

    for (std::size_t k = 0; k < hidden; ++k) {
        const double z = tanh_act(cache.z_pre[k]);
        const double o = sigmoid(cache.o_pre[k]);
        // i_pre is log(i) exactly since i = exp(i_pre); no round-trip needed.
        const double log_f = forget == ForgetGate::kSigmoid
                                 ? log_sigmoid(cache.f_pre[k])
                                 : cache.f_pre[k];
        const double forget_branch = log_f + prev.m[k];
        const double m = std::max(forget_branch, cache.i_pre[k]);
        const double i_stab = std::exp(cache.i_pre[k] - m);
        const double f_stab = std::exp(forget_branch - m);
        const double c = f_stab * prev.c[k] + i_stab * z;
        const double n = f_stab * prev.n[k] + i_stab;
        check(n != 0.0, "slstm_step: normalizer hit zero at component " +
                            std::to_string(k));
        cache.z[k] = z;
        cache.o[k] = o;
        cache.log_f[k] = log_f;
        cache.i_stab[k] = i_stab;
        cache.f_stab[k] = f_stab;
        out.c[k] = c;
        out.n[k] = n;
        out.m[k] = m;
        out.h[k] = o * (c / n);
    }
    cache.out = out;
    return {out, cache};
}

std::pair<std::vector<Vector>, std::vector<SlstmCache>> slstm_forward(
    const SlstmParams& params, const SlstmState& init,
    const std::vector<Vector>& xs, ForgetGate forget) {
    check(!xs.empty(), "slstm_forward: empty input sequence");
    std::vector<Vector> hs;
    std::vector<SlstmCache> caches;
    hs.reserve(xs.size());
    caches.reserve(xs.size());
    SlstmState state = init;
    for (const Vector& x : xs) {
        auto [next, cache] = slstm_step(params, state, x, forget);
        hs.push_back(next.h);
        caches.push_back(std::move(cache));
        state = std::move(next);
    }
    return {std::move(hs), std::move(caches)};
}

SlstmGrads slstm_backward(const SlstmParams& params,
                          const std::vector<SlstmCache>& caches,
                          const std::vector<Vector>& grad_h_seq,
                          ForgetGate forget) {
    check(caches.size() == grad_h_seq.size(),
          "slstm_backward: " + std::to_string(caches.size()) + " caches but " +
              std::to_string(grad_h_seq.size()) + " hidden gradients");
    check(!caches.empty(), "slstm_backward: empty sequence");

    const std::size_t hidden = params.hidden_dim();
    const std::size_t input = params.input_dim();

    SlstmGrads grads;
    grads.by_param = make_slstm_params(hidden, input);
    grads.by_input.assign(caches.size(), Vector(input, 0.0));

    // Carried adjoints of the recurrent states.
    Vector gc(hidden, 0.0), gn(hidden, 0.0), gm(hidden, 0.0), gh_rec(hidden, 0.0);

    Vector gz_pre(hidden), gi_pre(hidden), gf_pre(hidden), go_pre(hidden);

    for (std::size_t t = caches.size(); t-- > 0;) {
        const SlstmCache& cc = caches[t];
        check(grad_h_seq[t].size() == hidden,
              "slstm_backward: hidden gradient at step " + std::to_string(t) +
                  " has length " + std::to_string(grad_h_seq[t].size()));

        Vector gm_prev(hidden, 0.0);
        for (std::size_t k = 0; k < hidden; ++k) {
            const double gh = grad_h_seq[t][k] + gh_rec[k];
            const double o = cc.o[k];
            const double c = cc.out.c[k];
            const double n = cc.out.n[k];
            const double hdiv = c / n;

            // h = o * c/n
            const double g_o = gh * hdiv;
            go_pre[k] = g_o * o * (1.0 - o);
            double g_c = gc[k] + gh * o / n;
            double g_n = gn[k] - gh * o * c / (n * n);

            // c = f' c_prev + i' z ; n = f' n_prev + i'
            const double g_fstab = g_c * cc.prev.c[k] + g_n * cc.prev.n[k];
            const double g_istab = g_c * cc.z[k] + g_n;
            const double g_z = g_c * cc.i_stab[k];
            gz_pre[k] = g_z * (1.0 - cc.z[k] * cc.z[k]);

            // i' = exp(i~ - m), f' = exp(a - m), a = log f + m_prev
            double g_i_pre = g_istab * cc.i_stab[k];
            double g_m = gm[k] - g_istab * cc.i_stab[k] - g_fstab * cc.f_stab[k];
            double g_a = g_fstab * cc.f_stab[k];

            // m = max(a, i~); ties go to the forget branch.
            const double a = cc.log_f[k] + cc.prev.m[k];
            if (a >= cc.i_pre[k])
                g_a += g_m;
            else
                g_i_pre += g_m;

            gm_prev[k] = g_a;
            const double g_log_f = g_a;
            gf_pre[k] = forget == ForgetGate::kSigmoid
                            ? g_log_f * (1.0 - sigmoid(cc.f_pre[k]))
                            : g_log_f;
            gi_pre[k] = g_i_pre;

            // carry to step t-1
            gc[k] = g_c * cc.f_stab[k];
            gn[k] = g_n * cc.f_stab[k];
        }
        gm = std::move(gm_prev);

        // Pre-activation adjoints into parameters, inputs, and h_prev.
        Vector gh_prev(hidden, 0.0);
        Vector& gx = grads.by_input[t];
        const struct {
            const Vector* gpre;
            Matrix* gw;
            Matrix* gr;
            Vector* gb;
            const Matrix* w;
            const Matrix* r;
        } routes[4] = {
            {&gz_pre, &grads.by_param.w_z, &grads.by_param.r_z, &grads.by_param.b_z,
             &params.w_z, &params.r_z},
            {&gi_pre, &grads.by_param.w_i, &grads.by_param.r_i, &grads.by_param.b_i,
             &params.w_i, &params.r_i},
            {&gf_pre, &grads.by_param.w_f, &grads.by_param.r_f, &grads.by_param.b_f,
             &params.w_f, &params.r_f},
            {&go_pre, &grads.by_param.w_o, &grads.by_param.r_o, &grads.by_param.b_o,
             &params.w_o, &params.r_o},
        };
        for (const auto& rt : routes) {
            add_outer(*rt.gw, *rt.gpre, cc.x);
            add_outer(*rt.gr, *rt.gpre, cc.prev.h);
            for (std::size_t k = 0; k < hidden; ++k) (*rt.gb)[k] += (*rt.gpre)[k];
            matvec_transpose_add(*rt.w, *rt.gpre, gx);
            matvec_transpose_add(*rt.r, *rt.gpre, gh_prev);
        }
        gh_rec = std::move(gh_prev);
    }
    return grads;
}

}  // namespace xlstm
