#include <cmath>
#include <random>

#include "doctest.h"
#include "xlstm/mlstm.hpp"

using namespace xlstm;

namespace {

MlstmParams random_params(std::size_t d, std::size_t input, std::uint64_t seed,
                          double scale = 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    MlstmParams p = make_mlstm_params(d, input);
    for (Matrix* m : {&p.w_q, &p.w_k, &p.w_v, &p.w_o})
        for (double& v : m->data) v = dist(rng);
    for (Vector* b : {&p.b_q, &p.b_k, &p.b_v, &p.b_o, &p.w_i, &p.w_f})
        for (double& v : *b) v = dist(rng);
    p.b_i = dist(rng);
    p.b_f = dist(rng);
    return p;
}

std::vector<Vector> random_inputs(std::size_t len, std::size_t input,
                                  std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<Vector> xs(len, Vector(input));
    for (auto& x : xs)
        for (double& v : x) v = dist(rng);
    return xs;
}

// Independent straight-line re-evaluation of the recurrence.
struct PlainMState {
    Matrix c;
    Vector n, h;
};

PlainMState reference_forward(const MlstmParams& p, const std::vector<Vector>& xs,
                              bool abs_denominator = true) {
    const std::size_t d = p.head_dim();
    PlainMState s{Matrix(d, d), Vector(d, 0.0), Vector(d, 0.0)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (const Vector& x : xs) {
        Vector q(d, 0.0), k(d, 0.0), v(d, 0.0), o(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            double sq = p.b_q[a], sk = p.b_k[a], sv = p.b_v[a], so = p.b_o[a];
            for (std::size_t j = 0; j < x.size(); ++j) {
                sq += p.w_q(a, j) * x[j];
                sk += p.w_k(a, j) * x[j];
                sv += p.w_v(a, j) * x[j];
                so += p.w_o(a, j) * x[j];
            }
            q[a] = sq;
            k[a] = scale * sk;
            v[a] = sv;
            o[a] = 1.0 / (1.0 + std::exp(-so));
        }
        double i_pre = p.b_i, f_pre = p.b_f;
        for (std::size_t j = 0; j < x.size(); ++j) {
            i_pre += p.w_i[j] * x[j];
            f_pre += p.w_f[j] * x[j];
        }
        const double i_gate = std::exp(std::min(i_pre, 30.0));
        const double f_gate = 1.0 / (1.0 + std::exp(-f_pre));
        Matrix c_next(d, d);
        Vector n_next(d);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b)
                c_next(a, b) = f_gate * s.c(a, b) + i_gate * v[a] * k[b];
            n_next[a] = f_gate * s.n[a] + i_gate * k[a];
        }
        double ndotq = 0.0;
        for (std::size_t a = 0; a < d; ++a) ndotq += n_next[a] * q[a];
        const double denom =
            abs_denominator ? std::max(std::fabs(ndotq), 1.0) : std::max(ndotq, 1.0);
        Vector h(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d; ++b) acc += c_next(a, b) * q[b];
            h[a] = o[a] * acc / denom;
        }
        s.c = std::move(c_next);
        s.n = std::move(n_next);
        s.h = std::move(h);
    }
    return s;
}

}  // namespace

TEST_CASE("zero params, zero state: everything stays zero") {
    MlstmParams p = make_mlstm_params(3, 2);
    auto [state, cache] = mlstm_step(p, zero_mlstm_state(3), Vector{1.5, -0.4});
    CHECK(cache.denom == 1.0);  // max(0, 1)
    for (double v : state.n) CHECK(v == 0.0);
    for (double v : state.h) CHECK(v == 0.0);
    for (double v : state.c.data) CHECK(v == 0.0);
}

TEST_CASE("hand-derived single step: C = v k^T, h = C q / max(|n.q|, 1)") {
    // Parameters are rigged so that for x = [1]: q = [1,0], post-scaling
    // k = [1,0], v = [1,2], i = exp(0) = 1, and o saturates to 1.
    const std::size_t d = 2;
    MlstmParams p = make_mlstm_params(d, 1);
    p.b_q = {1.0, 0.0};
    const double root_d = std::sqrt(2.0);
    p.b_k = {root_d, 0.0};  // k = (1/sqrt(d)) * b_k = [1, 0]
    p.b_v = {1.0, 2.0};
    p.b_o = {100.0, 100.0};  // sigmoid(100) rounds to exactly 1.0

    auto [state, cache] = mlstm_step(p, zero_mlstm_state(d), Vector{0.0});
    CHECK(cache.i_gate == 1.0);
    CHECK(cache.o[0] == 1.0);
    CHECK(state.c(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.c(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(state.c(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(state.c(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(state.n[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.n[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cache.n_dot_q == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cache.denom == 1.0);
    CHECK(state.h[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(state.h[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("covariance accumulation: with f = 1, i = 1 the memory is a sum of outer products") {
    // exp-forget mode with zero gate weights gives f = exp(0) = 1 exactly,
    // and i = exp(0) = 1.
    const std::size_t d = 3;
    MlstmParams p = random_params(d, 2, 5);
    p.w_i.assign(2, 0.0);
    p.w_f.assign(2, 0.0);
    p.b_i = 0.0;
    p.b_f = 0.0;
    auto xs = random_inputs(8, 2, 6);

    MlstmState state = zero_mlstm_state(d);
    Matrix expected(d, d);
    for (const Vector& x : xs) {
        auto [next, cache] = mlstm_step(p, state, x, ForgetGate::kExp);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                expected(a, b) += cache.v[a] * cache.k[b];
        state = next;
        for (std::size_t i = 0; i < expected.data.size(); ++i)
            CHECK(state.c.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("two steps with forced gates accumulate additively") {
    const std::size_t d = 2;
    MlstmParams p = make_mlstm_params(d, 2);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : p.w_k.data) v = dist(rng);
    for (double& v : p.w_v.data) v = dist(rng);
    auto xs = random_inputs(2, 2, 18);
    MlstmState s0 = zero_mlstm_state(d);
    auto [s1, c1] = mlstm_step(p, s0, xs[0], ForgetGate::kExp);
    auto [s2, c2] = mlstm_step(p, s1, xs[1], ForgetGate::kExp);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
            CHECK(s2.c(a, b) == doctest::Approx(c1.v[a] * c1.k[b] + c2.v[a] * c2.k[b])
                                    .epsilon(1e-14));
}

TEST_CASE("forward of length-1 equals a single step; zero params give zeros") {
    MlstmParams p = random_params(3, 2, 31);
    auto xs = random_inputs(1, 2, 32);
    auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(3), xs);
    auto [state, cache] = mlstm_step(p, zero_mlstm_state(3), xs[0]);
    CHECK(hs.size() == 1);
    CHECK(hs[0] == state.h);

    MlstmParams zero = make_mlstm_params(3, 2);
    auto [zh, zc] = mlstm_forward(zero, zero_mlstm_state(3), random_inputs(5, 2, 33));
    for (const auto& h : zh)
        for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("forward matches independent straight-line re-evaluation") {
    MlstmParams p = random_params(4, 3, 42);
    auto xs = random_inputs(8, 3, 42 * 2);
    auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(4), xs);
    PlainMState ref = reference_forward(p, xs);
    for (std::size_t a = 0; a < 4; ++a)
        CHECK(hs.back()[a] == doctest::Approx(ref.h[a]).epsilon(1e-14));
}

TEST_CASE("strict denominator mode reproduces the printed form") {
    MlstmParams p = random_params(4, 3, 51, 1.2);
    auto xs = random_inputs(6, 3, 52, 1.5);
    auto [hs, caches] =
        mlstm_forward(p, zero_mlstm_state(4), xs, ForgetGate::kSigmoid,
                      ReadoutDenominator::kStrict);
    PlainMState ref = reference_forward(p, xs, /*abs_denominator=*/false);
    for (std::size_t a = 0; a < 4; ++a)
        CHECK(hs.back()[a] == doctest::Approx(ref.h[a]).epsilon(1e-12));
    // the two modes disagree whenever some step sees n.q < -1
    bool saw_negative = false;
    for (const auto& c : caches) saw_negative |= c.n_dot_q < -1.0;
    if (saw_negative) {
        auto [hs_abs, ca] = mlstm_forward(p, zero_mlstm_state(4), xs);
        CHECK(hs_abs.back() != hs.back());
    }
}

TEST_CASE("no hidden-to-hidden dependence: mutating prev.h changes nothing") {
    MlstmParams p = random_params(3, 2, 61);
    auto xs = random_inputs(2, 2, 62);
    auto [s1, c1] = mlstm_step(p, zero_mlstm_state(3), xs[0]);
    MlstmState tampered = s1;
    for (double& v : tampered.h) v += 17.0;
    auto [a, ca] = mlstm_step(p, s1, xs[1]);
    auto [b, cb] = mlstm_step(p, tampered, xs[1]);
    CHECK(a.h == b.h);
    CHECK(a.c.data == b.c.data);
    CHECK(a.n == b.n);
}

TEST_CASE("denominator never drops below 1") {
    MlstmParams p = random_params(4, 3, 71, 1.5);
    auto xs = random_inputs(30, 3, 72, 2.0);
    MlstmState state = zero_mlstm_state(4);
    for (const auto& x : xs) {
        auto [next, cache] = mlstm_step(p, state, x);
        CHECK(cache.denom >= 1.0);
        for (double v : next.h) CHECK(std::isfinite(v));
        state = next;
    }
}

// Rank of the memory after t updates is at most t. One-sided Jacobi SVD
// (orthogonalize columns; singular values are the final column norms) keeps
// the numerical-zero floor near eps * ||C|| rather than sqrt(eps).
namespace {

std::size_t rank_by_svd(const Matrix& c, double threshold) {
    const std::size_t d = c.rows;
    Matrix a = c;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    app += a(k, p) * a(k, p);
                    aqq += a(k, q) * a(k, q);
                    apq += a(k, p) * a(k, q);
                }
                if (std::fabs(apq) <= 1e-30 + 1e-15 * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t k = 0; k < d; ++k) {
                    const double x = a(k, p), y = a(k, q);
                    a(k, p) = cs * x - sn * y;
                    a(k, q) = sn * x + cs * y;
                }
            }
        if (!rotated) break;
    }
    std::size_t rank = 0;
    for (std::size_t q = 0; q < d; ++q) {
        double norm_sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) norm_sq += a(k, q) * a(k, q);
        if (std::sqrt(norm_sq) > threshold) ++rank;
    }
    return rank;
}

}  // namespace

TEST_CASE("memory rank grows by at most one per step") {
    const std::size_t d = 6;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        MlstmParams p = random_params(d, 4, 80 + seed);
        auto xs = random_inputs(d, 4, 90 + seed);
        MlstmState state = zero_mlstm_state(d);
        for (std::size_t t = 0; t < xs.size(); ++t) {
            auto [next, cache] = mlstm_step(p, state, xs[t]);
            CHECK(rank_by_svd(next.c, 1e-10) <= t + 1);
            state = next;
        }
    }
}

TEST_CASE("backward: zero and scaled hidden gradients") {
    MlstmParams p = random_params(3, 2, 100);
    auto xs = random_inputs(4, 2, 101);
    auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(3), xs);

    std::vector<Vector> zero_gh(4, Vector(3, 0.0));
    MlstmGrads gz = mlstm_backward(p, caches, zero_gh);
    for (double v : gz.by_param.w_q.data) CHECK(v == 0.0);
    CHECK(gz.by_param.b_i == 0.0);

    auto gh = random_inputs(4, 3, 102);
    auto gh3 = gh;
    for (auto& v : gh3)
        for (double& x : v) x *= 3.0;
    MlstmGrads a = mlstm_backward(p, caches, gh);
    MlstmGrads b = mlstm_backward(p, caches, gh3);
    for (std::size_t i = 0; i < a.by_param.w_v.data.size(); ++i)
        CHECK(b.by_param.w_v.data[i] ==
              doctest::Approx(3.0 * a.by_param.w_v.data[i]).epsilon(1e-12));
    CHECK(b.by_param.b_f == doctest::Approx(3.0 * a.by_param.b_f).epsilon(1e-12));
}

namespace {

double scalar_loss(const MlstmParams& p, const std::vector<Vector>& xs,
                   const std::vector<Vector>& gh, ForgetGate forget,
                   ReadoutDenominator mode) {
    auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(p.head_dim()), xs, forget, mode);
    double loss = 0.0;
    for (std::size_t t = 0; t < hs.size(); ++t) loss += dot(gh[t], hs[t]);
    return loss;
}

void fd_check(ForgetGate forget, ReadoutDenominator mode) {
    const std::size_t d = 2, input = 2, len = 3;
    MlstmParams p = random_params(d, input, 7, 0.6);
    auto xs = random_inputs(len, input, 8);
    auto gh = random_inputs(len, d, 9);

    // stay away from the |n.q| = 1 kink so central differences are valid
    {
        auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(d), xs, forget, mode);
        for (const auto& c : caches) REQUIRE(std::fabs(std::fabs(c.n_dot_q) - 1.0) > 1e-3);
    }

    auto [hs, caches] = mlstm_forward(p, zero_mlstm_state(d), xs, forget, mode);
    MlstmGrads analytic = mlstm_backward(p, caches, gh, forget, mode);

    const double step = 1e-5;
    auto rel_err = [](double a, double n) {
        return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-8});
    };
    auto central = [&](double* coord, double analytic_value) {
        const double saved = *coord;
        auto estimate = [&](double h) {
            *coord = saved + h;
            const double plus = scalar_loss(p, xs, gh, forget, mode);
            *coord = saved - h;
            const double minus = scalar_loss(p, xs, gh, forget, mode);
            *coord = saved;
            return (plus - minus) / (2 * h);
        };
        double numeric = estimate(step);
        if (std::fabs(numeric) < 1e-9 && std::fabs(analytic_value) < 1e-9)
            numeric = estimate(step * 50);
        return numeric;
    };

    double max_err = 0.0;
    auto check_span = [&](double* param, const double* grad, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            max_err = std::max(max_err, rel_err(grad[i], central(&param[i], grad[i])));
    };
    MlstmParams& g = analytic.by_param;
    check_span(p.w_q.data.data(), g.w_q.data.data(), p.w_q.data.size());
    check_span(p.w_k.data.data(), g.w_k.data.data(), p.w_k.data.size());
    check_span(p.w_v.data.data(), g.w_v.data.data(), p.w_v.data.size());
    check_span(p.b_q.data(), g.b_q.data(), p.b_q.size());
    check_span(p.b_k.data(), g.b_k.data(), p.b_k.size());
    check_span(p.b_v.data(), g.b_v.data(), p.b_v.size());
    check_span(p.w_i.data(), g.w_i.data(), p.w_i.size());
    check_span(p.w_f.data(), g.w_f.data(), p.w_f.size());
    check_span(&p.b_i, &g.b_i, 1);
    check_span(&p.b_f, &g.b_f, 1);
    check_span(p.w_o.data.data(), g.w_o.data.data(), p.w_o.data.size());
    check_span(p.b_o.data(), g.b_o.data(), p.b_o.size());
    for (std::size_t t = 0; t < len; ++t)
        check_span(xs[t].data(), analytic.by_input[t].data(), input);
    CHECK(max_err < 1e-4);
}

}  // namespace

TEST_CASE("backward matches central finite differences (sigmoid forget, abs denom)") {
    fd_check(ForgetGate::kSigmoid, ReadoutDenominator::kAbs);
}

TEST_CASE("backward matches central finite differences (exp forget, strict denom)") {
    fd_check(ForgetGate::kExp, ReadoutDenominator::kStrict);
}
