#pragma once

// Minimal dense numeric primitives used by every other module. Double
// precision throughout; no external tensor library so the math stays
// auditable.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace xlstm {

using Vector = std::vector<double>;

// Row-major dense matrix, rows x cols.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }
};

[[noreturn]] void contract_violation(const std::string& what);

inline void check(bool ok, const std::string& what) {
    if (!ok) contract_violation(what);
}

// Logistic function, sign-split so exp never overflows for finite input.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double tanh_act(double x) { return std::tanh(x); }

// log(sigmoid(x)) without forming sigmoid(x) first; exact for large |x|.
inline double log_sigmoid(double x) {
    return std::min(x, 0.0) - std::log1p(std::exp(-std::fabs(x)));
}

Vector matvec(const Matrix& w, const Vector& x);

// y += W^T g, the adjoint of matvec. Accumulates into y.
void matvec_transpose_add(const Matrix& w, const Vector& g, Vector& y);

Matrix outer(const Vector& u, const Vector& v);

// m += scale * u v^T
void add_outer(Matrix& m, const Vector& u, const Vector& v, double scale = 1.0);

double dot(const Vector& a, const Vector& b);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// Index of the first non-finite entry, or -1 when all entries are finite.
long first_non_finite(const Vector& v);

}  // namespace xlstm
