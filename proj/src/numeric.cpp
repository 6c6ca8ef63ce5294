#include "xlstm/numeric.hpp"

namespace xlstm {

void contract_violation(const std::string& what) {
    throw std::invalid_argument(what);
}

Vector matvec(const Matrix& w, const Vector& x) {
    check(w.cols == x.size(),
          "matvec: shape mismatch, matrix is " + std::to_string(w.rows) + "x" +
              std::to_string(w.cols) + " but vector has length " +
              std::to_string(x.size()));
    Vector y(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* row = w.data.data() + i * w.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

void matvec_transpose_add(const Matrix& w, const Vector& g, Vector& y) {
    check(w.rows == g.size(),
          "matvec_transpose_add: matrix is " + std::to_string(w.rows) + "x" +
              std::to_string(w.cols) + " but gradient has length " +
              std::to_string(g.size()));
    check(w.cols == y.size(),
          "matvec_transpose_add: output length " + std::to_string(y.size()) +
              " does not match matrix columns " + std::to_string(w.cols));
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* row = w.data.data() + i * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) y[j] += gi * row[j];
    }
}

Matrix outer(const Vector& u, const Vector& v) {
    Matrix m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    return m;
}

void add_outer(Matrix& m, const Vector& u, const Vector& v, double scale) {
    check(m.rows == u.size() && m.cols == v.size(),
          "add_outer: target is " + std::to_string(m.rows) + "x" +
              std::to_string(m.cols) + " but vectors have lengths " +
              std::to_string(u.size()) + " and " + std::to_string(v.size()));
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double s = scale * u[i];
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) += s * v[j];
    }
}

double dot(const Vector& a, const Vector& b) {
    check(a.size() == b.size(), "dot: lengths " + std::to_string(a.size()) +
                                    " and " + std::to_string(b.size()) + " differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

long first_non_finite(const Vector& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) return static_cast<long>(i);
    return -1;
}

}  // namespace xlstm
