#include <cmath>
#include <random>

#include "doctest.h"
#include "xlstm/numeric.hpp"

using namespace xlstm;

TEST_CASE("sigmoid fixed points and symmetry") {
    CHECK(sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::fabs(sigmoid(50.0) - 1.0) < 1e-15);
    CHECK(std::fabs(sigmoid(2.0) + sigmoid(-2.0) - 1.0) < 1e-15);
}

TEST_CASE("sigmoid is monotone and bounded on a large random sweep") {
    // Strictly inside (0,1) wherever doubles can represent it; the function
    // rounds to exactly 0.0 / 1.0 once |x| passes ~37 (the spec's saturation
    // example 50 -> 1.0 relies on this), so the wide sweep checks [0,1].
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> wide(-700.0, 700.0);
    std::uniform_real_distribution<double> interior(-36.0, 36.0);
    double prev_x = -1e308, prev_y = 0.0;
    bool first = true;
    for (int i = 0; i < 1000000; ++i) {
        const double x = wide(rng);
        const double y = sigmoid(x);
        REQUIRE(std::isfinite(y));
        REQUIRE(y >= 0.0);
        REQUIRE(y <= 1.0);
        if (!first && x > prev_x) REQUIRE(y >= prev_y);
        if (!first && x < prev_x) REQUIRE(y <= prev_y);
        prev_x = x;
        prev_y = y;
        first = false;
    }
    for (int i = 0; i < 100000; ++i) {
        const double y = sigmoid(interior(rng));
        REQUIRE(y > 0.0);
        REQUIRE(y < 1.0);
    }
    // extreme magnitudes still stay bounded and finite
    CHECK(sigmoid(-1e300) >= 0.0);
    CHECK(sigmoid(1e300) <= 1.0);
}

TEST_CASE("tanh_act oddness and saturation") {
    CHECK(tanh_act(0.0) == 0.0);
    CHECK(tanh_act(-1.3) == doctest::Approx(-tanh_act(1.3)).epsilon(1e-15));
    CHECK(std::fabs(tanh_act(20.0) - 1.0) < 1e-15);
}

TEST_CASE("matvec basics") {
    Matrix id(2, 2);
    id(0, 0) = 1.0;
    id(1, 1) = 1.0;
    Vector x{3.0, -1.0};
    Vector y = matvec(id, x);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == -1.0);

    Matrix zero(3, 2);
    Vector z = matvec(zero, x);
    CHECK(z == Vector{0.0, 0.0, 0.0});

    Matrix a(2, 2);
    a(0, 0) = 1.0; a(0, 1) = 2.0;
    a(1, 0) = 3.0; a(1, 1) = 4.0;
    Vector ones{1.0, 1.0};
    Vector r = matvec(a, ones);
    CHECK(r[0] == 3.0);
    CHECK(r[1] == 7.0);
}

TEST_CASE("matvec rejects shape mismatch with both shapes in the message") {
    Matrix a(2, 3);
    Vector x{1.0, 2.0};
    CHECK_THROWS_WITH_AS(matvec(a, x),
                         doctest::Contains("2x3"), std::invalid_argument);
}

TEST_CASE("matvec distributes over vector addition") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix w(8, 8);
        for (double& v : w.data) v = dist(rng);
        Vector x(8), y(8), xy(8);
        for (int i = 0; i < 8; ++i) {
            x[i] = dist(rng);
            y[i] = dist(rng);
            xy[i] = x[i] + y[i];
        }
        Vector lhs = matvec(w, xy);
        Vector wx = matvec(w, x), wy = matvec(w, y);
        for (int i = 0; i < 8; ++i)
            CHECK(lhs[i] == doctest::Approx(wx[i] + wy[i]).epsilon(1e-12));
    }
}

TEST_CASE("outer products") {
    Matrix basis = outer(Vector{1.0, 0.0}, Vector{0.0, 1.0});
    CHECK(basis(0, 0) == 0.0);
    CHECK(basis(0, 1) == 1.0);
    CHECK(basis(1, 0) == 0.0);
    CHECK(basis(1, 1) == 0.0);

    Matrix zero = outer(Vector{0.0, 0.0}, Vector{1.0, 2.0, 3.0});
    for (double v : zero.data) CHECK(v == 0.0);

    Matrix col = outer(Vector{2.0, 3.0}, Vector{5.0});
    CHECK(col(0, 0) == 10.0);
    CHECK(col(1, 0) == 15.0);
}

TEST_CASE("rank-1 action identity: outer(u,v) w == u (v.w)") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        Vector u(5), v(4), w(4);
        for (double& t : u) t = dist(rng);
        for (double& t : v) t = dist(rng);
        for (double& t : w) t = dist(rng);
        Vector lhs = matvec(outer(u, v), w);
        const double vw = dot(v, w);
        for (int i = 0; i < 5; ++i)
            CHECK(lhs[i] == doctest::Approx(u[i] * vw).epsilon(1e-12));
    }
}
