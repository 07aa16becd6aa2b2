// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "corematch/error.hpp"
#include "corematch/model.hpp"
#include "corematch/numerics.hpp"
#include "corematch/rng.hpp"
#include "oracles.hpp"

using namespace corematch;
using namespace corematch::numerics;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::IoError;
}

}  // namespace

TEST_CASE("matmul and vecmat agree with hand values") {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{5, 6, 7}, {8, 9, 10}});
    const Matrix c = matmul(a, b);
    CHECK(c == Matrix::from_rows({{21, 24, 27}, {47, 54, 61}}));
    const Vector r = vecmat(a.row(1), b);
    CHECK(r == Vector{47, 54, 61});
    CHECK(kind_of([&] { matmul(b, b); }) == ErrorKind::ShapeError);
    CHECK(kind_of([&] { add(a, b); }) == ErrorKind::ShapeError);
}

TEST_CASE("softmax, layer_norm and activations") {
    const Vector s = softmax(Vector{0.0, 0.0});
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == doctest::Approx(0.5));

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Vector x(17);
        for (double& v : x) {
            v = 30.0 * rng.normal();
        }
        const Vector p = softmax(x);
        double total = 0.0;
        for (double v : p) {
            total += v;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);

        const Vector n = layer_norm(x);
        double mean = 0.0, var = 0.0;
        for (double v : n) {
            mean += v;
        }
        mean /= static_cast<double>(n.size());
        for (double v : n) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n.size());
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }

    CHECK(activation(Vector{-1.0, 2.0}, ActivationKind::Relu) == Vector{0.0, 2.0});
    CHECK(activate(0.5, ActivationKind::Silu) > 0.0);
    CHECK(activate(-0.5, ActivationKind::Silu) < 0.0);
    CHECK(activate(0.5, ActivationKind::Silu) == doctest::Approx(0.5 / (1.0 + std::exp(-0.5))));
}

TEST_CASE("non-finite values are rejected") {
    const Vector bad{1.0, std::nan("")};
    CHECK(kind_of([&] { require_finite(bad, "test"); }) == ErrorKind::NonFinite);
}

TEST_CASE("quantile_threshold nearest-rank examples") {
    const Vector v{1, 2, 3, 4, 5};
    CHECK(quantile_threshold(v, 0.2) == 5.0);
    CHECK(quantile_threshold(v, 0.4) == 4.0);
    CHECK(quantile_threshold(Vector{0.9, 0.9, 0.1}, 0.34) == 0.9);
    CHECK(kind_of([] { quantile_threshold(Vector{}, 0.5); }) == ErrorKind::EmptySet);
    CHECK(kind_of([&] { quantile_threshold(v, 0.0); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { quantile_threshold(v, 1.5); }) == ErrorKind::InvalidParam);
    CHECK(top_fraction_count(0.1, 30) == 3);
    CHECK(top_fraction_count(0.2, 5) == 1);
    CHECK(top_fraction_count(0.4, 3) == 2);
}

TEST_CASE("quantile_threshold keeps exactly ceil(rho n) distinct values and is permutation invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(40);
        Vector v(n);
        for (double& x : v) {
            x = rng.uniform(0.01, 5.0);
        }
        const double rho = rng.uniform(0.01, 1.0);
        const double t = quantile_threshold(v, rho);
        const auto at_least = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double a) { return a >= t; }));
        CHECK(at_least == oracle::ceil_frac(rho, n));
        Vector shuffled = v;
        rng.shuffle(shuffled);
        CHECK(quantile_threshold(shuffled, rho) == t);
    }
}

TEST_CASE("knee_threshold hand example and errors") {
    const std::vector<std::int64_t> c{10, 9, 8, 2, 1};
    const Knee k = knee_threshold(c);
    CHECK(k.threshold == 8);
    CHECK(k.knee_index == 2);

    // the hand distances 0.508, 1.015, 0.508 for the interior points
    const double len = std::hypot(4.0, -9.0);
    const double d1 = std::abs(-9.0 * 1 - 4.0 * 9 + 4.0 * 10) / len;
    const double d2 = std::abs(-9.0 * 2 - 4.0 * 8 + 4.0 * 10) / len;
    CHECK(d1 == doctest::Approx(0.508).epsilon(1e-3));
    CHECK(d2 == doctest::Approx(1.015).epsilon(1e-3));

    CHECK(kind_of([] { knee_threshold(std::vector<std::int64_t>{5, 5, 5, 5}); }) == ErrorKind::DegenerateDistribution);
    CHECK(kind_of([] { knee_threshold(std::vector<std::int64_t>{5, 1}); }) == ErrorKind::TooFewPoints);
}

TEST_CASE("two-level knee lands at the cliff edge") {
    std::vector<std::int64_t> c;
    for (int i = 0; i < 9; ++i) {
        c.push_back(100);
        c.push_back(10);
    }
    Rng rng(5);
    rng.shuffle(c);
    const Knee k = knee_threshold(c);
    CHECK(k.threshold == 100);
    CHECK(std::count_if(c.begin(), c.end(), [&](auto v) { return v >= k.threshold; }) == 9);
}

TEST_CASE("knee_threshold matches the floating-point distance oracle and its invariances") {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 3 + rng.below(40);
        std::vector<std::int64_t> c(n);
        for (auto& v : c) {
            v = static_cast<std::int64_t>(rng.below(60));
        }
        if (*std::max_element(c.begin(), c.end()) == *std::min_element(c.begin(), c.end())) {
            continue;
        }
        const Knee k = knee_threshold(c);
        CHECK(k.threshold == oracle::knee(c));

        std::vector<std::int64_t> p = c;
        rng.shuffle(p);
        CHECK(knee_threshold(p).knee_index == k.knee_index);

        std::vector<std::int64_t> scaled = c;
        for (auto& v : scaled) {
            v *= 7;
        }
        CHECK(knee_threshold(scaled).knee_index == k.knee_index);
    }
}

TEST_CASE("cosine and projection examples") {
    CHECK(cosine(Vector{1, 0}, Vector{0, 1}) == 0.0);
    CHECK(cosine(Vector{2, 0}, Vector{5, 0}) == 1.0);
    CHECK(cosine(Vector{3, 4}, Vector{1, 0}) == doctest::Approx(0.6));
    CHECK(kind_of([] { cosine(Vector{0, 0}, Vector{1, 0}); }) == ErrorKind::ZeroVector);

    CHECK(projection_magnitude(Vector{1.5, 2}, Vector{1, 0}) == 1.5);
    CHECK(projection_magnitude(Vector{0, 1}, Vector{1, 0}) == 0.0);
    const Vector w{1.5, 2.0};
    CHECK(projection_magnitude(w, Vector{1, 0}) == doctest::Approx(norm(w) * 0.6));
    CHECK(kind_of([] { projection_magnitude(Vector{1, 1}, Vector{0, 0}); }) == ErrorKind::ZeroVector);
}

TEST_CASE("projection linearity and rotation invariance of cosine") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Vector u(12), v(12);
        for (std::size_t i = 0; i < 12; ++i) {
            u[i] = rng.normal();
            v[i] = rng.normal();
        }
        const double a = rng.uniform(0.1, 10.0);
        Vector au = u;
        for (double& x : au) {
            x *= a;
        }
        CHECK(projection_magnitude(au, v) == doctest::Approx(a * projection_magnitude(u, v)).epsilon(1e-12));

        const Matrix q = model::random_orthonormal(12, 12, rng);
        CHECK(std::abs(cosine(vecmat(u, q), vecmat(v, q)) - cosine(u, v)) <= 1e-12);
    }
}

TEST_CASE("pearson, ranks and spearman") {
    CHECK(pearson(Vector{1, 2, 3}, Vector{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson(Vector{1, 2, 3}, Vector{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(std::isnan(pearson(Vector{1, 1, 1}, Vector{1, 2, 3})));
    CHECK(ranks(Vector{10, 20, 20, 30}) == Vector{1, 2.5, 2.5, 4});
    CHECK(spearman(Vector{1, 2, 3, 4}, Vector{1, 4, 9, 16}) == doctest::Approx(1.0));
    // hand value: d = ranks differ by (0, 1, -1), sum d^2 = 2, 1 - 6*2/(3*8) = 0.5
    CHECK(spearman(Vector{1, 2, 3}, Vector{1, 3, 2}) == doctest::Approx(0.5));
}

TEST_CASE("rng is reproducible") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.normal() == b.normal());
        CHECK(a.below(10) == b.below(10));
    }
    Rng c(1);
    const std::uint64_t first = c.next_u64();
    // mt19937_64 default-seeded output is fixed by the standard
    std::mt19937_64 ref(1);
    CHECK(first == ref());
}
