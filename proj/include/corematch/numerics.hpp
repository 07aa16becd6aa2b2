// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "corematch/error.hpp"

namespace corematch::numerics {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Shapes are checked by every binary op.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vector>& rows);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    std::size_t size() const noexcept { return m_data.size(); }
    bool empty() const noexcept { return m_data.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_data[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const { return {m_data.data() + r * m_cols, m_cols}; }

    std::span<double> data() noexcept { return m_data; }
    std::span<const double> data() const noexcept { return m_data; }

    Matrix transposed() const;
    /// Rows picked in the given order.
    Matrix select_rows(std::span<const std::size_t> indices) const;
    void append_row(std::span<const double> values);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

enum class ActivationKind : std::uint32_t { Relu = 0, Silu = 1 };

// ---- linear algebra -------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
/// x (len a.rows) times a; the row kernel shared by every forward path.
Vector vecmat(std::span<const double> x, const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);
double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> v);
double frobenius_norm(const Matrix& a);

// ---- elementwise / row ops ------------------------------------------------

Vector softmax(std::span<const double> row);
/// Zero-mean, unit-variance normalisation with no affine terms.
Vector layer_norm(std::span<const double> x, double eps = 1e-5);
double activate(double x, ActivationKind kind);
Vector activation(std::span<const double> x, ActivationKind kind);
/// Scales to unit Euclidean norm; throws ZeroVector on a zero input.
Vector unit(std::span<const double> v);

void require_finite(std::span<const double> values, const char* what);

// ---- selection ------------------------------------------------------------

/// Number of items kept by a top-fraction cut: ceil(fraction * n), at least 1.
std::size_t top_fraction_count(double fraction, std::size_t n);

/// Nearest-rank top-fraction cutoff: the smallest value v with
/// |{a >= v}| == ceil(rho * n), counting ties at v only once it is reached.
double quantile_threshold(std::span<const double> values, double rho);

struct Knee {
    std::int64_t threshold = 0;
    std::size_t knee_index = 0;
};

/// Maximum perpendicular distance from the chord of the descending curve.
/// Raw (index, count) coordinates; ties resolve to the smaller index.
Knee knee_threshold(std::span<const std::int64_t> counts);

// ---- geometry -------------------------------------------------------------

double cosine(std::span<const double> u, std::span<const double> v);
/// Signed scalar projection <w, target> / |target|.
double projection_magnitude(std::span<const double> w, std::span<const double> target);

// ---- statistics -----------------------------------------------------------

/// Pearson r; returns NaN when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
/// Average ranks (ties share the mean rank), 1-based.
Vector ranks(std::span<const double> values);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace corematch::numerics
