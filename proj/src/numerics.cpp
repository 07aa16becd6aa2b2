// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

namespace corematch {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParam: return "InvalidParam";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::EmptySet: return "EmptySet";
        case ErrorKind::TooFewPoints: return "TooFewPoints";
        case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::DegenerateMatrix: return "DegenerateMatrix";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::VocabError: return "VocabError";
        case ErrorKind::SequenceOverflow: return "SequenceOverflow";
        case ErrorKind::VersionError: return "VersionError";
        case ErrorKind::ChecksumError: return "ChecksumError";
        case ErrorKind::FormatError: return "FormatError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace corematch

namespace corematch::numerics {

namespace {

std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    require(m_data.size() == rows * cols, ErrorKind::ShapeError,
            "data length " + std::to_string(m_data.size()) + " does not match " + std::to_string(rows) + "x" +
                std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
    if (rows.empty()) {
        return {};
    }
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == m.cols(), ErrorKind::ShapeError, "ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(m_cols, m_rows);
    for (std::size_t r = 0; r < m_rows; ++r) {
        for (std::size_t c = 0; c < m_cols; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), m_cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < m_rows, ErrorKind::ShapeError, "row index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void Matrix::append_row(std::span<const double> values) {
    if (m_rows == 0 && m_cols == 0) {
        m_cols = values.size();
    }
    require(values.size() == m_cols, ErrorKind::ShapeError, "append_row width mismatch");
    m_data.insert(m_data.end(), values.begin(), values.end());
    ++m_rows;
}

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::NonFinite, std::string(what) + " produced a non-finite value");
        }
    }
}

Vector vecmat(std::span<const double> x, const Matrix& a) {
    require(x.size() == a.rows(), ErrorKind::ShapeError,
            "vecmat: vector length " + std::to_string(x.size()) + " vs matrix " + shape_str(a));
    Vector out(a.cols(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double xk = x[k];
        auto arow = a.row(k);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += xk * arow[j];
        }
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), ErrorKind::ShapeError, "matmul " + shape_str(a) + " * " + shape_str(b));
    Matrix out(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        Vector row = vecmat(a.row(r), b);
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    require_finite(out.data(), "matmul");
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeError,
            "add " + shape_str(a) + " + " + shape_str(b));
    Matrix out = a;
    std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.data().begin(), std::plus<>());
    return out;
}

Matrix scale(const Matrix& a, double factor) {
    Matrix out = a;
    for (double& v : out.data()) {
        v *= factor;
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrorKind::ShapeError, "dot length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        s += u[i] * v[i];
    }
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Matrix& a) { return norm(a.data()); }

Vector softmax(std::span<const double> row) {
    require(!row.empty(), ErrorKind::EmptySet, "softmax of empty row");
    const double mx = *std::max_element(row.begin(), row.end());
    Vector out(row.size());
    double total = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp(row[i] - mx);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

Vector layer_norm(std::span<const double> x, double eps) {
    require(!x.empty(), ErrorKind::EmptySet, "layer_norm of empty vector");
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean) * inv;
    }
    return out;
}

double activate(double x, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Relu: return x > 0.0 ? x : 0.0;
        case ActivationKind::Silu: return x / (1.0 + std::exp(-x));
    }
    return x;
}

Vector activation(std::span<const double> x, ActivationKind kind) {
    Vector out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [kind](double v) { return activate(v, kind); });
    return out;
}

Vector unit(std::span<const double> v) {
    const double n = norm(v);
    require(n > 0.0, ErrorKind::ZeroVector, "cannot normalise a zero vector");
    Vector out(v.begin(), v.end());
    for (double& x : out) {
        x /= n;
    }
    return out;
}

std::size_t top_fraction_count(double fraction, std::size_t n) {
    require(fraction > 0.0 && fraction <= 1.0, ErrorKind::InvalidParam, "fraction must lie in (0, 1]");
    if (n == 0) {
        return 0;
    }
    // 1e-9 slack so that e.g. 0.1 * 30 counts as 3, not 4.
    const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

double quantile_threshold(std::span<const double> values, double rho) {
    require(!values.empty(), ErrorKind::EmptySet, "quantile_threshold of empty input");
    require(rho > 0.0 && rho <= 1.0, ErrorKind::InvalidParam, "rho must lie in (0, 1]");
    const std::size_t keep = top_fraction_count(rho, values.size());
    std::vector<double> sorted(values.begin(), values.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end(),
                     std::greater<>());
    return sorted[keep - 1];
}

Knee knee_threshold(std::span<const std::int64_t> counts) {
    require(counts.size() >= 3, ErrorKind::TooFewPoints,
            "knee detection needs at least 3 points, got " + std::to_string(counts.size()));
    std::vector<std::int64_t> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    require(sorted.front() != sorted.back(), ErrorKind::DegenerateDistribution, "all counts are equal");

    // Distance to the chord is |cross| / |chord|; the denominator is shared, so
    // comparing the integer cross products is exact.
    const auto last = static_cast<std::int64_t>(sorted.size() - 1);
    const std::int64_t dy = sorted.back() - sorted.front();
    Knee best;
    std::int64_t best_cross = -1;
    for (std::int64_t i = 0; i <= last; ++i) {
        const std::int64_t cross = std::abs(dy * i - last * (sorted[static_cast<std::size_t>(i)] - sorted.front()));
        if (cross > best_cross) {
            best_cross = cross;
            best.knee_index = static_cast<std::size_t>(i);
            best.threshold = sorted[static_cast<std::size_t>(i)];
        }
    }
    return best;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrorKind::ShapeError, "cosine length mismatch");
    const double nu = norm(u);
    const double nv = norm(v);
    require(nu > 0.0 && nv > 0.0, ErrorKind::ZeroVector, "cosine with a zero vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double projection_magnitude(std::span<const double> w, std::span<const double> target) {
    const double nt = norm(target);
    require(nt > 0.0, ErrorKind::ZeroVector, "projection onto a zero vector");
    return dot(w, target) / nt;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), ErrorKind::ShapeError, "pearson length mismatch");
    require(!x.empty(), ErrorKind::EmptySet, "pearson of empty samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    // Relative floor so that rounding noise on constant inputs reads as zero variance.
    const auto flat = [n](double s, double mean) { return s <= 1e-24 * n * std::max(1.0, mean * mean); };
    if (flat(sxx, mx) || flat(syy, my)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Vector ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    Vector out(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            out[order[k]] = mean_rank;
        }
        i = j + 1;
    }
    return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    const Vector rx = ranks(x);
    const Vector ry = ranks(y);
    return pearson(rx, ry);
}

}  // namespace corematch::numerics
