// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corematch/model.hpp"
#include "corematch/sparsity.hpp"

namespace corematch::criteria {

using model::ActivationTrace;
using model::LayerTrace;
using numerics::Matrix;
using numerics::Vector;

// ---- token importance scores ---------------------------------------------------

/// Head-averaged attention paid by token M to every token (zero after M).
Vector attention_criterion(const LayerTrace& layer, std::size_t m);

/// Per-token contribution to O_M: concat over heads of alpha^h_{M,i} V^h_i.
/// These sum exactly to the recorded attention output of M.
Matrix attention_contributions(const LayerTrace& layer, std::size_t m);

/// Signed projection of each contribution onto O_M. Sums to |O_M|.
Vector exact_projection_criterion(const LayerTrace& layer, std::size_t m);

/// |contribution_i| * cos(V_i, V_M): O_M replaced by its self term.
Vector approx_projection_criterion(const LayerTrace& layer, std::size_t m);

struct CriterionReport {
    std::size_t layer = 0;
    std::size_t reference = 0;  // row index of M
    std::vector<std::size_t> positions;
    Vector attention_score;
    Vector exact_projection;
    Vector approx_projection;
    Vector intersection_count;  // empty unless a core set was supplied
};

CriterionReport criterion_report(const ActivationTrace& trace, std::size_t layer, std::optional<std::size_t> m = {},
                                 const sparsity::SentenceCoreSet* core = nullptr);

// ---- validators ------------------------------------------------------------------

enum class Verdict { Pass, Fail, Insufficient };
std::string_view to_string(Verdict v);

struct Bin {
    double x_lo = 0.0;
    double x_hi = 0.0;
    double x_mean = 0.0;
    double y_mean = 0.0;
    std::size_t count = 0;
};

struct ValidationSummary {
    std::string name;
    std::size_t layer = 0;
    double pearson_r = std::numeric_limits<double>::quiet_NaN();
    double spearman_r = std::numeric_limits<double>::quiet_NaN();
    std::size_t sample_count = 0;
    std::vector<Bin> bins;
    /// Which statistic is compared against `threshold` ("pearson" or "spearman").
    std::string metric;
    double threshold = 0.0;
    Verdict verdict = Verdict::Insufficient;
    std::map<std::string, double> extras;
    std::string note;

    double statistic() const { return metric == "pearson" ? pearson_r : spearman_r; }
};

enum class PairMode {
    AllPairs,     ///< every (i, j), i < j
    AgainstLast,  ///< (i, M) for every i != M
};

struct ValidatorOptions {
    /// Gate for the validator's statistic; each validator has its own default.
    std::optional<double> threshold;
    PairMode pairs = PairMode::AllPairs;
    std::size_t min_samples = 30;
    std::size_t bins = 10;
    /// Shuffle one side before correlating (null-model control).
    bool permuted_null = false;
    std::uint64_t seed = 0;
    /// Secondary gate for validate_matching: top-16 overlap.
    double overlap_threshold = 0.6;
    /// Reference token row; defaults to the last row.
    std::optional<std::size_t> reference;
};

inline constexpr double kObservation2Threshold = 0.8;
inline constexpr double kInsight1Threshold = 0.6;
inline constexpr double kInsight2Threshold = 0.6;
inline constexpr double kMatchingThreshold = 0.6;
inline constexpr double kObservation1Threshold = 0.1;
inline constexpr double kAnglePreservationTolerance = 1e-9;
inline constexpr std::size_t kMinSamples = 30;

/// Deviation of one layer's matrices from scaled identity / scaled orthogonality.
struct OrthogonalityEntry {
    std::size_t layer = 0;
    double qk = 0.0;  // W_q W_k^T vs theta I
    double v = 0.0;
    double o = 0.0;
    double u = 0.0;
    double d = 0.0;
    double d_rows = 0.0;  // W_d W_d^T, the premise of exact angle preservation
    double theta_hat = 0.0;

    double max_deviation() const;
};

struct Observation1Report {
    std::vector<OrthogonalityEntry> layers;
    double max_deviation = 0.0;
    double threshold = kObservation1Threshold;
    Verdict verdict = Verdict::Fail;
    std::string note;
};

Observation1Report validate_observation1(const model::Weights& weights, double threshold = kObservation1Threshold);

/// Pearson r between cos(A_i, A_j) and |Gamma_i ∩ Gamma_j|.
ValidationSummary validate_observation2(const ActivationTrace& trace, std::size_t layer,
                                        ValidatorOptions options = {});

/// Spearman between the exact projection at attention layer `layer` and the
/// cosine of the normalised hidden states entering that attention block.
/// premise_deviation, when known, is recorded in the report.
ValidationSummary validate_insight1(const ActivationTrace& trace, std::size_t layer, ValidatorOptions options = {},
                                    std::optional<double> premise_deviation = {});

/// Pearson between cos(y_i, y_j) of FFN outputs and |Gamma_i ∩ Gamma_j|;
/// extras["max_angle_delta"] = max |cos(y_i,y_j) - cos(A_i,A_j)| over the pairs.
ValidationSummary validate_insight2(const ActivationTrace& trace, std::size_t layer, ValidatorOptions options = {});

/// Spearman between intersection-with-core counts at FFN `layer` and the
/// exact projection at attention `layer + 1` (the block the FFN output feeds),
/// plus top-k overlaps for k in {8, 16, 32}.
ValidationSummary validate_matching(const ActivationTrace& trace, std::size_t layer,
                                    const sparsity::SentenceCoreSet& core, ValidatorOptions options = {});

/// Max |cos(A_i W_d, A_j W_d) - cos(A_i, A_j)| over the given row pairs.
double max_angle_delta(const Matrix& activations, const Matrix& wd,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

/// Distinct random pairs (i < j) from n items; all pairs if fewer exist.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t count, std::uint64_t seed);

/// Fraction of shared indices among the top-k of two score vectors
/// (ties broken by lower index).
double top_k_overlap(const Vector& a, const Vector& b, std::size_t k);

/// Equal-width bins over x with the mean y of each bin.
std::vector<Bin> bin_means(const Vector& x, const Vector& y, std::size_t bins);

}  // namespace corematch::criteria
