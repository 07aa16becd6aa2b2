// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "corematch/numerics.hpp"

namespace corematch::sparsity {

using numerics::Matrix;
using IndexSet = std::vector<std::size_t>;  // always sorted ascending

/// Top-rho positive neurons of one token.
struct TokenCoreSet {
    std::size_t layer = 0;
    std::size_t token = 0;
    IndexSet neuron_ids;
    /// No positive activation at all; the set is empty.
    bool dead = false;
};

/// counts[n] = number of tokens whose TokenCoreSet contains neuron n.
struct FrequencyTable {
    std::size_t layer = 0;
    std::vector<std::size_t> counts;
};

/// The ceil(beta * d_ffn) most frequent core neurons of a sequence.
struct SentenceCoreSet {
    std::size_t layer = 0;
    IndexSet neuron_ids;

    bool operator==(const SentenceCoreSet&) const = default;
};

struct CoreTokenSelection {
    std::size_t layer = 0;
    std::vector<std::size_t> intersection_counts;  // one per token
    std::int64_t threshold = 0;                     // T_k
    IndexSet kept;
    IndexSet protected_tokens;
    /// Knee geometry was unusable (all-equal or too few prunable counts); all tokens kept.
    bool degenerate = false;
};

/// Gamma(x): indices with strictly positive activation.
IndexSet activated_set(std::span<const double> activations);

/// Ties at the cutoff are trimmed by (higher activation, lower index).
TokenCoreSet token_core_neurons(std::span<const double> activations, double rho);

struct SentenceCoreResult {
    FrequencyTable frequency;
    SentenceCoreSet core;
    std::vector<TokenCoreSet> token_sets;
};

/// Rows of `activations` are tokens. Ties on count are broken by higher total
/// positive activation mass, then by lower neuron index.
SentenceCoreResult sentence_core_neurons(const Matrix& activations, double rho, double beta, std::size_t layer = 0);

/// counts[m] = |Gamma(x_m) ∩ core|.
std::vector<std::size_t> intersection_counts(const std::vector<IndexSet>& activated, const SentenceCoreSet& core);

/// Knee over the non-protected tokens' counts; keeps protected ∪ {count >= T_k}.
/// All-equal prunable counts keep everything and set `degenerate`.
/// Fewer than three prunable tokens throws TooFewPoints.
CoreTokenSelection select_core_tokens(std::span<const std::size_t> counts, std::span<const std::size_t> protected_tokens,
                                      std::size_t layer = 0);

/// Jaccard similarity of every set against the last one. Two empty sets give 1.
std::vector<double> core_set_stability(const std::vector<SentenceCoreSet>& prefix_sets);

double jaccard(const IndexSet& a, const IndexSet& b);

/// CSV rows "layer,id,count,kept"; for neurons kept marks core-set membership.
void write_frequency_csv(std::ostream& out, const FrequencyTable& table, const SentenceCoreSet& core);
void write_selection_csv(std::ostream& out, const CoreTokenSelection& selection);

}  // namespace corematch::sparsity
