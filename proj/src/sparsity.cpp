// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/sparsity.hpp"

#include <algorithm>
#include <numeric>

namespace corematch::sparsity {

IndexSet activated_set(std::span<const double> activations) {
    IndexSet out;
    for (std::size_t n = 0; n < activations.size(); ++n) {
        if (activations[n] > 0.0) {
            out.push_back(n);
        }
    }
    return out;
}

TokenCoreSet token_core_neurons(std::span<const double> activations, double rho) {
    require(rho > 0.0 && rho <= 1.0, ErrorKind::InvalidParam, "rho must lie in (0, 1]");
    TokenCoreSet out;
    const IndexSet positive = activated_set(activations);
    if (positive.empty()) {
        out.dead = true;
        return out;
    }
    std::vector<double> values(positive.size());
    std::transform(positive.begin(), positive.end(), values.begin(),
                   [&](std::size_t n) { return activations[n]; });
    const double cutoff = numerics::quantile_threshold(values, rho);
    const std::size_t keep = numerics::top_fraction_count(rho, positive.size());

    IndexSet candidates;
    for (std::size_t n : positive) {
        if (activations[n] >= cutoff) {
            candidates.push_back(n);
        }
    }
    if (candidates.size() > keep) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](std::size_t a, std::size_t b) { return activations[a] > activations[b]; });
        candidates.resize(keep);
    }
    std::sort(candidates.begin(), candidates.end());
    out.neuron_ids = std::move(candidates);
    return out;
}

SentenceCoreResult sentence_core_neurons(const Matrix& activations, double rho, double beta, std::size_t layer) {
    require(activations.rows() >= 1, ErrorKind::EmptySet, "sentence needs at least one token");
    require(beta > 0.0 && beta <= 1.0, ErrorKind::InvalidParam, "beta must lie in (0, 1]");
    const std::size_t width = activations.cols();

    SentenceCoreResult out;
    out.frequency.layer = layer;
    out.frequency.counts.assign(width, 0);
    std::vector<double> mass(width, 0.0);
    for (std::size_t m = 0; m < activations.rows(); ++m) {
        const auto row = activations.row(m);
        TokenCoreSet ts = token_core_neurons(row, rho);
        ts.layer = layer;
        ts.token = m;
        for (std::size_t n : ts.neuron_ids) {
            ++out.frequency.counts[n];
        }
        for (std::size_t n = 0; n < width; ++n) {
            if (row[n] > 0.0) {
                mass[n] += row[n];
            }
        }
        out.token_sets.push_back(std::move(ts));
    }

    std::vector<std::size_t> order(width);
    std::iota(order.begin(), order.end(), 0);
    const auto& counts = out.frequency.counts;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (counts[a] != counts[b]) {
            return counts[a] > counts[b];
        }
        if (mass[a] != mass[b]) {
            return mass[a] > mass[b];
        }
        return a < b;
    });
    order.resize(numerics::top_fraction_count(beta, width));
    std::sort(order.begin(), order.end());
    out.core.layer = layer;
    out.core.neuron_ids = std::move(order);
    return out;
}

std::vector<std::size_t> intersection_counts(const std::vector<IndexSet>& activated, const SentenceCoreSet& core) {
    std::vector<std::size_t> out;
    out.reserve(activated.size());
    for (const auto& gamma : activated) {
        std::size_t both = 0;
        auto a = gamma.begin();
        auto b = core.neuron_ids.begin();
        while (a != gamma.end() && b != core.neuron_ids.end()) {
            if (*a < *b) {
                ++a;
            } else if (*b < *a) {
                ++b;
            } else {
                ++both;
                ++a;
                ++b;
            }
        }
        out.push_back(both);
    }
    return out;
}

CoreTokenSelection select_core_tokens(std::span<const std::size_t> counts, std::span<const std::size_t> protected_tokens,
                                      std::size_t layer) {
    CoreTokenSelection sel;
    sel.layer = layer;
    sel.intersection_counts.assign(counts.begin(), counts.end());
    std::vector<bool> is_protected(counts.size(), false);
    for (std::size_t p : protected_tokens) {
        require(p < counts.size(), ErrorKind::InvalidParam, "protected token index out of range");
        is_protected[p] = true;
    }
    for (std::size_t m = 0; m < counts.size(); ++m) {
        if (is_protected[m]) {
            sel.protected_tokens.push_back(m);
        }
    }

    std::vector<std::int64_t> prunable;
    for (std::size_t m = 0; m < counts.size(); ++m) {
        if (!is_protected[m]) {
            prunable.push_back(static_cast<std::int64_t>(counts[m]));
        }
    }

    try {
        const numerics::Knee knee = numerics::knee_threshold(prunable);
        sel.threshold = knee.threshold;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateDistribution) {
            throw;
        }
        sel.degenerate = true;
        sel.threshold = prunable.empty() ? 0 : prunable.front();
    }

    for (std::size_t m = 0; m < counts.size(); ++m) {
        if (is_protected[m] || sel.degenerate || static_cast<std::int64_t>(counts[m]) >= sel.threshold) {
            sel.kept.push_back(m);
        }
    }
    return sel;
}

double jaccard(const IndexSet& a, const IndexSet& b) {
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    IndexSet both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    const std::size_t uni = a.size() + b.size() - both.size();
    return static_cast<double>(both.size()) / static_cast<double>(uni);
}

std::vector<double> core_set_stability(const std::vector<SentenceCoreSet>& prefix_sets) {
    require(prefix_sets.size() >= 2, ErrorKind::TooFewPoints, "stability needs at least two sets");
    const IndexSet& last = prefix_sets.back().neuron_ids;
    std::vector<double> out;
    out.reserve(prefix_sets.size());
    for (const auto& s : prefix_sets) {
        require(s.layer == prefix_sets.back().layer, ErrorKind::InvalidParam, "sets come from different layers");
        out.push_back(jaccard(s.neuron_ids, last));
    }
    return out;
}

void write_frequency_csv(std::ostream& out, const FrequencyTable& table, const SentenceCoreSet& core) {
    out << "layer,id,count,kept\n";
    std::vector<bool> in_core(table.counts.size(), false);
    for (std::size_t n : core.neuron_ids) {
        if (n < in_core.size()) {
            in_core[n] = true;
        }
    }
    for (std::size_t n = 0; n < table.counts.size(); ++n) {
        out << table.layer << ',' << n << ',' << table.counts[n] << ',' << (in_core[n] ? 1 : 0) << '\n';
    }
}

void write_selection_csv(std::ostream& out, const CoreTokenSelection& selection) {
    out << "layer,id,count,kept\n";
    std::vector<bool> kept(selection.intersection_counts.size(), false);
    for (std::size_t m : selection.kept) {
        kept[m] = true;
    }
    for (std::size_t m = 0; m < selection.intersection_counts.size(); ++m) {
        out << selection.layer << ',' << m << ',' << selection.intersection_counts[m] << ',' << (kept[m] ? 1 : 0)
            << '\n';
    }
}

}  // namespace corematch::sparsity
