// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "corematch/rng.hpp"

namespace corematch::criteria {

using numerics::cosine;
using numerics::dot;
using numerics::norm;

namespace {

std::size_t reference_row(const LayerTrace& layer, std::optional<std::size_t> m) {
    require(layer.tokens() > 0, ErrorKind::EmptySet, "layer trace has no tokens");
    const std::size_t row = m.value_or(layer.tokens() - 1);
    require(row < layer.tokens(), ErrorKind::InvalidParam, "reference token out of range");
    return row;
}

const LayerTrace& layer_at(const ActivationTrace& trace, std::size_t layer) {
    require(layer < trace.layers.size(), ErrorKind::InvalidParam,
            "layer " + std::to_string(layer) + " out of range (trace has " + std::to_string(trace.layers.size()) + ")");
    return trace.layers[layer];
}

std::size_t overlap_count(const sparsity::IndexSet& a, const sparsity::IndexSet& b) {
    std::size_t both = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++both;
            ++i;
            ++j;
        }
    }
    return both;
}

std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::size_t n, PairMode mode, std::size_t m) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (mode == PairMode::AgainstLast) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i != m) {
                pairs.emplace_back(i, m);
            }
        }
        return pairs;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

void finalise(ValidationSummary& s, const Vector& x, const Vector& y, const ValidatorOptions& opt,
              double default_threshold) {
    s.sample_count = x.size();
    s.threshold = opt.threshold.value_or(default_threshold);
    if (!x.empty()) {
        s.pearson_r = numerics::pearson(x, y);
        s.spearman_r = numerics::spearman(x, y);
        s.bins = bin_means(x, y, opt.bins);
    }
    const double stat = s.statistic();
    if (s.sample_count < opt.min_samples || std::isnan(stat)) {
        s.verdict = Verdict::Insufficient;
        if (s.note.empty()) {
            s.note = s.sample_count < opt.min_samples ? "too few samples for a verdict"
                                                      : "zero variance on one side; correlation undefined";
        }
        return;
    }
    s.verdict = stat >= s.threshold ? Verdict::Pass : Verdict::Fail;
}

void maybe_permute(Vector& v, const ValidatorOptions& opt) {
    if (opt.permuted_null) {
        Rng rng(opt.seed);
        rng.shuffle(v);
    }
}

bool nonzero(std::span<const double> v) { return norm(v) > 0.0; }

}  // namespace

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Insufficient: return "insufficient";
    }
    return "unknown";
}

Vector attention_criterion(const LayerTrace& layer, std::size_t m) {
    require(m < layer.tokens(), ErrorKind::InvalidParam, "reference token out of range");
    Vector out(layer.tokens(), 0.0);
    for (std::size_t i = 0; i <= m; ++i) {
        out[i] = layer.mean_alpha(m, i);
    }
    return out;
}

Matrix attention_contributions(const LayerTrace& layer, std::size_t m) {
    require(m < layer.tokens(), ErrorKind::InvalidParam, "reference token out of range");
    const std::size_t d = layer.values.cols();
    const std::size_t heads = layer.alpha.size();
    const std::size_t dh = d / heads;
    Matrix w(layer.tokens(), d);
    for (std::size_t i = 0; i <= m; ++i) {
        const auto v = layer.values.row(i);
        auto dst = w.row(i);
        for (std::size_t h = 0; h < heads; ++h) {
            const double a = layer.alpha[h](m, i);
            for (std::size_t k = h * dh; k < (h + 1) * dh; ++k) {
                dst[k] = a * v[k];
            }
        }
    }
    return w;
}

Vector exact_projection_criterion(const LayerTrace& layer, std::size_t m) {
    const Matrix w = attention_contributions(layer, m);
    const auto o = layer.attn_out.row(m);
    Vector out(layer.tokens(), 0.0);
    for (std::size_t i = 0; i <= m; ++i) {
        out[i] = numerics::projection_magnitude(w.row(i), o);
    }
    return out;
}

Vector approx_projection_criterion(const LayerTrace& layer, std::size_t m) {
    const Matrix w = attention_contributions(layer, m);
    const auto vm = layer.values.row(m);
    require(nonzero(vm), ErrorKind::ZeroVector, "V_M is zero");
    Vector out(layer.tokens(), 0.0);
    for (std::size_t i = 0; i <= m; ++i) {
        const auto vi = layer.values.row(i);
        out[i] = nonzero(vi) ? norm(w.row(i)) * cosine(vi, vm) : 0.0;
    }
    return out;
}

CriterionReport criterion_report(const ActivationTrace& trace, std::size_t layer, std::optional<std::size_t> m,
                                 const sparsity::SentenceCoreSet* core) {
    const LayerTrace& lt = layer_at(trace, layer);
    CriterionReport r;
    r.layer = layer;
    r.reference = reference_row(lt, m);
    r.positions = lt.positions;
    r.attention_score = attention_criterion(lt, r.reference);
    r.exact_projection = exact_projection_criterion(lt, r.reference);
    r.approx_projection = approx_projection_criterion(lt, r.reference);
    if (core) {
        std::vector<sparsity::IndexSet> gammas;
        for (std::size_t i = 0; i < lt.tokens(); ++i) {
            gammas.push_back(sparsity::activated_set(lt.activations.row(i)));
        }
        for (std::size_t c : sparsity::intersection_counts(gammas, *core)) {
            r.intersection_count.push_back(static_cast<double>(c));
        }
    }
    return r;
}

double OrthogonalityEntry::max_deviation() const { return std::max({qk, v, o, u, d}); }

Observation1Report validate_observation1(const model::Weights& weights, double threshold) {
    Observation1Report rep;
    rep.threshold = threshold;
    const auto safe = [](auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateMatrix) {
                throw;
            }
            return std::numeric_limits<double>::infinity();
        }
    };
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        const auto& lw = weights.layers[l];
        OrthogonalityEntry e;
        e.layer = l;
        const Matrix qk = numerics::matmul(lw.wq, lw.wk.transposed());
        e.qk = safe([&] { return model::scaled_identity_deviation(qk); });
        double diag = 0.0;
        for (std::size_t i = 0; i < qk.rows(); ++i) {
            diag += qk(i, i);
        }
        e.theta_hat = diag / static_cast<double>(qk.rows());
        e.v = safe([&] { return model::orthogonality_deviation(lw.wv); });
        e.o = safe([&] { return model::orthogonality_deviation(lw.wo); });
        e.u = safe([&] { return model::orthogonality_deviation(lw.wu); });
        e.d = safe([&] { return model::orthogonality_deviation(lw.wd); });
        e.d_rows = safe([&] { return model::orthogonality_deviation(lw.wd, model::GramSide::Rows); });
        rep.max_deviation = std::max(rep.max_deviation, e.max_deviation());
        rep.layers.push_back(e);
    }
    rep.verdict = rep.max_deviation <= threshold ? Verdict::Pass : Verdict::Fail;
    if (rep.verdict == Verdict::Fail) {
        // Name the first broken premise.
        for (const auto& e : rep.layers) {
            const std::pair<const char*, double> items[] = {
                {"W_q W_k^T ~ theta I", e.qk}, {"W_v W_v^T ~ lambda I", e.v}, {"W_o W_o^T ~ lambda I", e.o},
                {"W_u W_u^T ~ lambda I", e.u}, {"W_d^T W_d ~ lambda I", e.d}};
            for (const auto& [label, dev] : items) {
                if (!(dev <= threshold)) {
                    rep.note = std::string("premise broken: ") + label + " at layer " + std::to_string(e.layer) +
                               " (deviation " + std::to_string(dev) + ")";
                    return rep;
                }
            }
        }
    }
    return rep;
}

ValidationSummary validate_observation2(const ActivationTrace& trace, std::size_t layer, ValidatorOptions options) {
    const LayerTrace& lt = layer_at(trace, layer);
    const std::size_t m = reference_row(lt, options.reference);
    ValidationSummary s;
    s.name = "observation2";
    s.layer = layer;
    s.metric = "pearson";

    std::vector<sparsity::IndexSet> gammas;
    for (std::size_t i = 0; i < lt.tokens(); ++i) {
        gammas.push_back(sparsity::activated_set(lt.activations.row(i)));
    }
    Vector intersections, cosines;
    for (const auto& [i, j] : make_pairs(lt.tokens(), options.pairs, m)) {
        const auto ai = lt.activations.row(i);
        const auto aj = lt.activations.row(j);
        if (!nonzero(ai) || !nonzero(aj)) {
            continue;
        }
        intersections.push_back(static_cast<double>(overlap_count(gammas[i], gammas[j])));
        cosines.push_back(cosine(ai, aj));
    }
    maybe_permute(intersections, options);
    finalise(s, intersections, cosines, options, kObservation2Threshold);
    return s;
}

ValidationSummary validate_insight1(const ActivationTrace& trace, std::size_t layer, ValidatorOptions options,
                                    std::optional<double> premise_deviation) {
    const LayerTrace& lt = layer_at(trace, layer);
    const std::size_t m = reference_row(lt, options.reference);
    ValidationSummary s;
    s.name = "insight1";
    s.layer = layer;
    s.metric = "spearman";

    const Vector proj = exact_projection_criterion(lt, m);
    const Vector y_m = numerics::layer_norm(lt.attn_input.row(m));
    Vector cosines, scores;
    for (std::size_t i = 0; i <= m; ++i) {
        const Vector y_i = numerics::layer_norm(lt.attn_input.row(i));
        if (!nonzero(y_i) || !nonzero(y_m)) {
            continue;
        }
        cosines.push_back(cosine(y_i, y_m));
        scores.push_back(proj[i]);
    }
    maybe_permute(scores, options);
    if (premise_deviation) {
        s.extras["premise_deviation"] = *premise_deviation;
        s.note = *premise_deviation <= kObservation1Threshold ? "orthogonality premise holds"
                                                              : "orthogonality premise broken; correlation is descriptive";
    }
    finalise(s, cosines, scores, options, kInsight1Threshold);
    return s;
}

ValidationSummary validate_insight2(const ActivationTrace& trace, std::size_t layer, ValidatorOptions options) {
    const LayerTrace& lt = layer_at(trace, layer);
    const std::size_t m = reference_row(lt, options.reference);
    ValidationSummary s;
    s.name = "insight2";
    s.layer = layer;
    s.metric = "pearson";

    std::vector<sparsity::IndexSet> gammas;
    for (std::size_t i = 0; i < lt.tokens(); ++i) {
        gammas.push_back(sparsity::activated_set(lt.activations.row(i)));
    }
    Vector intersections, cosines;
    double max_delta = 0.0;
    for (const auto& [i, j] : make_pairs(lt.tokens(), options.pairs, m)) {
        const auto ai = lt.activations.row(i);
        const auto aj = lt.activations.row(j);
        const auto yi = lt.ffn_output.row(i);
        const auto yj = lt.ffn_output.row(j);
        if (!nonzero(ai) || !nonzero(aj) || !nonzero(yi) || !nonzero(yj)) {
            continue;
        }
        const double cy = cosine(yi, yj);
        max_delta = std::max(max_delta, std::abs(cy - cosine(ai, aj)));
        intersections.push_back(static_cast<double>(overlap_count(gammas[i], gammas[j])));
        cosines.push_back(cy);
    }
    maybe_permute(intersections, options);
    s.extras["max_angle_delta"] = max_delta;
    s.extras["angle_preserved"] = max_delta <= kAnglePreservationTolerance ? 1.0 : 0.0;
    finalise(s, intersections, cosines, options, kInsight2Threshold);
    return s;
}

ValidationSummary validate_matching(const ActivationTrace& trace, std::size_t layer,
                                    const sparsity::SentenceCoreSet& core, ValidatorOptions options) {
    const LayerTrace& ffn = layer_at(trace, layer);
    require(layer + 1 < trace.layers.size(), ErrorKind::InvalidParam,
            "matching needs the attention block after FFN layer " + std::to_string(layer));
    const LayerTrace& attn = trace.layers[layer + 1];
    const std::size_t m = reference_row(attn, options.reference);

    ValidationSummary s;
    s.name = "matching";
    s.layer = layer;
    s.metric = "spearman";

    const Vector proj = exact_projection_criterion(attn, m);
    // Align by original position: the attention layer may hold fewer tokens.
    Vector counts, scores;
    std::size_t f = 0;
    for (std::size_t a = 0; a <= m; ++a) {
        while (f < ffn.tokens() && ffn.positions[f] < attn.positions[a]) {
            ++f;
        }
        require(f < ffn.tokens() && ffn.positions[f] == attn.positions[a], ErrorKind::InvalidParam,
                "attention token missing from the FFN layer");
        const auto gamma = sparsity::activated_set(ffn.activations.row(f));
        counts.push_back(static_cast<double>(overlap_count(gamma, core.neuron_ids)));
        scores.push_back(proj[a]);
    }
    maybe_permute(counts, options);
    for (std::size_t k : {8u, 16u, 32u}) {
        if (k <= counts.size()) {
            s.extras["top" + std::to_string(k) + "_overlap"] = top_k_overlap(scores, counts, k);
        }
    }
    s.extras["overlap_threshold"] = options.overlap_threshold;
    finalise(s, counts, scores, options, kMatchingThreshold);
    if (s.verdict == Verdict::Pass) {
        const auto it = s.extras.find("top16_overlap");
        if (it == s.extras.end()) {
            s.verdict = Verdict::Insufficient;
            s.note = "fewer than 16 tokens; top-16 overlap undefined";
        } else if (it->second < options.overlap_threshold) {
            s.verdict = Verdict::Fail;
            s.note = "rank correlation passes but top-16 overlap is below threshold";
        }
    }
    return s;
}

double max_angle_delta(const Matrix& activations, const Matrix& wd,
                       const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    const Matrix y = numerics::matmul(activations, wd);
    double worst = 0.0;
    for (const auto& [i, j] : pairs) {
        worst = std::max(worst, std::abs(cosine(y.row(i), y.row(j)) - cosine(activations.row(i), activations.row(j))));
    }
    return worst;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t count, std::uint64_t seed) {
    const std::size_t total = n * (n - (n > 0 ? 1 : 0)) / 2;
    if (count >= total) {
        return make_pairs(n, PairMode::AllPairs, 0);
    }
    Rng rng(seed);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    while (out.size() < count) {
        std::size_t i = rng.below(n);
        std::size_t j = rng.below(n);
        if (i == j) {
            continue;
        }
        if (i > j) {
            std::swap(i, j);
        }
        if (seen.emplace(i, j).second) {
            out.emplace_back(i, j);
        }
    }
    return out;
}

double top_k_overlap(const Vector& a, const Vector& b, std::size_t k) {
    require(a.size() == b.size(), ErrorKind::ShapeError, "top-k overlap length mismatch");
    require(k >= 1 && k <= a.size(), ErrorKind::InvalidParam, "k out of range");
    const auto top = [k](const Vector& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] > v[y]; });
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    return static_cast<double>(overlap_count(top(a), top(b))) / static_cast<double>(k);
}

std::vector<Bin> bin_means(const Vector& x, const Vector& y, std::size_t bins) {
    std::vector<Bin> out;
    if (x.empty() || bins == 0) {
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    const std::size_t n_bins = hi > lo ? bins : 1;
    out.resize(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        out[b].x_lo = lo + width * static_cast<double>(b);
        out[b].x_hi = hi > lo ? lo + width * static_cast<double>(b + 1) : hi;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t b = hi > lo ? static_cast<std::size_t>((x[i] - lo) / width) : 0;
        b = std::min(b, n_bins - 1);
        out[b].x_mean += x[i];
        out[b].y_mean += y[i];
        ++out[b].count;
    }
    for (auto& b : out) {
        if (b.count > 0) {
            b.x_mean /= static_cast<double>(b.count);
            b.y_mean /= static_cast<double>(b.count);
        }
    }
    return out;
}

}  // namespace corematch::criteria
