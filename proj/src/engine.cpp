// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "corematch/error.hpp"

namespace corematch::engine {

using model::LayerTrace;
using numerics::vecmat;

void SparsityParams::validate(const model::ModelConfig& config, std::size_t prompt_length) const {
    require(rho > 0.0 && rho <= 1.0, ErrorKind::InvalidParam, "rho must be in (0, 1]");
    require(beta > 0.0 && beta <= 1.0, ErrorKind::InvalidParam, "beta must be in (0, 1]");
    require(prune_layer < config.n_layers, ErrorKind::InvalidParam,
            "prune_layer " + std::to_string(prune_layer) + " must be < n_layers " + std::to_string(config.n_layers));
    if (prunable_span) {
        require(prunable_span->begin <= prunable_span->end, ErrorKind::InvalidParam,
                "prunable span start must not exceed its end");
        require(prunable_span->end <= prompt_length, ErrorKind::InvalidParam,
                "prunable span [" + std::to_string(prunable_span->begin) + ", " +
                    std::to_string(prunable_span->end) + ") exceeds prompt length " + std::to_string(prompt_length));
    }
}

SparsityParams dense_params(std::size_t n_layers) {
    SparsityParams p;
    p.rho = 1.0;
    p.beta = 1.0;
    p.prune_layer = n_layers > 0 ? n_layers - 1 : 0;
    p.enable_token_pruning = false;
    p.enable_neuron_sparsity = false;
    return p;
}

namespace {

void add_into(std::span<double> dst, const Vector& src) {
    for (std::size_t j = 0; j < src.size(); ++j) {
        dst[j] += src[j];
    }
}

void add_positions(Matrix& h, const std::vector<std::size_t>& positions, const model::ModelConfig& cfg) {
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const Vector pe = model::positional_encoding(positions[i], cfg.d_model);
        auto row = h.row(i);
        for (std::size_t j = 0; j < cfg.d_model; ++j) {
            row[j] += cfg.positional_scale * pe[j];
        }
    }
}

// Attention and FFN over the current rows; h is updated in place and the
// layer's cache receives every row's K/V.
LayerTrace run_layer(const model::Weights& weights, std::size_t l, Matrix& h, const std::vector<std::size_t>& positions,
                     LayerCache& cache) {
    const model::ModelConfig& cfg = weights.config;
    const model::LayerWeights& lw = weights.layers[l];
    const std::size_t t = h.rows();
    LayerTrace tr;
    tr.positions = positions;
    tr.attn_input = h;
    Matrix queries(t, cfg.d_model);
    Matrix keys(t, cfg.d_model);
    tr.values = Matrix(t, cfg.d_model);
    for (std::size_t i = 0; i < t; ++i) {
        const Vector a = model::normed(h.row(i), lw.attn_norm_gain, lw.attn_norm_bias);
        const Vector q = vecmat(a, lw.wq);
        const Vector k = vecmat(a, lw.wk);
        const Vector v = vecmat(a, lw.wv);
        std::copy(q.begin(), q.end(), queries.row(i).begin());
        std::copy(k.begin(), k.end(), keys.row(i).begin());
        std::copy(v.begin(), v.end(), tr.values.row(i).begin());
    }
    tr.alpha.assign(cfg.n_heads, Matrix(t, t));
    tr.attn_out = Matrix(t, cfg.d_model);
    tr.ffn_input = Matrix(t, cfg.d_model);
    tr.activations = Matrix(t, cfg.d_ffn);
    tr.ffn_output = Matrix(t, cfg.d_model);
    std::vector<Vector> alpha;
    for (std::size_t i = 0; i < t; ++i) {
        const Vector o = model::attention_row(queries.row(i), keys, tr.values, i + 1, cfg.n_heads, &alpha);
        for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
            std::copy(alpha[hd].begin(), alpha[hd].end(), tr.alpha[hd].row(i).begin());
        }
        std::copy(o.begin(), o.end(), tr.attn_out.row(i).begin());
        auto hr = h.row(i);
        add_into(hr, vecmat(o, lw.wo));
        const Vector x = model::normed(hr, lw.ffn_norm_gain, lw.ffn_norm_bias);
        Vector act;
        const Vector y = model::ffn_row(lw, x, cfg.activation, &act);
        std::copy(x.begin(), x.end(), tr.ffn_input.row(i).begin());
        std::copy(act.begin(), act.end(), tr.activations.row(i).begin());
        std::copy(y.begin(), y.end(), tr.ffn_output.row(i).begin());
        add_into(hr, y);
    }
    numerics::require_finite(h.data(), "prefill hidden state");
    cache.positions = positions;
    cache.keys = std::move(keys);
    cache.values = tr.values;
    return tr;
}

template <typename T>
std::vector<T> keep_entries(const std::vector<T>& v, const std::vector<bool>& keep) {
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (keep[i]) {
            out.push_back(v[i]);
        }
    }
    return out;
}

Matrix keep_rows(const Matrix& m, const std::vector<bool>& keep) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) {
            idx.push_back(i);
        }
    }
    return m.select_rows(idx);
}

void shrink_cache(LayerCache& cache, const std::vector<bool>& keep) {
    cache.keys = keep_rows(cache.keys, keep);
    cache.values = keep_rows(cache.values, keep);
    cache.positions = keep_entries(cache.positions, keep);
}

}  // namespace

PrefillResult prefill(const Weights& weights, const Matrix& prompt_embeddings, const SparsityParams& params,
                      const LayerHook& hook) {
    const model::ModelConfig& cfg = weights.config;
    const std::size_t t = prompt_embeddings.rows();
    require(t >= 1, ErrorKind::EmptySet, "empty prompt");
    require(prompt_embeddings.cols() == cfg.d_model, ErrorKind::ShapeError, "prompt width must equal d_model");
    require(t <= cfg.max_seq_len, ErrorKind::SequenceOverflow,
            "prompt length " + std::to_string(t) + " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    params.validate(cfg, t);

    const TokenSpan span = params.prunable_span.value_or(TokenSpan{0, t - 1});

    PrefillResult result;
    PrefillState& st = result.state;
    st.prompt_length = t;
    st.next_position = t;
    st.caches.resize(cfg.n_layers);
    st.prunable_total = span.size();

    std::vector<std::size_t> positions(t);
    for (std::size_t i = 0; i < t; ++i) {
        positions[i] = i;
    }
    Matrix h = prompt_embeddings;
    add_positions(h, positions, cfg);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        st.processed_tokens.push_back(h.rows());
        LayerTrace tr = run_layer(weights, l, h, positions, st.caches[l]);
        sparsity::SentenceCoreResult core = sparsity::sentence_core_neurons(tr.activations, params.rho, params.beta, l);
        st.frequency.push_back(std::move(core.frequency));
        st.core_sets.push_back(core.core);

        std::vector<bool> keep;
        if (l == params.prune_layer && params.enable_token_pruning) {
            std::vector<sparsity::IndexSet> activated;
            activated.reserve(h.rows());
            for (std::size_t i = 0; i < h.rows(); ++i) {
                activated.push_back(sparsity::activated_set(tr.activations.row(i)));
            }
            const std::vector<std::size_t> counts = sparsity::intersection_counts(activated, core.core);
            std::vector<std::size_t> protected_rows;
            for (std::size_t i = 0; i < positions.size(); ++i) {
                if (!span.contains(positions[i]) || i + 1 == positions.size()) {
                    protected_rows.push_back(i);
                }
            }
            try {
                sparsity::CoreTokenSelection sel = sparsity::select_core_tokens(counts, protected_rows, l);
                if (sel.degenerate) {
                    st.pruning_degenerate = true;
                    st.pruning_note = "all prunable intersection counts equal; no tokens pruned";
                }
                keep.assign(h.rows(), false);
                for (std::size_t k : sel.kept) {
                    keep[k] = true;
                }
                st.selection = std::move(sel);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::TooFewPoints) {
                    throw;
                }
                st.pruning_degenerate = true;
                st.pruning_note = "fewer than three prunable tokens; no tokens pruned";
            }
        }

        if (hook) {
            hook(l, positions, keep, h);
        }
        if (!keep.empty()) {
            h = keep_rows(h, keep);
            shrink_cache(st.caches[l], keep);
            if (!params.retain_early_kv) {
                for (std::size_t e = 0; e < l; ++e) {
                    shrink_cache(st.caches[e], keep);
                }
            }
            positions = keep_entries(positions, keep);
        }
        result.trace.layers.push_back(std::move(tr));
    }

    st.kept_prunable = 0;
    for (std::size_t p : positions) {
        if (span.contains(p) && p + 1 != t) {
            ++st.kept_prunable;
        }
    }
    // the final token is protected even inside the span
    if (span.contains(t - 1)) {
        st.prunable_total -= 1;
    }
    result.logits = model::logits_row(weights, h.row(h.rows() - 1));
    return result;
}

DecodeResult decode_step(PrefillState& state, const Weights& weights, const SparsityParams& params,
                         const Vector& last_logits) {
    const model::ModelConfig& cfg = weights.config;
    require(state.caches.size() == cfg.n_layers && state.core_sets.size() == cfg.n_layers, ErrorKind::ShapeError,
            "prefill state does not match the model");
    require(last_logits.size() == cfg.vocab_size, ErrorKind::ShapeError, "logits width must equal vocab_size");
    const std::size_t pos = state.next_position;
    require(pos < cfg.max_seq_len, ErrorKind::SequenceOverflow,
            "position " + std::to_string(pos) + " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));

    DecodeResult out;
    out.token = model::argmax(last_logits);
    Vector h(weights.embedding.row(static_cast<std::size_t>(out.token)).begin(),
             weights.embedding.row(static_cast<std::size_t>(out.token)).end());
    const Vector pe = model::positional_encoding(pos, cfg.d_model);
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
        h[j] += cfg.positional_scale * pe[j];
    }

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const model::LayerWeights& lw = weights.layers[l];
        LayerCache& cache = state.caches[l];
        const Vector a = model::normed(h, lw.attn_norm_gain, lw.attn_norm_bias);
        const Vector q = vecmat(a, lw.wq);
        cache.keys.append_row(vecmat(a, lw.wk));
        cache.values.append_row(vecmat(a, lw.wv));
        cache.positions.push_back(pos);
        const Vector o = model::attention_row(q, cache.keys, cache.values, cache.keys.rows(), cfg.n_heads);
        add_into(h, vecmat(o, lw.wo));
        const Vector x = model::normed(h, lw.ffn_norm_gain, lw.ffn_norm_bias);
        const std::vector<std::size_t>* subset = params.enable_neuron_sparsity ? &state.core_sets[l].neuron_ids : nullptr;
        add_into(h, model::ffn_row(lw, x, cfg.activation, nullptr, subset));
    }
    numerics::require_finite(h, "decode hidden state");
    out.logits = model::logits_row(weights, h);
    state.next_position = pos + 1;
    state.generated += 1;
    return out;
}

cost::CostReport engine_cost(const Weights& weights, const PrefillState& state, const SparsityParams& params,
                             std::size_t n_generated) {
    const model::ModelConfig& cfg = weights.config;
    cost::LayerTokens t;
    t.processed = state.processed_tokens;
    for (const LayerCache& c : state.caches) {
        t.cached.push_back(c.keys.rows() - state.generated);
    }
    double beta = 1.0;
    if (params.enable_neuron_sparsity && !state.core_sets.empty()) {
        beta = static_cast<double>(state.core_sets.front().neuron_ids.size()) / static_cast<double>(cfg.d_ffn);
    }
    return cost::cost_from_layers(cost::CostModelConfig::from_model(cfg), state.prompt_length, t, beta, n_generated);
}

GenerationResult generate(const Weights& weights, const Matrix& prompt_embeddings, const SparsityParams& params,
                          std::size_t max_new_tokens, ActivationTrace* trace_out) {
    PrefillResult pre = prefill(weights, prompt_embeddings, params);
    GenerationResult out;
    out.state = std::move(pre.state);
    if (trace_out) {
        *trace_out = std::move(pre.trace);
    }
    Vector logits = std::move(pre.logits);
    for (std::size_t step = 0; step < max_new_tokens; ++step) {
        out.step_logits.push_back(logits);
        if (step + 1 == max_new_tokens) {
            // the last token needs no forward pass of its own
            out.tokens.push_back(model::argmax(logits));
            break;
        }
        DecodeResult d = decode_step(out.state, weights, params, logits);
        out.tokens.push_back(d.token);
        logits = std::move(d.logits);
    }
    out.cost = engine_cost(weights, out.state, params, out.tokens.size());
    return out;
}

PromptSpec make_prompt(const Weights& weights, const PromptRecipe& recipe) {
    const model::ModelConfig& cfg = weights.config;
    require(recipe.query_alignment >= 0.0 && recipe.query_alignment <= 1.0, ErrorKind::InvalidParam,
            "query alignment must be in [0, 1]");
    Rng rng(recipe.seed);
    std::vector<TokenId> system(recipe.system_tokens);
    for (TokenId& id : system) {
        id = static_cast<TokenId>(rng.below(cfg.vocab_size));
    }
    std::vector<TokenId> text = recipe.text_ids;
    if (text.empty()) {
        text.resize(recipe.text_tokens);
        for (TokenId& id : text) {
            id = static_cast<TokenId>(rng.below(cfg.vocab_size));
        }
    }
    Vector centre(cfg.d_model);
    for (double& c : centre) {
        c = rng.normal();
    }
    const double n = numerics::norm(centre);
    for (double& c : centre) {
        c *= std::sqrt(static_cast<double>(cfg.d_model)) / n;
    }
    const Matrix patches = model::graded_patches(centre, recipe.image_tokens, rng);

    PromptSpec p;
    p.embeddings = model::embed_tokens(weights, system);
    for (std::size_t i = 0; i < patches.rows(); ++i) {
        p.embeddings.append_row(patches.row(i));
    }
    const Matrix tail = model::embed_tokens(weights, text);
    for (std::size_t i = 0; i < tail.rows(); ++i) {
        p.embeddings.append_row(tail.row(i));
    }
    if (recipe.query_alignment > 0.0) {
        auto last = p.embeddings.row(p.embeddings.rows() - 1);
        const double a = recipe.query_alignment;
        const double b = std::sqrt(1.0 - a * a);
        for (std::size_t j = 0; j < cfg.d_model; ++j) {
            last[j] = a * centre[j] + b * last[j];
        }
    }
    p.prunable_span = TokenSpan{system.size(), system.size() + recipe.image_tokens};
    return p;
}

TokenCountStats token_count_stats(const Weights& weights, const std::vector<PromptSpec>& prompts,
                                  const SparsityParams& params) {
    require(!prompts.empty(), ErrorKind::EmptySet, "token_count_stats needs at least one prompt");
    TokenCountStats s;
    double kept_sum = 0.0;
    std::size_t degenerate = 0;
    for (const PromptSpec& p : prompts) {
        SparsityParams local = params;
        local.prunable_span = p.prunable_span;
        const PrefillResult r = prefill(weights, p.embeddings, local);
        s.kept.push_back(r.state.kept_prunable);
        s.prunable.push_back(r.state.prunable_total);
        s.degenerate.push_back(r.state.pruning_degenerate);
        kept_sum += static_cast<double>(r.state.kept_prunable);
        degenerate += r.state.pruning_degenerate ? 1 : 0;
    }
    s.mean_kept = kept_sum / static_cast<double>(prompts.size());
    s.degenerate_rate = static_cast<double>(degenerate) / static_cast<double>(prompts.size());
    return s;
}

}  // namespace corematch::engine
