// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "corematch/cost.hpp"
#include "corematch/model.hpp"
#include "corematch/sparsity.hpp"

namespace corematch::engine {

using model::ActivationTrace;
using model::Matrix;
using model::TokenId;
using model::Vector;
using model::Weights;

/// Half-open range [begin, end) of prompt positions.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool contains(std::size_t p) const { return p >= begin && p < end; }
};

struct SparsityParams {
    double rho = 0.2;
    double beta = 0.4;
    std::size_t prune_layer = 2;
    /// Tokens eligible for pruning (image tokens). Unset: every token but the last.
    std::optional<TokenSpan> prunable_span;
    bool enable_token_pruning = true;
    bool enable_neuron_sparsity = true;
    /// Keep dropped tokens in the KV caches of layers before prune_layer.
    bool retain_early_kv = true;

    /// Throws InvalidParam.
    void validate(const model::ModelConfig& config, std::size_t prompt_length) const;
};

/// Parameters with every reduction switched off; the engine is then the dense model.
SparsityParams dense_params(std::size_t n_layers);

struct LayerCache {
    std::vector<std::size_t> positions;
    Matrix keys;
    Matrix values;
};

struct PrefillState {
    std::vector<sparsity::SentenceCoreSet> core_sets;      // one per layer
    std::vector<sparsity::FrequencyTable> frequency;       // one per layer
    std::optional<sparsity::CoreTokenSelection> selection;  // at prune_layer, when pruning ran
    /// Pruning was requested but the knee was unusable; every token survived.
    bool pruning_degenerate = false;
    std::string pruning_note;
    std::vector<LayerCache> caches;
    std::vector<std::size_t> processed_tokens;  // per layer, prompt tokens that went through it
    std::size_t prompt_length = 0;
    std::size_t next_position = 0;
    std::size_t generated = 0;

    /// Prompt positions inside the prunable span that survived pruning.
    std::size_t kept_prunable = 0;
    std::size_t prunable_total = 0;
};

/// Called after each prefill layer with the rows about to continue. `kept` is
/// non-empty only at the pruning layer; rows with kept[i] == false are dropped
/// right after the call.
using LayerHook = std::function<void(std::size_t layer, const std::vector<std::size_t>& positions,
                                     const std::vector<bool>& kept, Matrix& hidden)>;

struct PrefillResult {
    PrefillState state;
    Vector logits;  // for the token following the prompt
    ActivationTrace trace;
};

/// Pre-filling: dense layers record per-layer core neurons; at prune_layer the
/// knee over |Gamma ∩ core| selects core tokens, and only those continue.
PrefillResult prefill(const Weights& weights, const Matrix& prompt_embeddings, const SparsityParams& params,
                      const LayerHook& hook = {});

struct DecodeResult {
    TokenId token = 0;
    Vector logits;  // for the token after `token`
};

/// Greedy pick from last_logits, then one decode pass of that token. FFNs
/// use only each layer's prefill-time core neurons when neuron sparsity is on.
DecodeResult decode_step(PrefillState& state, const Weights& weights, const SparsityParams& params,
                         const Vector& last_logits);

struct GenerationResult {
    std::vector<TokenId> tokens;
    std::vector<Vector> step_logits;  // logits each token was picked from
    cost::CostReport cost;
    PrefillState state;
};

GenerationResult generate(const Weights& weights, const Matrix& prompt_embeddings, const SparsityParams& params,
                          std::size_t max_new_tokens, ActivationTrace* trace_out = nullptr);

/// Cost of what the engine actually ran, against the dense equivalent.
cost::CostReport engine_cost(const Weights& weights, const PrefillState& state, const SparsityParams& params,
                             std::size_t n_generated);

struct PromptSpec {
    Matrix embeddings;
    std::optional<TokenSpan> prunable_span;
};

struct TokenCountStats {
    std::vector<std::size_t> kept;       // kept prunable tokens per prompt
    std::vector<std::size_t> prunable;   // prunable tokens per prompt
    std::vector<bool> degenerate;
    double mean_kept = 0.0;
    double degenerate_rate = 0.0;
};

/// Synthetic multimodal prompt: system ids, graded image patches, text ids.
/// The image patches form the prunable span.
struct PromptRecipe {
    std::size_t system_tokens = 2;
    std::size_t image_tokens = 48;
    std::size_t text_tokens = 8;
    /// Replaces the random trailing text ids when non-empty.
    std::vector<TokenId> text_ids;
    std::uint64_t seed = 1;
    /// Blends the final token toward the image centre direction:
    /// a * centre + sqrt(1 - a^2) * embedding. 0 leaves it untouched.
    double query_alignment = 0.0;
};

PromptSpec make_prompt(const Weights& weights, const PromptRecipe& recipe);

/// Runs prefill per prompt and reports how many prunable tokens survive.
TokenCountStats token_count_stats(const Weights& weights, const std::vector<PromptSpec>& prompts,
                                  const SparsityParams& params);

}  // namespace corematch::engine
