// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "corematch/model.hpp"

namespace corematch::cost {

/// Closed-form FLOPs convention (one multiply-accumulate = 2 FLOPs), per layer
/// per processed token:
///   attention projections   8 d^2
///   scores and weighted sum 4 n d   (n = tokens attended to)
///   FFN                     4 d m, or 6 d m when gated, times beta in decode
/// plus 2 d V for the LM head of every emitted token.
inline constexpr std::string_view kFlopsConvention =
    "MAC=2 FLOPs; per layer per token: 8*d^2 (Q,K,V,O) + 4*n*d (scores+values) + 4*d*m FFN (6*d*m gated, x beta "
    "in decode); + 2*d*V LM head per emitted token";

struct CostModelConfig {
    std::size_t n_layers = 0;
    std::size_t d_model = 0;
    std::size_t d_ffn = 0;
    std::size_t n_heads = 0;
    std::size_t vocab_size = 0;
    bool gated_ffn = false;

    static CostModelConfig from_model(const model::ModelConfig& config);
    /// Named presets: "llava7b", "llava13b". Throws InvalidParam otherwise.
    static CostModelConfig preset(std::string_view name);
};

struct CostReport {
    std::string convention{kFlopsConvention};
    double prefill_flops_dense = 0.0;
    double prefill_flops_sparse = 0.0;
    double decode_flops_per_token_dense = 0.0;
    double decode_flops_per_token_sparse = 0.0;
    double kv_cache_entries_dense = 0.0;   // cached token rows summed over layers
    double kv_cache_entries_sparse = 0.0;
    double ffn_weight_fraction_resident = 1.0;
    std::vector<std::size_t> token_counts;  // prompt tokens processed per layer (sparse path)
    std::size_t n_generated = 0;

    double prefill_ratio() const { return prefill_flops_sparse / prefill_flops_dense; }
    double decode_ratio() const { return decode_flops_per_token_sparse / decode_flops_per_token_dense; }
    double kv_ratio() const { return kv_cache_entries_sparse / kv_cache_entries_dense; }
};

/// Per-layer token accounting for the sparse path.
struct LayerTokens {
    std::vector<std::size_t> processed;  // prompt tokens each layer computes in prefill
    std::vector<std::size_t> cached;     // prompt tokens each layer holds in its KV cache
};

/// General form: the dense path processes and caches every prompt token.
CostReport cost_from_layers(const CostModelConfig& config, std::size_t n_prompt, const LayerTokens& sparse,
                            double beta, std::size_t n_generated);

/// Layers before prune_layer see all n_prompt tokens, the rest n_kept (also
/// what each layer caches). beta scales decode FFN work; 1 means dense FFNs.
CostReport flops_model(const CostModelConfig& config, std::size_t n_prompt, std::size_t n_kept,
                       std::size_t prune_layer, double beta, std::size_t n_generated);

struct MemoryReport {
    double kv_bytes_dense = 0.0;
    double kv_bytes_sparse = 0.0;
    double ffn_weight_bytes_dense = 0.0;
    double ffn_weight_bytes_sparse = 0.0;

    double kv_ratio() const { return kv_bytes_sparse / kv_bytes_dense; }
    double ffn_ratio() const { return ffn_weight_bytes_sparse / ffn_weight_bytes_dense; }
};

/// kv = 2 * L * n * d * bytes; resident FFN weights = beta of the up/down (and gate) matrices.
MemoryReport memory_model(const CostModelConfig& config, std::size_t n_cached_dense, std::size_t n_cached_sparse,
                          double beta, std::size_t bytes_per_value);

}  // namespace corematch::cost
