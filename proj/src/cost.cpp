// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/cost.hpp"

#include <algorithm>
#include <string>

#include "corematch/error.hpp"

namespace corematch::cost {

namespace {

void check_config(const CostModelConfig& c) {
    require(c.n_layers > 0 && c.d_model > 0 && c.d_ffn > 0 && c.vocab_size > 0, ErrorKind::InvalidParam,
            "cost model dimensions must be positive");
}

void check_beta(double beta) {
    require(beta > 0.0 && beta <= 1.0, ErrorKind::InvalidParam, "beta must be in (0, 1]");
}

double ffn_term(const CostModelConfig& c) {
    const double d = static_cast<double>(c.d_model);
    const double m = static_cast<double>(c.d_ffn);
    return (c.gated_ffn ? 6.0 : 4.0) * d * m;
}

// one token through one layer, attending to n tokens
double layer_token_flops(const CostModelConfig& c, double n, double ffn_scale) {
    const double d = static_cast<double>(c.d_model);
    return 8.0 * d * d + 4.0 * n * d + ffn_term(c) * ffn_scale;
}

double head_flops(const CostModelConfig& c) {
    return 2.0 * static_cast<double>(c.d_model) * static_cast<double>(c.vocab_size);
}

double prefill_flops(const CostModelConfig& c, const std::vector<std::size_t>& processed) {
    double total = 0.0;
    for (std::size_t n : processed) {
        const double nd = static_cast<double>(n);
        total += nd * layer_token_flops(c, nd, 1.0);
    }
    return total + head_flops(c);
}

// mean over decode steps; step t attends to cached + t + 1 rows
double decode_flops(const CostModelConfig& c, const std::vector<std::size_t>& cached, double beta,
                    std::size_t n_generated) {
    const std::size_t steps = std::max<std::size_t>(n_generated, 1);
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        double step = head_flops(c);
        for (std::size_t n : cached) {
            step += layer_token_flops(c, static_cast<double>(n + t + 1), beta);
        }
        total += step;
    }
    return total / static_cast<double>(steps);
}

}  // namespace

CostModelConfig CostModelConfig::from_model(const model::ModelConfig& config) {
    CostModelConfig c;
    c.n_layers = config.n_layers;
    c.d_model = config.d_model;
    c.d_ffn = config.d_ffn;
    c.n_heads = config.n_heads;
    c.vocab_size = config.vocab_size;
    c.gated_ffn = false;
    return c;
}

CostModelConfig CostModelConfig::preset(std::string_view name) {
    CostModelConfig c;
    c.gated_ffn = true;
    c.vocab_size = 32000;
    if (name == "llava7b") {
        c.n_layers = 32;
        c.d_model = 4096;
        c.d_ffn = 11008;
        c.n_heads = 32;
    } else if (name == "llava13b") {
        c.n_layers = 40;
        c.d_model = 5120;
        c.d_ffn = 13824;
        c.n_heads = 40;
    } else {
        fail(ErrorKind::InvalidParam, "unknown cost preset '" + std::string(name) + "' (llava7b, llava13b)");
    }
    return c;
}

CostReport cost_from_layers(const CostModelConfig& config, std::size_t n_prompt, const LayerTokens& sparse,
                            double beta, std::size_t n_generated) {
    check_config(config);
    check_beta(beta);
    require(n_prompt > 0, ErrorKind::InvalidParam, "n_prompt must be positive");
    require(sparse.processed.size() == config.n_layers && sparse.cached.size() == config.n_layers,
            ErrorKind::InvalidParam, "per-layer token counts must cover every layer");
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        require(sparse.processed[l] > 0 && sparse.processed[l] <= n_prompt, ErrorKind::InvalidParam,
                "processed tokens must be in [1, n_prompt]");
        require(sparse.cached[l] > 0 && sparse.cached[l] <= n_prompt, ErrorKind::InvalidParam,
                "cached tokens must be in [1, n_prompt]");
    }

    const std::vector<std::size_t> dense(config.n_layers, n_prompt);
    CostReport r;
    r.n_generated = n_generated;
    r.token_counts = sparse.processed;
    r.prefill_flops_dense = prefill_flops(config, dense);
    r.prefill_flops_sparse = prefill_flops(config, sparse.processed);
    r.decode_flops_per_token_dense = decode_flops(config, dense, 1.0, n_generated);
    r.decode_flops_per_token_sparse = decode_flops(config, sparse.cached, beta, n_generated);
    const double gen = static_cast<double>(n_generated);
    r.kv_cache_entries_dense = static_cast<double>(config.n_layers) * (static_cast<double>(n_prompt) + gen);
    for (std::size_t n : sparse.cached) {
        r.kv_cache_entries_sparse += static_cast<double>(n) + gen;
    }
    r.ffn_weight_fraction_resident = beta;
    return r;
}

CostReport flops_model(const CostModelConfig& config, std::size_t n_prompt, std::size_t n_kept,
                       std::size_t prune_layer, double beta, std::size_t n_generated) {
    check_config(config);
    require(n_kept > 0 && n_kept <= n_prompt, ErrorKind::InvalidParam, "n_kept must be in [1, n_prompt]");
    require(prune_layer < config.n_layers, ErrorKind::InvalidParam, "prune_layer must be < n_layers");
    LayerTokens t;
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        const std::size_t n = l < prune_layer ? n_prompt : n_kept;
        t.processed.push_back(n);
        t.cached.push_back(n);
    }
    return cost_from_layers(config, n_prompt, t, beta, n_generated);
}

MemoryReport memory_model(const CostModelConfig& config, std::size_t n_cached_dense, std::size_t n_cached_sparse,
                          double beta, std::size_t bytes_per_value) {
    check_config(config);
    check_beta(beta);
    require(n_cached_dense > 0, ErrorKind::InvalidParam, "n_cached_dense must be positive");
    require(n_cached_sparse <= n_cached_dense, ErrorKind::InvalidParam, "n_cached_sparse must not exceed n_cached_dense");
    require(bytes_per_value > 0, ErrorKind::InvalidParam, "bytes_per_value must be positive");
    const double l = static_cast<double>(config.n_layers);
    const double d = static_cast<double>(config.d_model);
    const double b = static_cast<double>(bytes_per_value);
    MemoryReport r;
    r.kv_bytes_dense = 2.0 * l * static_cast<double>(n_cached_dense) * d * b;
    r.kv_bytes_sparse = 2.0 * l * static_cast<double>(n_cached_sparse) * d * b;
    r.ffn_weight_bytes_dense = l * (config.gated_ffn ? 3.0 : 2.0) * d * static_cast<double>(config.d_ffn) * b;
    r.ffn_weight_bytes_sparse = r.ffn_weight_bytes_dense * beta;
    return r;
}

}  // namespace corematch::cost
