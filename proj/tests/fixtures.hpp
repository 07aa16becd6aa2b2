// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "corematch/engine.hpp"
#include "corematch/model.hpp"

namespace fixtures {

using namespace corematch;

inline model::ModelConfig toy_config(std::size_t d_model = 32, std::size_t d_ffn = 128, std::size_t layers = 4,
                                     std::size_t heads = 4, std::size_t vocab = 256) {
    model::ModelConfig c;
    c.n_layers = layers;
    c.d_model = d_model;
    c.d_ffn = d_ffn;
    c.n_heads = heads;
    c.vocab_size = vocab;
    c.max_seq_len = 256;
    return c;
}

inline model::Weights toy_model(std::uint64_t seed, double mix = 1.0, const model::ModelConfig& c = toy_config()) {
    model::SyntheticSpec s;
    s.seed = seed;
    s.orthogonality_mix = mix;
    return model::init_synthetic(c, s);
}

/// Analysis preset used for the correlation checks: wide FFN, orthogonal weights.
inline model::Weights analysis_model(std::uint64_t seed) { return toy_model(seed, 1.0, toy_config(32, 512, 4, 4)); }

inline std::vector<model::TokenId> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<model::TokenId> ids(n);
    for (auto& id : ids) {
        id = static_cast<model::TokenId>(rng.below(vocab));
    }
    return ids;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("corematch_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
