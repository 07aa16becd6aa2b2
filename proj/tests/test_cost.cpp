// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdint>

#include "corematch/cost.hpp"
#include "corematch/error.hpp"

using namespace corematch;
using namespace corematch::cost;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::IoError;
}

// Integer re-derivation of the counting convention, layer by layer.
std::uint64_t prefill_oracle(const CostModelConfig& c, std::uint64_t n_prompt, std::uint64_t n_kept,
                             std::size_t prune_layer) {
    const std::uint64_t d = c.d_model, m = c.d_ffn, ffn = (c.gated_ffn ? 6 : 4) * d * m;
    std::uint64_t total = 2 * d * c.vocab_size;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::uint64_t n = l < prune_layer ? n_prompt : n_kept;
        total += n * (8 * d * d + 4 * n * d + ffn);
    }
    return total;
}

CostModelConfig small() {
    CostModelConfig c;
    c.n_layers = 3;
    c.d_model = 8;
    c.d_ffn = 32;
    c.n_heads = 2;
    c.vocab_size = 100;
    return c;
}

}  // namespace

TEST_CASE("prefill FLOPs agree with the integer oracle") {
    for (const auto* name : {"llava7b", "llava13b"}) {
        const CostModelConfig c = CostModelConfig::preset(name);
        for (std::size_t kept : {1u, 64u, 128u, 675u}) {
            const CostReport r = flops_model(c, 675, kept, 2, 0.4, 1);
            CHECK(r.prefill_flops_dense == static_cast<double>(prefill_oracle(c, 675, 675, 2)));
            CHECK(r.prefill_flops_sparse == static_cast<double>(prefill_oracle(c, 675, kept, 2)));
        }
    }
    const CostReport s = flops_model(small(), 10, 4, 1, 1.0, 1);
    CHECK(s.prefill_flops_sparse == static_cast<double>(prefill_oracle(small(), 10, 4, 1)));
}

TEST_CASE("preset magnitudes sit near the published dense costs") {
    const CostReport r7 = flops_model(CostModelConfig::preset("llava7b"), 675, 128, 2, 0.4, 1);
    CHECK(r7.prefill_flops_dense / 1e12 == doctest::Approx(10.1).epsilon(0.25));
    CHECK(r7.prefill_ratio() == doctest::Approx(0.21).epsilon(0.06 / 0.21));
    const CostReport r13 = flops_model(CostModelConfig::preset("llava13b"), 675, 128, 2, 0.4, 1);
    CHECK(r13.prefill_flops_dense / 1e12 == doctest::Approx(19.6).epsilon(0.25));
}

TEST_CASE("decode cost per token") {
    const CostModelConfig c = CostModelConfig::preset("llava7b");
    const CostReport r = flops_model(c, 675, 675, 2, 0.4, 1);
    const double d = 4096, m = 11008, n = 676;
    const double dense = 32 * (8 * d * d + 4 * n * d + 6 * d * m) + 2 * d * 32000;
    const double sparse = 32 * (8 * d * d + 4 * n * d + 0.4 * 6 * d * m) + 2 * d * 32000;
    CHECK(r.decode_flops_per_token_dense == doctest::Approx(dense).epsilon(1e-12));
    CHECK(r.decode_flops_per_token_sparse == doctest::Approx(sparse).epsilon(1e-12));
    CHECK(r.decode_ratio() == doctest::Approx(0.575).epsilon(0.15 / 0.575));

    // averaged over steps: the cache grows by one row per step
    const CostReport two = flops_model(small(), 10, 10, 0, 1.0, 2);
    const double step1 = 3 * (8 * 64 + 4 * 11 * 8 + 4 * 8 * 32) + 2 * 8 * 100;
    const double step2 = 3 * (8 * 64 + 4 * 12 * 8 + 4 * 8 * 32) + 2 * 8 * 100;
    CHECK(two.decode_flops_per_token_dense == (step1 + step2) / 2);
}

TEST_CASE("identity and monotonicity") {
    const CostModelConfig c = CostModelConfig::preset("llava7b");
    const CostReport same = flops_model(c, 300, 300, 0, 1.0, 5);
    CHECK(same.prefill_ratio() == 1.0);
    CHECK(same.decode_ratio() == 1.0);
    CHECK(same.kv_ratio() == 1.0);

    double prev = 0.0;
    for (std::size_t kept = 10; kept <= 300; kept += 10) {
        const double r = flops_model(c, 300, kept, 2, 0.4, 1).prefill_ratio();
        CHECK(r > prev);
        prev = r;
    }
    prev = 0.0;
    for (double beta : {0.1, 0.2, 0.4, 0.8, 1.0}) {
        const double r = flops_model(c, 300, 100, 2, beta, 1).decode_ratio();
        CHECK(r > prev);
        CHECK(r <= 1.0);
        prev = r;
    }
}

TEST_CASE("cost_from_layers accounts per layer") {
    LayerTokens t{{10, 10, 4}, {10, 4, 4}};
    const CostReport r = cost_from_layers(small(), 10, t, 0.5, 3);
    CHECK(r.token_counts == std::vector<std::size_t>{10, 10, 4});
    CHECK(r.kv_cache_entries_dense == 3 * 13);
    CHECK(r.kv_cache_entries_sparse == 13 + 7 + 7);
    CHECK(r.ffn_weight_fraction_resident == 0.5);
    CHECK(r.n_generated == 3);
    CHECK(kind_of([&] { cost_from_layers(small(), 10, LayerTokens{{10, 10}, {10, 10}}, 0.5, 1); }) ==
          ErrorKind::InvalidParam);
    CHECK(kind_of([&] { cost_from_layers(small(), 10, LayerTokens{{11, 10, 4}, {10, 4, 4}}, 0.5, 1); }) ==
          ErrorKind::InvalidParam);
}

TEST_CASE("memory model examples") {
    const CostModelConfig c = CostModelConfig::preset("llava7b");
    const MemoryReport kv = memory_model(c, 576, 64, 0.4, 2);
    CHECK(kv.kv_ratio() == doctest::Approx(64.0 / 576.0));
    CHECK(kv.ffn_ratio() == doctest::Approx(0.4));
    CHECK(kv.kv_bytes_dense == 2.0 * 32 * 576 * 4096 * 2);
    CHECK(kv.ffn_weight_bytes_dense == 32.0 * 3 * 4096 * 11008 * 2);
    const MemoryReport id = memory_model(c, 100, 100, 1.0, 4);
    CHECK(id.kv_ratio() == 1.0);
    CHECK(id.ffn_ratio() == 1.0);
}

TEST_CASE("invalid parameters") {
    const CostModelConfig c = small();
    CHECK(kind_of([] { CostModelConfig::preset("gpt5"); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { flops_model(c, 10, 0, 1, 0.4, 1); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { flops_model(c, 10, 11, 1, 0.4, 1); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { flops_model(c, 10, 5, 3, 0.4, 1); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { flops_model(c, 10, 5, 1, 0.0, 1); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { flops_model(c, 10, 5, 1, 1.5, 1); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { memory_model(c, 10, 11, 0.4, 2); }) == ErrorKind::InvalidParam);
    CHECK(kind_of([&] { memory_model(c, 10, 5, 0.4, 0); }) == ErrorKind::InvalidParam);
    CostModelConfig zero = c;
    zero.d_model = 0;
    CHECK(kind_of([&] { flops_model(zero, 10, 5, 1, 0.4, 1); }) == ErrorKind::InvalidParam);
}
