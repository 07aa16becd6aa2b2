// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "corematch/error.hpp"
#include "corematch/model.hpp"
#include "fixtures.hpp"

using namespace corematch;
using namespace corematch::model;

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

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c = fixtures::toy_config();
    CHECK_NOTHROW(c.validate());
    c.n_heads = 5;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidParam);
    c = fixtures::toy_config();
    c.d_ffn = 16;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidParam);
    c = fixtures::toy_config();
    c.n_layers = 0;
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::InvalidParam);
}

TEST_CASE("orthogonality_deviation examples") {
    Rng rng(4);
    const Matrix q = random_orthonormal(8, 8, rng);
    CHECK(orthogonality_deviation(numerics::scale(q, 3.0)) <= 1e-12);
    CHECK(orthogonality_deviation(Matrix::from_rows({{1, 0}, {1, 0}}), GramSide::Rows) == doctest::Approx(1.0));
    CHECK(orthogonality_deviation(Matrix::identity(5)) == 0.0);
    CHECK(kind_of([] { orthogonality_deviation(Matrix(3, 3)); }) == ErrorKind::DegenerateMatrix);
}

TEST_CASE("synthetic weights at mix 1 are scaled-orthogonal") {
    const Weights w = fixtures::toy_model(7, 1.0);
    for (const auto& lw : w.layers) {
        CHECK(orthogonality_deviation(lw.wv) <= 1e-10);
        CHECK(orthogonality_deviation(lw.wo) <= 1e-10);
        CHECK(orthogonality_deviation(lw.wd) <= 1e-10);
        CHECK(orthogonality_deviation(lw.wu) <= 1e-10);
        CHECK(scaled_identity_deviation(numerics::matmul(lw.wq, lw.wk.transposed())) <= 1e-10);
    }
}

TEST_CASE("Gaussian weights break orthogonality") {
    const Weights w = fixtures::toy_model(7, 0.0);
    for (const auto& lw : w.layers) {
        CHECK(orthogonality_deviation(lw.wd) > 0.1);
        // a Gaussian W_q W_k^T can have a non-positive mean diagonal, which is no scaled identity either
        try {
            const double dev = scaled_identity_deviation(numerics::matmul(lw.wq, lw.wk.transposed()));
            CHECK(dev > 0.1);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::DegenerateMatrix);
        }
    }
}

TEST_CASE("init_synthetic is deterministic and validates its spec") {
    CHECK(fixtures::toy_model(3, 0.5) == fixtures::toy_model(3, 0.5));
    CHECK_FALSE(fixtures::toy_model(3, 0.5) == fixtures::toy_model(4, 0.5));
    SyntheticSpec s;
    s.orthogonality_mix = 1.5;
    CHECK(kind_of([&] { init_synthetic(fixtures::toy_config(), s); }) == ErrorKind::InvalidParam);
    s.orthogonality_mix = 1.0;
    s.scale = 0.0;
    CHECK(kind_of([&] { init_synthetic(fixtures::toy_config(), s); }) == ErrorKind::InvalidParam);
}

TEST_CASE("single-token forward: alpha is 1 and O equals V") {
    const Weights w = fixtures::toy_model(1);
    const std::vector<TokenId> ids{42};
    const ForwardResult r = forward_dense(w, ids);
    for (const LayerTrace& lt : r.trace.layers) {
        for (const Matrix& a : lt.alpha) {
            CHECK(a(0, 0) == 1.0);
        }
        for (std::size_t j = 0; j < w.config.d_model; ++j) {
            CHECK(lt.attn_out(0, j) == lt.values(0, j));
        }
    }
}

TEST_CASE("forward_dense is causal, deterministic and self-consistent") {
    const Weights w = fixtures::toy_model(2);
    Rng rng(10);
    auto ids = fixtures::random_ids(20, w.config.vocab_size, rng);
    const ForwardResult a = forward_dense(w, ids);
    const ForwardResult b = forward_dense(w, ids);
    CHECK(a.logits == b.logits);
    for (std::size_t l = 0; l < a.trace.layers.size(); ++l) {
        CHECK(a.trace.layers[l].activations == b.trace.layers[l].activations);
        CHECK(a.trace.layers[l].alpha == b.trace.layers[l].alpha);
    }

    // permute the tokens after t = 9
    auto permuted = ids;
    std::reverse(permuted.begin() + 10, permuted.end());
    const ForwardResult p = forward_dense(w, permuted);
    for (std::size_t t = 0; t < 10; ++t) {
        for (std::size_t v = 0; v < w.config.vocab_size; ++v) {
            CHECK(p.logits(t, v) == a.logits(t, v));
        }
    }

    for (const LayerTrace& lt : a.trace.layers) {
        for (const Matrix& al : lt.alpha) {
            for (std::size_t q = 0; q < lt.tokens(); ++q) {
                double s = 0.0;
                for (std::size_t k = 0; k < lt.tokens(); ++k) {
                    s += al(q, k);
                    if (k > q) {
                        CHECK(al(q, k) == 0.0);
                    }
                }
                CHECK(std::abs(s - 1.0) <= 1e-9);
            }
        }
    }

    for (std::size_t l = 0; l < a.trace.layers.size(); ++l) {
        const LayerTrace& lt = a.trace.layers[l];
        const Matrix y = numerics::matmul(lt.activations, w.layers[l].wd);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) {
                CHECK(std::abs(y(i, j) - lt.ffn_output(i, j)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("forward errors") {
    const Weights w = fixtures::toy_model(2);
    const std::vector<TokenId> bad{1, 256};
    CHECK(kind_of([&] { forward_dense(w, bad); }) == ErrorKind::VocabError);
    const std::vector<TokenId> neg{-1};
    CHECK(kind_of([&] { forward_dense(w, neg); }) == ErrorKind::VocabError);
    const std::vector<TokenId> too_long(w.config.max_seq_len + 1, 3);
    CHECK(kind_of([&] { forward_dense(w, too_long); }) == ErrorKind::SequenceOverflow);
}

TEST_CASE("argmax ties go to the lower id") {
    CHECK(argmax(Vector{1.0, 3.0, 3.0, 2.0}) == 1);
}

TEST_CASE("golden logits for the toy config") {
    const Weights w = fixtures::toy_model(7);
    const std::vector<TokenId> ids{5, 17, 200, 3, 99, 42, 7, 128};
    const ForwardResult r = forward_dense(w, ids);
    const auto last = r.logits.row(r.logits.rows() - 1);

    const char* dir = std::getenv("CM_GOLDEN_DIR");
    REQUIRE(dir != nullptr);
    const std::string path = std::string(dir) + "/forward_logits.json";
    if (std::getenv("CM_UPDATE_GOLDEN")) {
        nlohmann::json j;
        j["ids"] = ids;
        j["last_logits"] = std::vector<double>(last.begin(), last.end());
        std::ofstream(path) << j.dump(1) << '\n';
    }
    std::ifstream f(path);
    REQUIRE(static_cast<bool>(f));
    const nlohmann::json j = nlohmann::json::parse(f);
    const auto golden = j["last_logits"].get<std::vector<double>>();
    REQUIRE(golden.size() == last.size());
    for (std::size_t v = 0; v < golden.size(); ++v) {
        CHECK(std::abs(golden[v] - last[v]) <= 1e-12);
    }
}
