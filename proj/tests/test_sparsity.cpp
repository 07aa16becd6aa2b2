// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>
#include <sstream>

#include "corematch/error.hpp"
#include "corematch/sparsity.hpp"
#include "oracles.hpp"

using namespace corematch;
using namespace corematch::sparsity;
using numerics::Vector;

namespace {

IndexSet ids(std::initializer_list<std::size_t> v) { return IndexSet(v); }

}  // namespace

TEST_CASE("activated_set and token_core_neurons examples") {
    const Vector a{0.5, -0.2, 0.9, 0.0, 0.1};
    CHECK(activated_set(a) == ids({0, 2, 4}));
    CHECK(token_core_neurons(a, 0.4).neuron_ids == ids({0, 2}));
    CHECK(token_core_neurons(a, 1.0).neuron_ids == activated_set(a));

    const TokenCoreSet dead = token_core_neurons(Vector{-1.0, -0.5, 0.0}, 0.5);
    CHECK(dead.neuron_ids.empty());
    CHECK(dead.dead);
    CHECK(activated_set(Vector{-1.0, 0.0}).empty());
}

TEST_CASE("ties at the token cutoff go to the lower index") {
    const Vector a{0.9, 0.9, 0.1};
    CHECK(token_core_neurons(a, 0.34).neuron_ids == ids({0, 1}));
    CHECK(token_core_neurons(a, 0.3).neuron_ids == ids({0}));
}

TEST_CASE("sentence core examples and the mass tie-break") {
    // token sets {0,2} and {2,4} with rho = 1
    const Matrix a = Matrix::from_rows({{0.5, 0, 0.9, 0, 0}, {0, 0, 0.8, 0, 0.7}});
    const SentenceCoreResult r = sentence_core_neurons(a, 1.0, 0.2);
    CHECK(r.frequency.counts == std::vector<std::size_t>{1, 0, 2, 0, 1});
    CHECK(r.core.neuron_ids == ids({2}));
    // neurons 0 and 4 tie on count; 4 carries more activation mass
    CHECK(sentence_core_neurons(a, 1.0, 0.4).core.neuron_ids == ids({2, 4}));

    const Matrix one = Matrix::from_rows({{0.3, -1, 0.7, 0.2, -0.1, 0.0}});
    const IndexSet core = sentence_core_neurons(one, 0.5, 0.5).core.neuron_ids;
    const IndexSet support = activated_set(one.row(0));
    for (std::size_t n : core) {
        CHECK(std::find(support.begin(), support.end(), n) != support.end());
    }
}

TEST_CASE("intersection counts examples") {
    SentenceCoreSet core;
    core.neuron_ids = ids({2, 3, 5});
    CHECK(intersection_counts({ids({1, 2, 3})}, core) == std::vector<std::size_t>{2});
    CHECK(intersection_counts({ids({2, 5})}, core) == std::vector<std::size_t>{2});
    CHECK(intersection_counts({ids({0, 1})}, core) == std::vector<std::size_t>{0});
}

TEST_CASE("select_core_tokens examples") {
    const std::vector<std::size_t> counts{10, 9, 8, 2, 1};
    const CoreTokenSelection s = select_core_tokens(counts, {});
    CHECK(s.threshold == 8);
    CHECK(s.kept == ids({0, 1, 2}));
    CHECK_FALSE(s.degenerate);

    const std::vector<std::size_t> flat{4, 4, 4, 4};
    const CoreTokenSelection f = select_core_tokens(flat, {});
    CHECK(f.degenerate);
    CHECK(f.kept == ids({0, 1, 2, 3}));

    // protected token 5 has count 0 and is excluded from the knee geometry
    const std::vector<std::size_t> with_text{10, 9, 8, 2, 1, 0};
    const std::vector<std::size_t> prot{5};
    const CoreTokenSelection p = select_core_tokens(with_text, prot);
    CHECK(p.threshold == 8);
    CHECK(p.kept == ids({0, 1, 2, 5}));
    CHECK(p.protected_tokens == ids({5}));

    const std::vector<std::size_t> few{3, 1, 0};
    const std::vector<std::size_t> prot2{2};
    try {
        select_core_tokens(few, prot2);
        FAIL("expected TooFewPoints");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooFewPoints);
    }
}

TEST_CASE("core_set_stability examples") {
    SentenceCoreSet a, b, c, e1, e2;
    a.neuron_ids = ids({1, 2, 3});
    b.neuron_ids = ids({2, 3, 4});
    c.neuron_ids = ids({7, 8, 9});
    const auto s = core_set_stability({a, c, b, b});
    CHECK(s[0] == doctest::Approx(0.5));
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 1.0);
    CHECK(jaccard(e1.neuron_ids, e2.neuron_ids) == 1.0);
}

TEST_CASE("exhaustive oracle agrees on random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 4 + rng.below(61);
        const std::size_t m = 1 + rng.below(20);
        const bool integer_valued = trial % 2 == 0;  // forces ties
        const Matrix a = oracle::random_activations(m, d, rng.uniform(0.2, 0.8), rng, integer_valued);
        const double rho = rng.uniform(0.05, 1.0);
        const double beta = rng.uniform(0.05, 1.0);

        const SentenceCoreResult r = sentence_core_neurons(a, rho, beta);
        const oracle::SentenceCore o = oracle::sentence_core(a, rho, beta);
        CHECK(r.frequency.counts == o.counts);
        CHECK(r.core.neuron_ids == o.core);
        CHECK(r.core.neuron_ids.size() == oracle::ceil_frac(beta, d));

        std::vector<IndexSet> gammas;
        std::vector<std::size_t> expect;
        for (std::size_t t = 0; t < m; ++t) {
            gammas.push_back(activated_set(a.row(t)));
            CHECK(gammas.back() == oracle::positive_support(a.row(t)));
            CHECK(token_core_neurons(a.row(t), rho).neuron_ids == oracle::token_core(a.row(t), rho));
            expect.push_back(oracle::intersection(oracle::positive_support(a.row(t)), o.core));
        }
        const auto counts = intersection_counts(gammas, r.core);
        CHECK(counts == expect);

        const std::vector<std::size_t> prot{m - 1};
        if (m >= 4) {
            CHECK(select_core_tokens(counts, prot).kept == oracle::kept_tokens(counts, prot));
        }
    }
}

TEST_CASE("frequency and token-set invariants") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 8 + rng.below(40);
        const std::size_t m = 1 + rng.below(15);
        const Matrix a = oracle::random_activations(m, d, 0.5, rng, false);
        const double rho = rng.uniform(0.05, 1.0);
        const SentenceCoreResult r = sentence_core_neurons(a, rho, 0.3);
        std::size_t total = 0;
        for (std::size_t t = 0; t < m; ++t) {
            const TokenCoreSet& s = r.token_sets[t];
            const std::size_t positives = activated_set(a.row(t)).size();
            CHECK(s.neuron_ids.size() == oracle::ceil_frac(rho, positives));
            for (std::size_t n : s.neuron_ids) {
                CHECK(a(t, n) > 0.0);
            }
            total += s.neuron_ids.size();
        }
        CHECK(std::accumulate(r.frequency.counts.begin(), r.frequency.counts.end(), std::size_t{0}) == total);
        for (std::size_t c : r.frequency.counts) {
            CHECK(c <= m);
        }
    }
}

TEST_CASE("core sets grow monotonically with beta") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix a = oracle::random_activations(12, 40, 0.5, rng, trial % 2 == 0);
        IndexSet prev;
        for (double beta : {0.05, 0.1, 0.2, 0.4, 0.7, 1.0}) {
            const IndexSet cur = sentence_core_neurons(a, 0.3, beta).core.neuron_ids;
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = cur;
        }
    }
}

TEST_CASE("token core sets are invariant to positive scaling") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        Vector a(30);
        for (double& x : a) {
            x = rng.normal();
        }
        Vector b = a;
        const double k = rng.uniform(0.1, 50.0);
        for (double& x : b) {
            x *= k;
        }
        CHECK(token_core_neurons(a, 0.2).neuron_ids == token_core_neurons(b, 0.2).neuron_ids);
    }
}

TEST_CASE("kept is never empty when something is protected") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::size_t> counts(3 + rng.below(20));
        for (auto& c : counts) {
            c = rng.below(5);
        }
        const std::vector<std::size_t> prot{counts.size() - 1};
        try {
            const CoreTokenSelection s = select_core_tokens(counts, prot);
            CHECK_FALSE(s.kept.empty());
            for (std::size_t m = 0; m + 1 < counts.size(); ++m) {
                const bool kept = std::find(s.kept.begin(), s.kept.end(), m) != s.kept.end();
                if (!s.degenerate) {
                    CHECK(kept == (static_cast<std::int64_t>(counts[m]) >= s.threshold));
                }
            }
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::TooFewPoints);
        }
    }
}

TEST_CASE("CSV export") {
    FrequencyTable t;
    t.layer = 2;
    t.counts = {3, 0, 1};
    SentenceCoreSet core;
    core.neuron_ids = {0};
    std::ostringstream a;
    write_frequency_csv(a, t, core);
    CHECK(a.str() == "layer,id,count,kept\n2,0,3,1\n2,1,0,0\n2,2,1,0\n");

    CoreTokenSelection s = select_core_tokens(std::vector<std::size_t>{10, 9, 8, 2, 1}, {}, 1);
    std::ostringstream b;
    write_selection_csv(b, s);
    CHECK(b.str() == "layer,id,count,kept\n1,0,10,1\n1,1,9,1\n1,2,8,1\n1,3,2,0\n1,4,1,0\n");
}
