// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "corematch/numerics.hpp"
#include "corematch/rng.hpp"

namespace corematch::model {

using numerics::ActivationKind;
using numerics::Matrix;
using numerics::Vector;
using TokenId = std::int32_t;

struct ModelConfig {
    std::size_t n_layers = 4;
    std::size_t d_model = 32;
    std::size_t d_ffn = 128;
    std::size_t n_heads = 4;
    std::size_t vocab_size = 256;
    std::size_t max_seq_len = 1024;
    ActivationKind activation = ActivationKind::Relu;
    /// Multiplier on the sinusoidal position table added to input embeddings.
    double positional_scale = 1.0;

    std::size_t head_dim() const { return d_model / n_heads; }
    /// Throws InvalidParam on any violated invariant.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;  // d_model x d_model
    Matrix wu;              // d_model x d_ffn
    Matrix wd;              // d_ffn x d_model
    Vector attn_norm_gain, attn_norm_bias;
    Vector ffn_norm_gain, ffn_norm_bias;

    bool operator==(const LayerWeights&) const = default;
};

/// How a set of weights was produced; stored in the weight file header.
struct Provenance {
    std::uint64_t seed = 0;
    double orthogonality_mix = 0.0;
    double scale = 1.0;
    double qk_gain = 1.0;

    bool operator==(const Provenance&) const = default;
};

struct Weights {
    ModelConfig config;
    Provenance provenance;
    Matrix embedding;  // vocab_size x d_model, tied with the LM head
    std::vector<LayerWeights> layers;
    Vector final_norm_gain, final_norm_bias;

    /// Checks every tensor shape against config and that all values are finite.
    void validate() const;

    bool operator==(const Weights&) const = default;
};

struct SyntheticSpec {
    std::uint64_t seed = 0;
    /// 0 = i.i.d. Gaussian, 1 = exactly scaled-orthogonal.
    double orthogonality_mix = 1.0;
    double scale = 1.0;
    /// theta in W_q W_k^T = theta I at mix 1.
    double qk_gain = 1.0;
};

/// Random matrix with orthonormal rows (rows <= cols) or orthonormal columns.
Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng);
Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng);

/// Builds a deterministic synthetic model. Each projection is
/// scale * ((1 - m) G + m Q) where Q is scaled-orthogonal and G is Gaussian
/// rescaled to the same Frobenius norm. W_q and W_k share Q and a random
/// invertible R so that W_q W_k^T = qk_gain * I at m = 1.
Weights init_synthetic(const ModelConfig& config, const SyntheticSpec& spec);

enum class GramSide {
    Auto,  ///< the smaller Gram: W W^T if rows <= cols, else W^T W
    Rows,  ///< W W^T
    Cols,  ///< W^T W
};

/// ||P - lambda I||_F / ||lambda I||_F with lambda the mean diagonal of P.
double scaled_identity_deviation(const Matrix& p);
double orthogonality_deviation(const Matrix& w, GramSide side = GramSide::Auto);
/// Mean diagonal of the Gram selected by side (the lambda estimate).
double orthogonality_scale(const Matrix& w, GramSide side = GramSide::Auto);

/// Sinusoidal table row for one position.
Vector positional_encoding(std::size_t position, std::size_t d_model);

/// Embedding rows for ids (no positional term). Throws VocabError.
Matrix embed_tokens(const Weights& weights, std::span<const TokenId> ids);

// ---- forward kernels shared by the dense model and the sparse engine --------

/// Row-wise affine layer norm.
Vector normed(std::span<const double> x, const Vector& gain, const Vector& bias);

/// One query row against the first n_keys rows of keys/values, per head.
/// alpha_out, when given, receives one probability row per head.
Vector attention_row(std::span<const double> query, const Matrix& keys, const Matrix& values, std::size_t n_keys,
                     std::size_t n_heads, std::vector<Vector>* alpha_out = nullptr);

/// FFN for one normalised input row. With neuron_subset the intermediate is
/// computed only on those (sorted) neurons and the rest are exactly zero.
Vector ffn_row(const LayerWeights& layer, std::span<const double> x, ActivationKind kind, Vector* activations_out,
               const std::vector<std::size_t>* neuron_subset = nullptr);

Vector logits_row(const Weights& weights, std::span<const double> hidden);

// ---- tracing ---------------------------------------------------------------

struct LayerTrace {
    /// Original prompt positions of the rows in every tensor below.
    std::vector<std::size_t> positions;
    std::vector<Matrix> alpha;  // per head, T x T, row = query, causal
    Matrix attn_input;          // residual stream entering the block
    Matrix values;              // V = LN(h) W_v
    Matrix attn_out;            // concatenated head outputs before W_o
    Matrix ffn_input;           // LN(h) entering the FFN
    Matrix activations;         // A = sigma(x W_u)
    Matrix ffn_output;          // y = A W_d

    std::size_t tokens() const { return positions.size(); }
    /// Head-averaged attention paid by query q to key k.
    double mean_alpha(std::size_t query, std::size_t key) const;
};

struct ActivationTrace {
    std::vector<LayerTrace> layers;
};

struct ForwardResult {
    Matrix logits;  // one row per input position
    ActivationTrace trace;
};

/// Causal dense forward over input embeddings (positions 0..T-1 are added here).
ForwardResult forward_dense(const Weights& weights, const Matrix& input_embeddings);
ForwardResult forward_dense(const Weights& weights, std::span<const TokenId> ids);

/// Greedy argmax; ties go to the lower id.
TokenId argmax(std::span<const double> logits);

/// Reference generator: re-runs forward_dense on the growing sequence.
std::vector<TokenId> generate_dense(const Weights& weights, const Matrix& input_embeddings,
                                    std::size_t max_new_tokens, std::vector<Vector>* step_logits = nullptr);

// ---- weight files ----------------------------------------------------------

enum class WeightDType : std::uint32_t { F32 = 1, F64 = 2 };

inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const Weights& weights, const std::string& path, WeightDType dtype = WeightDType::F64);
Weights load_weights(const std::string& path);
/// FNV-1a 64 digest of the serialised file contents (header fields + payload).
std::uint64_t weights_checksum(const Weights& weights, WeightDType dtype = WeightDType::F64);
/// Rounds every tensor to the nearest float32 value.
Weights quantize_f32(const Weights& weights);

// ---- synthetic inputs --------------------------------------------------------

/// Image-like patch embeddings with graded similarity to a centre direction:
/// row i = t_i * centre + sqrt(1 - t_i^2) * noise, t_i ~ U(0, 1), so token
/// relevance varies smoothly across the span.
Matrix graded_patches(const Vector& centre, std::size_t count, Rng& rng);

}  // namespace corematch::model
