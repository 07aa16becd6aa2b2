// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include "corematch/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace corematch::model {

using numerics::dot;
using numerics::vecmat;

void ModelConfig::validate() const {
    require(n_layers >= 1 && d_model >= 1 && d_ffn >= 1 && n_heads >= 1 && vocab_size >= 1 && max_seq_len >= 1,
            ErrorKind::InvalidParam, "all model dimensions must be >= 1");
    require(d_model % n_heads == 0, ErrorKind::InvalidParam,
            "d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    require(d_ffn >= d_model, ErrorKind::InvalidParam, "d_ffn must be >= d_model");
    require(activation == ActivationKind::Relu || activation == ActivationKind::Silu, ErrorKind::InvalidParam,
            "unknown activation kind");
    require(std::isfinite(positional_scale) && positional_scale >= 0.0, ErrorKind::InvalidParam,
            "positional_scale must be finite and >= 0");
}

void Weights::validate() const {
    config.validate();
    const auto check = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        require(m.rows() == r && m.cols() == c, ErrorKind::ShapeError,
                std::string(name) + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(r) + "x" + std::to_string(c));
        numerics::require_finite(m.data(), name);
    };
    const auto check_vec = [](const Vector& v, std::size_t n, const char* name) {
        require(v.size() == n, ErrorKind::ShapeError, std::string(name) + " has wrong length");
        numerics::require_finite(v, name);
    };
    const std::size_t d = config.d_model;
    check(embedding, config.vocab_size, d, "embedding");
    require(layers.size() == config.n_layers, ErrorKind::ShapeError, "layer count does not match config");
    for (const auto& l : layers) {
        check(l.wq, d, d, "wq");
        check(l.wk, d, d, "wk");
        check(l.wv, d, d, "wv");
        check(l.wo, d, d, "wo");
        check(l.wu, d, config.d_ffn, "wu");
        check(l.wd, config.d_ffn, d, "wd");
        check_vec(l.attn_norm_gain, d, "attn_norm_gain");
        check_vec(l.attn_norm_bias, d, "attn_norm_bias");
        check_vec(l.ffn_norm_gain, d, "ffn_norm_gain");
        check_vec(l.ffn_norm_bias, d, "ffn_norm_bias");
    }
    check_vec(final_norm_gain, d, "final_norm_gain");
    check_vec(final_norm_bias, d, "final_norm_bias");
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.normal();
    }
    return m;
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    const std::size_t tall = std::max(rows, cols);
    const std::size_t narrow = std::min(rows, cols);
    // Columns of a tall Gaussian, orthonormalised by modified Gram-Schmidt
    // with one re-orthogonalisation pass.
    Matrix g = random_gaussian(narrow, tall, rng);  // row k = k-th column vector
    for (std::size_t k = 0; k < narrow; ++k) {
        auto vk = g.row(k);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < k; ++j) {
                auto vj = g.row(j);
                const double c = dot(vk, vj);
                for (std::size_t i = 0; i < tall; ++i) {
                    vk[i] -= c * vj[i];
                }
            }
        }
        const double n = numerics::norm(vk);
        require(n > 1e-12, ErrorKind::DegenerateMatrix, "rank-deficient Gaussian draw");
        for (double& x : vk) {
            x /= n;
        }
    }
    return rows <= cols ? g : g.transposed();
}

namespace {

Matrix mix_matrix(const Matrix& ortho, Rng& rng, double mix, double scale) {
    Matrix g = random_gaussian(ortho.rows(), ortho.cols(), rng);
    const double ratio = numerics::frobenius_norm(ortho) / numerics::frobenius_norm(g);
    Matrix out(ortho.rows(), ortho.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = scale * ((1.0 - mix) * g.data()[i] * ratio + mix * ortho.data()[i]);
    }
    return out;
}

/// Orthonormal-row matrices map unit-variance inputs to outputs of variance
/// rows/cols; the gain restores unit variance for expanding projections.
Matrix scaled_orthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix q = random_orthonormal(rows, cols, rng);
    if (cols > rows) {
        q = numerics::scale(q, std::sqrt(static_cast<double>(cols) / static_cast<double>(rows)));
    }
    return q;
}

/// Inverse of R = U diag(s), i.e. diag(1/s) U^T, computed without a solver.
Matrix inverse_rotation_diag(const Matrix& u, const Vector& s) {
    Matrix inv = u.transposed();
    for (std::size_t r = 0; r < inv.rows(); ++r) {
        for (double& v : inv.row(r)) {
            v /= s[r];
        }
    }
    return inv;
}

}  // namespace

Weights init_synthetic(const ModelConfig& config, const SyntheticSpec& spec) {
    config.validate();
    require(spec.orthogonality_mix >= 0.0 && spec.orthogonality_mix <= 1.0, ErrorKind::InvalidParam,
            "orthogonality_mix must lie in [0, 1]");
    require(spec.scale > 0.0 && std::isfinite(spec.scale), ErrorKind::InvalidParam, "scale must be > 0");
    require(spec.qk_gain > 0.0 && std::isfinite(spec.qk_gain), ErrorKind::InvalidParam, "qk_gain must be > 0");

    Rng rng(spec.seed);
    const std::size_t d = config.d_model;
    const double mix = spec.orthogonality_mix;

    Weights w;
    w.config = config;
    w.provenance = {spec.seed, spec.orthogonality_mix, spec.scale, spec.qk_gain};
    w.embedding = random_gaussian(config.vocab_size, d, rng);

    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerWeights lw;
        // W_q = sqrt(theta) Q R, W_k = sqrt(theta) Q R^{-T}, R = U diag(s).
        const Matrix q = random_orthonormal(d, d, rng);
        const Matrix u = random_orthonormal(d, d, rng);
        Vector s(d);
        for (double& v : s) {
            v = std::exp(rng.uniform(-0.5, 0.5));
        }
        Matrix r = u;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                r(i, j) *= s[j];
            }
        }
        const Matrix r_inv_t = inverse_rotation_diag(u, s).transposed();
        const double root_theta = std::sqrt(spec.qk_gain);
        lw.wq = mix_matrix(numerics::matmul(q, r), rng, mix, root_theta);
        lw.wk = mix_matrix(numerics::matmul(q, r_inv_t), rng, mix, root_theta);
        lw.wv = mix_matrix(scaled_orthonormal(d, d, rng), rng, mix, spec.scale);
        lw.wo = mix_matrix(scaled_orthonormal(d, d, rng), rng, mix, spec.scale);
        lw.wu = mix_matrix(scaled_orthonormal(d, config.d_ffn, rng), rng, mix, spec.scale);
        lw.wd = mix_matrix(scaled_orthonormal(config.d_ffn, d, rng), rng, mix, spec.scale);
        lw.attn_norm_gain.assign(d, 1.0);
        lw.attn_norm_bias.assign(d, 0.0);
        lw.ffn_norm_gain.assign(d, 1.0);
        lw.ffn_norm_bias.assign(d, 0.0);
        w.layers.push_back(std::move(lw));
    }
    w.final_norm_gain.assign(d, 1.0);
    w.final_norm_bias.assign(d, 0.0);
    return w;
}

double scaled_identity_deviation(const Matrix& p) {
    require(p.rows() == p.cols() && p.rows() > 0, ErrorKind::ShapeError, "expected a non-empty square matrix");
    const std::size_t n = p.rows();
    double lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        lambda += p(i, i);
    }
    lambda /= static_cast<double>(n);
    require(lambda > 0.0, ErrorKind::DegenerateMatrix, "mean diagonal must be positive");
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double e = p(i, j) - (i == j ? lambda : 0.0);
            off += e * e;
        }
    }
    return std::sqrt(off) / (lambda * std::sqrt(static_cast<double>(n)));
}

namespace {

Matrix gram(const Matrix& w, GramSide side) {
    require(!w.empty(), ErrorKind::ShapeError, "empty matrix");
    if (side == GramSide::Auto) {
        side = w.rows() <= w.cols() ? GramSide::Rows : GramSide::Cols;
    }
    const Matrix wt = w.transposed();
    return side == GramSide::Rows ? numerics::matmul(w, wt) : numerics::matmul(wt, w);
}

}  // namespace

double orthogonality_deviation(const Matrix& w, GramSide side) { return scaled_identity_deviation(gram(w, side)); }

double orthogonality_scale(const Matrix& w, GramSide side) {
    const Matrix p = gram(w, side);
    double lambda = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        lambda += p(i, i);
    }
    return lambda / static_cast<double>(p.rows());
}

Vector positional_encoding(std::size_t position, std::size_t d_model) {
    Vector pe(d_model);
    for (std::size_t i = 0; i < d_model; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
        const double angle = static_cast<double>(position) * freq;
        pe[i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return pe;
}

Matrix embed_tokens(const Weights& weights, std::span<const TokenId> ids) {
    Matrix out(ids.size(), weights.config.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const TokenId id = ids[i];
        require(id >= 0 && static_cast<std::size_t>(id) < weights.config.vocab_size, ErrorKind::VocabError,
                "token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(weights.config.vocab_size));
        auto src = weights.embedding.row(static_cast<std::size_t>(id));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Vector normed(std::span<const double> x, const Vector& gain, const Vector& bias) {
    Vector n = numerics::layer_norm(x);
    for (std::size_t i = 0; i < n.size(); ++i) {
        n[i] = n[i] * gain[i] + bias[i];
    }
    return n;
}

Vector attention_row(std::span<const double> query, const Matrix& keys, const Matrix& values, std::size_t n_keys,
                     std::size_t n_heads, std::vector<Vector>* alpha_out) {
    const std::size_t d = query.size();
    require(keys.cols() == d && values.cols() == d, ErrorKind::ShapeError, "attention width mismatch");
    require(n_keys >= 1 && n_keys <= keys.rows() && n_keys <= values.rows(), ErrorKind::ShapeError,
            "attention key count out of range");
    require(d % n_heads == 0, ErrorKind::ShapeError, "width not divisible by heads");
    const std::size_t dh = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Vector out(d, 0.0);
    if (alpha_out) {
        alpha_out->assign(n_heads, Vector{});
    }
    Vector scores(n_keys);
    for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t off = h * dh;
        const auto qh = query.subspan(off, dh);
        for (std::size_t j = 0; j < n_keys; ++j) {
            scores[j] = dot(qh, keys.row(j).subspan(off, dh)) * inv_sqrt;
        }
        Vector alpha = numerics::softmax(scores);
        for (std::size_t j = 0; j < n_keys; ++j) {
            const auto vj = values.row(j).subspan(off, dh);
            for (std::size_t i = 0; i < dh; ++i) {
                out[off + i] += alpha[j] * vj[i];
            }
        }
        if (alpha_out) {
            (*alpha_out)[h] = std::move(alpha);
        }
    }
    return out;
}

Vector ffn_row(const LayerWeights& layer, std::span<const double> x, ActivationKind kind, Vector* activations_out,
               const std::vector<std::size_t>* neuron_subset) {
    const std::size_t m = layer.wu.cols();
    if (!neuron_subset) {
        Vector a = numerics::activation(vecmat(x, layer.wu), kind);
        Vector y = vecmat(a, layer.wd);
        if (activations_out) {
            *activations_out = std::move(a);
        }
        return y;
    }
    // Same accumulation order as vecmat restricted to the subset, so the full
    // subset reproduces the dense result bit for bit.
    Vector a(m, 0.0);
    for (std::size_t n : *neuron_subset) {
        require(n < m, ErrorKind::ShapeError, "neuron index out of range");
        double pre = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            pre += x[k] * layer.wu(k, n);
        }
        a[n] = numerics::activate(pre, kind);
    }
    Vector y(layer.wd.cols(), 0.0);
    for (std::size_t n : *neuron_subset) {
        const double an = a[n];
        auto wrow = layer.wd.row(n);
        for (std::size_t j = 0; j < y.size(); ++j) {
            y[j] += an * wrow[j];
        }
    }
    if (activations_out) {
        *activations_out = std::move(a);
    }
    return y;
}

Vector logits_row(const Weights& weights, std::span<const double> hidden) {
    const Vector hn = normed(hidden, weights.final_norm_gain, weights.final_norm_bias);
    Vector logits(weights.config.vocab_size);
    for (std::size_t v = 0; v < logits.size(); ++v) {
        logits[v] = dot(hn, weights.embedding.row(v));
    }
    numerics::require_finite(logits, "logits");
    return logits;
}

double LayerTrace::mean_alpha(std::size_t query, std::size_t key) const {
    double s = 0.0;
    for (const auto& a : alpha) {
        s += a(query, key);
    }
    return s / static_cast<double>(alpha.size());
}

ForwardResult forward_dense(const Weights& weights, const Matrix& input_embeddings) {
    const ModelConfig& cfg = weights.config;
    const std::size_t t = input_embeddings.rows();
    require(t >= 1, ErrorKind::EmptySet, "empty input sequence");
    require(input_embeddings.cols() == cfg.d_model, ErrorKind::ShapeError, "input width must equal d_model");
    require(t <= cfg.max_seq_len, ErrorKind::SequenceOverflow,
            "sequence length " + std::to_string(t) + " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));

    Matrix h = input_embeddings;
    for (std::size_t i = 0; i < t; ++i) {
        const Vector pe = positional_encoding(i, cfg.d_model);
        auto row = h.row(i);
        for (std::size_t j = 0; j < cfg.d_model; ++j) {
            row[j] += cfg.positional_scale * pe[j];
        }
    }

    ForwardResult result;
    std::vector<std::size_t> positions(t);
    for (std::size_t i = 0; i < t; ++i) {
        positions[i] = i;
    }
    for (const auto& lw : weights.layers) {
        LayerTrace tr;
        tr.positions = positions;
        tr.attn_input = h;
        Matrix keys(t, cfg.d_model);
        tr.values = Matrix(t, cfg.d_model);
        Matrix queries(t, cfg.d_model);
        for (std::size_t i = 0; i < t; ++i) {
            const Vector a = normed(h.row(i), lw.attn_norm_gain, lw.attn_norm_bias);
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
            const Vector o = attention_row(queries.row(i), keys, tr.values, i + 1, cfg.n_heads, &alpha);
            for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
                std::copy(alpha[hd].begin(), alpha[hd].end(), tr.alpha[hd].row(i).begin());
            }
            std::copy(o.begin(), o.end(), tr.attn_out.row(i).begin());
            const Vector proj = vecmat(o, lw.wo);
            auto hr = h.row(i);
            for (std::size_t j = 0; j < cfg.d_model; ++j) {
                hr[j] += proj[j];
            }
            const Vector x = normed(hr, lw.ffn_norm_gain, lw.ffn_norm_bias);
            Vector act;
            const Vector y = ffn_row(lw, x, cfg.activation, &act);
            std::copy(x.begin(), x.end(), tr.ffn_input.row(i).begin());
            std::copy(act.begin(), act.end(), tr.activations.row(i).begin());
            std::copy(y.begin(), y.end(), tr.ffn_output.row(i).begin());
            for (std::size_t j = 0; j < cfg.d_model; ++j) {
                hr[j] += y[j];
            }
        }
        numerics::require_finite(h.data(), "forward_dense hidden state");
        result.trace.layers.push_back(std::move(tr));
    }

    result.logits = Matrix(t, cfg.vocab_size);
    for (std::size_t i = 0; i < t; ++i) {
        const Vector lg = logits_row(weights, h.row(i));
        std::copy(lg.begin(), lg.end(), result.logits.row(i).begin());
    }
    return result;
}

ForwardResult forward_dense(const Weights& weights, std::span<const TokenId> ids) {
    return forward_dense(weights, embed_tokens(weights, ids));
}

TokenId argmax(std::span<const double> logits) {
    require(!logits.empty(), ErrorKind::EmptySet, "argmax of empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

std::vector<TokenId> generate_dense(const Weights& weights, const Matrix& input_embeddings,
                                    std::size_t max_new_tokens, std::vector<Vector>* step_logits) {
    Matrix seq = input_embeddings;
    std::vector<TokenId> out;
    for (std::size_t step = 0; step < max_new_tokens; ++step) {
        const ForwardResult r = forward_dense(weights, seq);
        const auto last = r.logits.row(r.logits.rows() - 1);
        if (step_logits) {
            step_logits->emplace_back(last.begin(), last.end());
        }
        const TokenId next = argmax(last);
        out.push_back(next);
        seq.append_row(weights.embedding.row(static_cast<std::size_t>(next)));
    }
    return out;
}

Matrix graded_patches(const Vector& centre, std::size_t count, Rng& rng) {
    Matrix out(count, centre.size());
    for (std::size_t i = 0; i < count; ++i) {
        const double t = rng.uniform();
        const double noise_weight = std::sqrt(1.0 - t * t);
        auto row = out.row(i);
        for (std::size_t j = 0; j < centre.size(); ++j) {
            row[j] = t * centre[j] + noise_weight * rng.normal();
        }
    }
    return out;
}

}  // namespace corematch::model
