// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

// Weight file layout (all little-endian):
//   "CMW1" | u32 version | u32 dtype | u32 n_layers | u32 d_model | u32 d_ffn
//   | u32 n_heads | u32 vocab_size | u32 max_seq_len | u32 activation
//   | f64 positional_scale | u64 seed | f64 orthogonality_mix | f64 scale
//   | f64 qk_gain | u64 checksum | tensors...
// Tensors are row-major in declaration order: embedding, then per layer
// wq wk wv wo wu wd attn_norm_gain attn_norm_bias ffn_norm_gain
// ffn_norm_bias, then final_norm_gain final_norm_bias. The checksum is
// FNV-1a 64 over every byte except the checksum field itself.

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "corematch/model.hpp"

namespace corematch::model {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'W', '1'};
constexpr std::size_t kChecksumOffset = 4 + 4 * 9 + 8 * 5;

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    std::vector<unsigned char> bytes;
};

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& bytes) : m_bytes(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(m_bytes[m_pos++]) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(m_bytes[m_pos++]) << (8 * i);
        }
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const { return m_bytes.size() - m_pos; }

private:
    void need(std::size_t n) const {
        require(m_pos + n <= m_bytes.size(), ErrorKind::FormatError, "weight file is truncated");
    }

    const std::vector<unsigned char>& m_bytes;
    std::size_t m_pos = 0;
};

std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i >= kChecksumOffset && i < kChecksumOffset + 8) {
            continue;
        }
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename Fn>
void for_each_tensor(const Weights& w, Fn&& fn) {
    fn(w.embedding.data());
    for (const auto& l : w.layers) {
        fn(l.wq.data());
        fn(l.wk.data());
        fn(l.wv.data());
        fn(l.wo.data());
        fn(l.wu.data());
        fn(l.wd.data());
        fn(std::span<const double>(l.attn_norm_gain));
        fn(std::span<const double>(l.attn_norm_bias));
        fn(std::span<const double>(l.ffn_norm_gain));
        fn(std::span<const double>(l.ffn_norm_bias));
    }
    fn(std::span<const double>(w.final_norm_gain));
    fn(std::span<const double>(w.final_norm_bias));
}

std::vector<unsigned char> serialise(const Weights& weights, WeightDType dtype) {
    weights.validate();
    const ModelConfig& c = weights.config;
    Writer out;
    out.bytes.insert(out.bytes.end(), std::begin(kMagic), std::end(kMagic));
    out.u32(kWeightFormatVersion);
    out.u32(static_cast<std::uint32_t>(dtype));
    out.u32(static_cast<std::uint32_t>(c.n_layers));
    out.u32(static_cast<std::uint32_t>(c.d_model));
    out.u32(static_cast<std::uint32_t>(c.d_ffn));
    out.u32(static_cast<std::uint32_t>(c.n_heads));
    out.u32(static_cast<std::uint32_t>(c.vocab_size));
    out.u32(static_cast<std::uint32_t>(c.max_seq_len));
    out.u32(static_cast<std::uint32_t>(c.activation));
    out.f64(c.positional_scale);
    out.u64(weights.provenance.seed);
    out.f64(weights.provenance.orthogonality_mix);
    out.f64(weights.provenance.scale);
    out.f64(weights.provenance.qk_gain);
    out.u64(0);  // checksum placeholder
    for_each_tensor(weights, [&](std::span<const double> t) {
        for (double v : t) {
            if (dtype == WeightDType::F32) {
                out.f32(static_cast<float>(v));
            } else {
                out.f64(v);
            }
        }
    });
    const std::uint64_t sum = fnv1a(out.bytes);
    for (int i = 0; i < 8; ++i) {
        out.bytes[kChecksumOffset + static_cast<std::size_t>(i)] = static_cast<unsigned char>(sum >> (8 * i));
    }
    return out.bytes;
}

void read_tensor(Reader& in, WeightDType dtype, std::span<double> dst) {
    for (double& v : dst) {
        v = dtype == WeightDType::F32 ? static_cast<double>(in.f32()) : in.f64();
    }
}

}  // namespace

std::uint64_t weights_checksum(const Weights& weights, WeightDType dtype) {
    return fnv1a(serialise(weights, dtype));
}

void save_weights(const Weights& weights, const std::string& path, WeightDType dtype) {
    const auto bytes = serialise(weights, dtype);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::IoError, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorKind::IoError, "failed writing " + path);
}

Weights load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::IoError, "cannot open " + path);
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::FormatError,
            path + " is not a CMW1 weight file");
    Reader in(bytes);
    in.u32();  // magic
    const std::uint32_t version = in.u32();
    require(version == kWeightFormatVersion, ErrorKind::VersionError,
            "weight file version " + std::to_string(version) + " is not supported (expected " +
                std::to_string(kWeightFormatVersion) + ")");
    const std::uint32_t dtype_raw = in.u32();
    require(dtype_raw == 1 || dtype_raw == 2, ErrorKind::FormatError, "unknown tensor dtype " + std::to_string(dtype_raw));
    const auto dtype = static_cast<WeightDType>(dtype_raw);

    Weights w;
    ModelConfig& c = w.config;
    c.n_layers = in.u32();
    c.d_model = in.u32();
    c.d_ffn = in.u32();
    c.n_heads = in.u32();
    c.vocab_size = in.u32();
    c.max_seq_len = in.u32();
    c.activation = static_cast<ActivationKind>(in.u32());
    c.positional_scale = in.f64();
    w.provenance.seed = in.u64();
    w.provenance.orthogonality_mix = in.f64();
    w.provenance.scale = in.f64();
    w.provenance.qk_gain = in.f64();
    const std::uint64_t stored = in.u64();
    c.validate();

    const std::size_t d = c.d_model;
    const std::size_t per_layer = 4 * d * d + 2 * d * c.d_ffn + 4 * d;
    const std::size_t values = c.vocab_size * d + c.n_layers * per_layer + 2 * d;
    const std::size_t width = dtype == WeightDType::F32 ? 4 : 8;
    require(in.remaining() >= values * width, ErrorKind::FormatError, "weight file is truncated");
    require(in.remaining() == values * width, ErrorKind::FormatError, "trailing bytes after tensors");
    require(fnv1a(bytes) == stored, ErrorKind::ChecksumError, "checksum mismatch in " + path);

    const auto mat = [&](std::size_t r, std::size_t cols) {
        Matrix m(r, cols);
        read_tensor(in, dtype, m.data());
        return m;
    };
    const auto vec = [&]() {
        Vector v(d);
        read_tensor(in, dtype, v);
        return v;
    };
    w.embedding = mat(c.vocab_size, d);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        LayerWeights lw;
        lw.wq = mat(d, d);
        lw.wk = mat(d, d);
        lw.wv = mat(d, d);
        lw.wo = mat(d, d);
        lw.wu = mat(d, c.d_ffn);
        lw.wd = mat(c.d_ffn, d);
        lw.attn_norm_gain = vec();
        lw.attn_norm_bias = vec();
        lw.ffn_norm_gain = vec();
        lw.ffn_norm_bias = vec();
        w.layers.push_back(std::move(lw));
    }
    w.final_norm_gain = vec();
    w.final_norm_bias = vec();
    w.validate();
    return w;
}

Weights quantize_f32(const Weights& weights) {
    Weights out = weights;
    const auto q = [](std::span<double> t) {
        for (double& v : t) {
            v = static_cast<double>(static_cast<float>(v));
        }
    };
    q(out.embedding.data());
    for (auto& l : out.layers) {
        for (Matrix* m : {&l.wq, &l.wk, &l.wv, &l.wo, &l.wu, &l.wd}) {
            q(m->data());
        }
        for (Vector* v : {&l.attn_norm_gain, &l.attn_norm_bias, &l.ffn_norm_gain, &l.ffn_norm_bias}) {
            q(*v);
        }
    }
    q(out.final_norm_gain);
    q(out.final_norm_bias);
    return out;
}

}  // namespace corematch::model
