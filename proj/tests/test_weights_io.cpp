// Copyright (C) 2026 CoreMatching contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

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
    return ErrorKind::InvalidParam;
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

constexpr std::size_t kChecksumAt = 80;

}  // namespace

TEST_CASE("f64 weight files round-trip bit-exactly") {
    const auto dir = fixtures::temp_dir("io64");
    const Weights w = fixtures::toy_model(7, 0.3);
    const std::string path = (dir / "w.cmw").string();
    save_weights(w, path);
    const Weights back = load_weights(path);
    CHECK(back == w);
    CHECK(back.provenance.seed == 7);
    CHECK(back.provenance.orthogonality_mix == 0.3);

    save_weights(back, (dir / "again.cmw").string());
    CHECK(slurp(path) == slurp((dir / "again.cmw").string()));
    CHECK(weights_checksum(w) == weights_checksum(back));
}

TEST_CASE("f32 files hold the float32 rounding of every tensor") {
    const auto dir = fixtures::temp_dir("io32");
    const Weights w = fixtures::toy_model(9);
    const std::string path = (dir / "w.cmw").string();
    save_weights(w, path, WeightDType::F32);
    const Weights back = load_weights(path);
    CHECK(back == quantize_f32(w));
    CHECK(quantize_f32(back) == back);
}

TEST_CASE("corrupted, truncated and foreign files are rejected") {
    const auto dir = fixtures::temp_dir("iobad");
    const Weights w = fixtures::toy_model(7, 1.0, fixtures::toy_config(16, 32, 2, 2, 32));
    const std::string path = (dir / "w.cmw").string();
    save_weights(w, path);
    const std::vector<char> good = slurp(path);
    const std::string bad = (dir / "bad.cmw").string();

    auto payload = good;
    payload[good.size() - 3] ^= 0x10;
    spit(bad, payload);
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::ChecksumError);

    auto sum = good;
    sum[kChecksumAt] ^= 0x01;
    spit(bad, sum);
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::ChecksumError);

    auto old = good;
    const std::uint32_t v0 = 0;
    std::memcpy(old.data() + 4, &v0, 4);
    spit(bad, old);
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::VersionError);

    spit(bad, std::vector<char>(good.begin(), good.end() - 8));
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::FormatError);

    auto longer = good;
    longer.push_back(0);
    spit(bad, longer);
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::FormatError);

    auto magic = good;
    magic[0] = 'X';
    spit(bad, magic);
    CHECK(kind_of([&] { load_weights(bad); }) == ErrorKind::FormatError);

    CHECK(kind_of([&] { load_weights((dir / "missing.cmw").string()); }) == ErrorKind::IoError);
    CHECK(kind_of([&] { save_weights(w, (dir / "no/such/dir/w.cmw").string()); }) == ErrorKind::IoError);
}
