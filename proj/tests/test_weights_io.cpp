#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <fakegaze/errors.hpp>
#include <fakegaze/model.hpp>
#include <fakegaze/utils.hpp>
#include <fakegaze/weights_io.hpp>

using namespace fakegaze;

namespace {

ModelWeights small_weights() {
    ModelWeights w;
    w.fingerprint = 0x0123456789abcdefULL;
    Tensor a({2, 3}, {0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 5.0f});
    Tensor b({1}, {-1.5f});
    w.tensors.emplace_back("a", a);
    w.tensors.emplace_back("b/c", b);
    return w;
}

bool weights_equal(const ModelWeights& x, const ModelWeights& y) {
    if (x.fingerprint != y.fingerprint || x.tensors.size() != y.tensors.size()) return false;
    for (std::size_t i = 0; i < x.tensors.size(); ++i) {
        const auto& [xn, xt] = x.tensors[i];
        const auto& [yn, yt] = y.tensors[i];
        if (xn != yn || xt.shape() != yt.shape()) return false;
        if (std::memcmp(xt.data(), yt.data(), xt.numel() * sizeof(float)) != 0) return false;
    }
    return true;
}

std::uint32_t read_u32(const std::string& bytes, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= std::uint32_t(static_cast<unsigned char>(bytes[at + std::size_t(i)])) << (8 * i);
    }
    return v;
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("weights header layout is pinned byte for byte") {
    const std::string bytes = encode_weights(small_weights());
    REQUIRE(bytes.size() >= 18);
    CHECK(bytes.compare(0, 4, "FGWT") == 0);
    // Version 1, little-endian u16.
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    // Fingerprint, little-endian u64.
    std::uint64_t fp = 0;
    for (int i = 0; i < 8; ++i) {
        fp |= std::uint64_t(static_cast<unsigned char>(bytes[6 + std::size_t(i)])) << (8 * i);
    }
    CHECK(fp == 0x0123456789abcdefULL);
    CHECK(read_u32(bytes, 14) == 2);  // tensor count
    // First tensor record: name "a", rank 2, dims 2 x 3, then 6 floats.
    CHECK(read_u32(bytes, 18) == 1);
    CHECK(bytes[22] == 'a');
    CHECK(read_u32(bytes, 23) == 2);
    CHECK(read_u32(bytes, 27) == 2);
    CHECK(read_u32(bytes, 31) == 3);
    // Total size is fully determined by the layout.
    const std::size_t expect = 18 + (4 + 1 + 4 + 8 + 24) + (4 + 3 + 4 + 4 + 4);
    CHECK(bytes.size() == expect);
}

TEST_CASE("encode/decode round-trips bit-exactly") {
    const ModelWeights w = small_weights();
    const ModelWeights back = decode_weights(encode_weights(w), "mem");
    CHECK(weights_equal(w, back));
}

TEST_CASE("a full model snapshot survives the file round trip") {
    Model m(make_spec(Family::xception, Preset::mini), 17);
    const ModelWeights w = m.snapshot();
    const auto path = temp_file("fakegaze_roundtrip.fgwt");
    save_weights(path.string(), w);
    const ModelWeights back = load_weights(path.string());
    CHECK(weights_equal(w, back));
    // And the serialized form itself is deterministic.
    CHECK(encode_weights(w) == encode_weights(back));
    std::filesystem::remove(path);
}

TEST_CASE("every truncation of a weights file is rejected") {
    const std::string bytes = encode_weights(small_weights());
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        CHECK_THROWS_AS(decode_weights(bytes.substr(0, n), "trunc"), WeightsError);
    }
}

TEST_CASE("structural corruption is rejected with the origin in the message") {
    const std::string good = encode_weights(small_weights());

    SUBCASE("bad magic") {
        std::string bytes = good;
        bytes[0] = 'X';
        CHECK_THROWS_WITH_AS(decode_weights(bytes, "f.fgwt"),
                             "f.fgwt: bad magic (not a FGWT weights file)", WeightsError);
    }
    SUBCASE("unsupported version") {
        std::string bytes = good;
        bytes[4] = 2;
        CHECK_THROWS_AS(decode_weights(bytes, "f.fgwt"), WeightsError);
    }
    SUBCASE("trailing bytes") {
        CHECK_THROWS_AS(decode_weights(good + "x", "f.fgwt"), WeightsError);
    }
    SUBCASE("implausible tensor count") {
        std::string bytes = good;
        bytes[17] = static_cast<char>(0xff);  // count |= 0xff << 24
        CHECK_THROWS_AS(decode_weights(bytes, "f.fgwt"), WeightsError);
    }
    SUBCASE("zero-length tensor name") {
        std::string bytes = good;
        bytes[18] = 0;
        CHECK_THROWS_AS(decode_weights(bytes, "f.fgwt"), WeightsError);
    }
    SUBCASE("zero rank") {
        std::string bytes = good;
        bytes[23] = 0;
        CHECK_THROWS_AS(decode_weights(bytes, "f.fgwt"), WeightsError);
    }
    SUBCASE("zero dimension") {
        std::string bytes = good;
        bytes[27] = 0;
        CHECK_THROWS_AS(decode_weights(bytes, "f.fgwt"), WeightsError);
    }
    SUBCASE("non-finite value") {
        std::string bytes = good;
        // First float of tensor "a" (offset 35) -> quiet NaN 0x7fc00000.
        bytes[35] = 0;
        bytes[36] = 0;
        bytes[37] = static_cast<char>(0xc0);
        bytes[38] = static_cast<char>(0x7f);
        CHECK_THROWS_WITH_AS(decode_weights(bytes, "f.fgwt"),
                             "f.fgwt: tensor 'a' contains non-finite values", WeightsError);
    }
}

TEST_CASE("single-byte mutations never escape the error taxonomy") {
    const std::string good = encode_weights(small_weights());
    Rng rng(99);
    int rejected = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::string bytes = good;
        const std::size_t pos = rng.index(bytes.size());
        const char flip = static_cast<char>(rng.u64() & 0xff);
        if (bytes[pos] == flip) continue;
        bytes[pos] = flip;
        try {
            const ModelWeights w = decode_weights(bytes, "fuzz");
            CHECK(w.tensors.size() <= 2);  // decoded fine: mutation hit a value byte
        } catch (const WeightsError&) {
            ++rejected;  // the only acceptable failure mode
        }
    }
    CHECK(rejected > 0);
}

TEST_CASE("encode rejects malformed inputs") {
    ModelWeights w;
    w.tensors.emplace_back("", Tensor({1}, {1.0f}));
    CHECK_THROWS_AS(encode_weights(w), WeightsError);
    ModelWeights undef;
    undef.tensors.emplace_back("x", Tensor());
    CHECK_THROWS_AS(encode_weights(undef), WeightsError);
}

TEST_CASE("file-system failures raise WeightsError") {
    CHECK_THROWS_AS(load_weights("/nonexistent/nowhere.fgwt"), WeightsError);
    CHECK_THROWS_AS(save_weights("/nonexistent/dir/out.fgwt", small_weights()), WeightsError);
}
