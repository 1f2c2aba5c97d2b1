#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace qpae;
using qpae::testing::random_model;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("qpae_test_" + name);
}

CheckpointErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "decode unexpectedly succeeded";
    return CheckpointErrorKind::io;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExactForF32Parameters) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto m = quantize_to_f32(random_model(seed, 7, {5, 3}, 4));
        const auto path = temp_path("roundtrip.qpae");
        save_checkpoint(m, path);
        const auto back = load_checkpoint(path);
        EXPECT_EQ(back, m);
        EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(m));
        std::filesystem::remove(path);
    }
}

TEST(Checkpoint, LayoutMatchesFormat) {
    Classifier m;
    m.head = DenseLayer{Matrix(1, 2), {0.5, -1.0}};
    m.head.weights(0, 0) = 1.0;
    m.head.weights(0, 1) = 2.0;
    const auto bytes = encode_checkpoint(m);
    // magic + version + count + rows + cols + 2 f32 + bias_len + 2 f32 + crc
    ASSERT_EQ(bytes.size(), 4u + 2 + 2 + 4 + 4 + 8 + 4 + 8 + 4);
    EXPECT_EQ(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 8),
              (std::vector<std::uint8_t>{0x51, 0x50, 0x41, 0x45, 1, 0, 1, 0}));
    EXPECT_EQ(bytes[8], 1);   // rows
    EXPECT_EQ(bytes[12], 2);  // cols
    // 1.0f little-endian is 00 00 80 3f
    EXPECT_EQ(std::vector<std::uint8_t>(bytes.begin() + 16, bytes.begin() + 20),
              (std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f}));
    // CRC32("123456789") check value confirms the polynomial the trailer uses.
    const char* check = "123456789";
    EXPECT_EQ(detail::crc32(reinterpret_cast<const std::uint8_t*>(check), 9), 0xCBF43926u);
}

TEST(Checkpoint, DistinctErrors) {
    const auto good = encode_checkpoint(random_model(3, 4, {3}, 2));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(decode_error(bad_magic), CheckpointErrorKind::bad_magic);

    auto bad_version = good;
    bad_version[4] = 2;
    EXPECT_EQ(decode_error(bad_version), CheckpointErrorKind::version_mismatch);

    auto truncated = good;
    truncated.resize(good.size() - 10);
    EXPECT_EQ(decode_error(truncated), CheckpointErrorKind::truncated);

    auto overflow = good;
    overflow[8] = overflow[9] = overflow[10] = overflow[11] = 0xff;  // rows = 2^32 - 1
    overflow[12] = overflow[13] = overflow[14] = overflow[15] = 0xff;
    EXPECT_EQ(decode_error(overflow), CheckpointErrorKind::dimension_overflow);

    auto corrupt = good;
    corrupt[20] ^= 0x01;
    EXPECT_EQ(decode_error(corrupt), CheckpointErrorKind::crc_mismatch);

    EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.qpae")), CheckpointError);
}

TEST(Checkpoint, EveryTruncationIsRejected) {
    const auto good = encode_checkpoint(random_model(4, 3, {2}, 2));
    for (std::size_t n = 0; n < good.size(); ++n) {
        std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
        EXPECT_THROW(decode_checkpoint(cut), CheckpointError) << "length " << n;
    }
}
