#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "qpae/classifier.hpp"
#include "qpae/error.hpp"

namespace qpae {

// Little-endian layout:
//   "QPAE" | u16 version | u16 layer_count
//   per layer: u32 rows | u32 cols | rows*cols f32 | u32 bias_len | bias_len f32
//   u32 CRC32 of every preceding byte
// Hidden layers come first; the final layer is last.

inline constexpr std::array<std::uint8_t, 4> kCheckpointMagic{0x51, 0x50, 0x41, 0x45};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { bad_magic, version_mismatch, truncated, dimension_overflow, crc_mismatch, io };

inline const char* to_string(CheckpointErrorKind kind) noexcept {
    switch (kind) {
        case CheckpointErrorKind::bad_magic: return "bad magic";
        case CheckpointErrorKind::version_mismatch: return "version mismatch";
        case CheckpointErrorKind::truncated: return "truncated";
        case CheckpointErrorKind::dimension_overflow: return "dimension overflow";
        case CheckpointErrorKind::crc_mismatch: return "crc mismatch";
        case CheckpointErrorKind::io: return "io";
    }
    return "unknown";
}

class CheckpointError : public Error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& detail)
        : Error(std::string("checkpoint ") + to_string(kind) + ": " + detail), kind_(kind) {}
    CheckpointErrorKind kind() const noexcept { return kind_; }

private:
    CheckpointErrorKind kind_;
};

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
    boost::crc_32_type crc;
    crc.process_bytes(data, n);
    return crc.checksum();
}

class ByteWriter {
public:
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const std::uint8_t* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const noexcept { return n_ - pos_; }

private:
    std::uint64_t get(int width) {
        if (remaining() < static_cast<std::size_t>(width))
            throw CheckpointError(CheckpointErrorKind::truncated, "payload ends early");
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes the model; parameters are narrowed to f32.
inline std::vector<std::uint8_t> encode_checkpoint(const Classifier& model) {
    validate(model);
    const std::size_t layer_count = model.hidden.size() + 1;
    if (layer_count > std::numeric_limits<std::uint16_t>::max())
        throw CheckpointError(CheckpointErrorKind::dimension_overflow, "too many layers");
    detail::ByteWriter w;
    w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.u16(kCheckpointVersion);
    w.u16(static_cast<std::uint16_t>(layer_count));
    auto put_layer = [&](const DenseLayer& layer) {
        constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
        if (layer.weights.rows > kMax || layer.weights.cols > kMax)
            throw CheckpointError(CheckpointErrorKind::dimension_overflow, "layer dimension exceeds u32");
        w.u32(static_cast<std::uint32_t>(layer.weights.rows));
        w.u32(static_cast<std::uint32_t>(layer.weights.cols));
        for (double v : layer.weights.data) w.f32(static_cast<float>(v));
        w.u32(static_cast<std::uint32_t>(layer.bias.size()));
        for (double v : layer.bias) w.f32(static_cast<float>(v));
    };
    for (const auto& layer : model.hidden) put_layer(layer);
    put_layer(model.head);
    const auto crc = detail::crc32(w.bytes().data(), w.bytes().size());
    w.u32(crc);
    return std::move(w.bytes());
}

/// Decodes a checkpoint. Either returns a complete, shape-valid model or throws.
inline Classifier decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
        throw CheckpointError(CheckpointErrorKind::bad_magic, "missing QPAE signature");
    if (bytes.size() < 8 + 4) throw CheckpointError(CheckpointErrorKind::truncated, "header incomplete");

    detail::ByteReader header(bytes.data() + 4, 4);
    const auto version = header.u16();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointErrorKind::version_mismatch, "file version " + std::to_string(version));
    const auto layer_count = header.u16();
    if (layer_count == 0) throw CheckpointError(CheckpointErrorKind::dimension_overflow, "zero layers");

    // Parse first so a short file reports truncation rather than a CRC failure.
    detail::ByteReader r(bytes.data() + 8, bytes.size() - 8);
    std::vector<DenseLayer> layers;
    layers.reserve(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l) {
        const std::uint64_t rows = r.u32();
        const std::uint64_t cols = r.u32();
        const std::uint64_t n = rows * cols;
        if (n > r.remaining() / 4) {
            if (rows != 0 && cols != 0 && n / rows == cols && n < (std::uint64_t{1} << 40))
                throw CheckpointError(CheckpointErrorKind::truncated, "weight block runs past end of file");
            throw CheckpointError(CheckpointErrorKind::dimension_overflow, "weight block size implausible");
        }
        DenseLayer layer{Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)), {}};
        for (double& v : layer.weights.data) v = r.f32();
        const std::uint64_t bias_len = r.u32();
        if (bias_len > r.remaining() / 4) throw CheckpointError(CheckpointErrorKind::truncated, "bias runs past end");
        if (bias_len != cols)
            throw CheckpointError(CheckpointErrorKind::dimension_overflow, "bias length differs from column count");
        layer.bias.resize(static_cast<std::size_t>(bias_len));
        for (double& v : layer.bias) v = r.f32();
        layers.push_back(std::move(layer));
    }
    if (r.remaining() < 4) throw CheckpointError(CheckpointErrorKind::truncated, "missing CRC");
    if (r.remaining() > 4) throw CheckpointError(CheckpointErrorKind::dimension_overflow, "trailing bytes");
    const std::size_t body = bytes.size() - 4;
    const auto stored = detail::ByteReader(bytes.data() + body, 4).u32();
    if (stored != detail::crc32(bytes.data(), body))
        throw CheckpointError(CheckpointErrorKind::crc_mismatch, "payload checksum does not match");

    Classifier model;
    model.head = std::move(layers.back());
    layers.pop_back();
    model.hidden = std::move(layers);
    try {
        validate(model);
    } catch (const ShapeError& e) {
        throw CheckpointError(CheckpointErrorKind::dimension_overflow, e.what());
    }
    return model;
}

inline void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::io, "write failed for " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Classifier load_checkpoint(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw CheckpointError(CheckpointErrorKind::io, e.what());
    }
    return decode_checkpoint(bytes);
}

/// Rounds every parameter to the nearest f32, i.e. what a save/load cycle keeps.
inline Classifier quantize_to_f32(Classifier model) {
    for_each_parameter(model, [](double& v) { v = static_cast<double>(static_cast<float>(v)); });
    return model;
}

}  // namespace qpae
