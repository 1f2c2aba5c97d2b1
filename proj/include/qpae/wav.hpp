#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qpae/checkpoint.hpp"
#include "qpae/error.hpp"

namespace qpae {

/// Mono audio with samples nominally in [−1, 1].
struct WavClip {
    std::uint32_t sample_rate = 8000;
    std::vector<double> samples;

    double duration_seconds() const noexcept {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

enum class WavErrorKind { not_riff, unsupported_codec, missing_fmt, missing_data, truncated, malformed, io };

class WavError : public Error {
public:
    WavError(WavErrorKind kind, const std::string& detail) : Error("wav: " + detail), kind_(kind) {}
    WavErrorKind kind() const noexcept { return kind_; }

private:
    WavErrorKind kind_;
};

namespace detail {

inline std::uint32_t le32(const std::uint8_t* p) noexcept {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const std::uint8_t* p) noexcept {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

/// Parses little-endian RIFF/WAVE holding 16-bit PCM or 32-bit IEEE float.
/// Multi-channel frames are averaged down to mono.
inline WavClip parse_wav(const std::vector<std::uint8_t>& bytes) {
    constexpr std::uint16_t kPcm = 1, kFloat = 3, kExtensible = 0xFFFE;
    if (bytes.size() < 12) throw WavError(WavErrorKind::truncated, "file shorter than RIFF header");
    if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw WavError(WavErrorKind::not_riff, "not a little-endian RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = detail::le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + 16 > bytes.size()) throw WavError(WavErrorKind::truncated, "fmt chunk too short");
            format = detail::le16(bytes.data() + body);
            channels = detail::le16(bytes.data() + body + 2);
            rate = detail::le32(bytes.data() + body + 4);
            bits = detail::le16(bytes.data() + body + 14);
            if (format == kExtensible && size >= 26 && body + 26 <= bytes.size())
                format = detail::le16(bytes.data() + body + 24);  // sub-format GUID starts with the codec tag
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) throw WavError(WavErrorKind::missing_fmt, "data chunk precedes fmt chunk");
            if (channels == 0 || rate == 0) throw WavError(WavErrorKind::malformed, "zero channels or sample rate");
            const bool pcm16 = format == kPcm && bits == 16;
            const bool float32 = format == kFloat && bits == 32;
            if (!pcm16 && !float32)
                throw WavError(WavErrorKind::unsupported_codec, "only 16-bit PCM and 32-bit float are supported");
            if (body + size > bytes.size()) throw WavError(WavErrorKind::truncated, "data chunk runs past end of file");
            const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
            const std::size_t frames = size / frame_bytes;
            if (frames == 0) throw WavError(WavErrorKind::malformed, "no audio frames");
            WavClip clip{rate, std::vector<double>(frames)};
            const std::uint8_t* p = bytes.data() + body;
            for (std::size_t f = 0; f < frames; ++f) {
                double acc = 0.0;
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::uint8_t* s = p + f * frame_bytes + c * (bits / 8);
                    acc += pcm16 ? static_cast<double>(static_cast<std::int16_t>(detail::le16(s))) / 32768.0
                                 : static_cast<double>(std::bit_cast<float>(detail::le32(s)));
                }
                const double v = acc / static_cast<double>(channels);
                if (!std::isfinite(v)) throw WavError(WavErrorKind::malformed, "non-finite sample");
                clip.samples[f] = v;
            }
            return clip;
        }
        pos = body + size + (size & 1u);  // chunks are word aligned
    }
    if (!have_fmt) throw WavError(WavErrorKind::missing_fmt, "no fmt chunk");
    throw WavError(WavErrorKind::missing_data, "no data chunk");
}

inline WavClip read_wav(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        throw WavError(WavErrorKind::io, e.what());
    }
    return parse_wav(bytes);
}

/// Mono 16-bit PCM encoding; samples are clipped to [−1, 1].
inline std::vector<std::uint8_t> encode_wav_pcm16(const WavClip& clip) {
    detail::ByteWriter w;
    const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
    w.raw(reinterpret_cast<const std::uint8_t*>("RIFF"), 4);
    w.u32(36 + data_bytes);
    w.raw(reinterpret_cast<const std::uint8_t*>("WAVEfmt "), 8);
    w.u32(16);
    w.u16(1);
    w.u16(1);
    w.u32(clip.sample_rate);
    w.u32(clip.sample_rate * 2);
    w.u16(2);
    w.u16(16);
    w.raw(reinterpret_cast<const std::uint8_t*>("data"), 4);
    w.u32(data_bytes);
    for (double s : clip.samples) {
        const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
        w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
    }
    return std::move(w.bytes());
}

inline void write_wav(const WavClip& clip, const std::filesystem::path& path) {
    const auto bytes = encode_wav_pcm16(clip);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace qpae
