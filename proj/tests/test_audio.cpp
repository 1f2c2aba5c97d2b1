#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace qpae;

namespace {

// Minimal RIFF builder so parser tests do not depend on encode_wav_pcm16.
struct WavBuilder {
    std::uint16_t format = 1;
    std::uint16_t channels = 1;
    std::uint32_t rate = 8000;
    std::uint16_t bits = 16;
    std::vector<std::uint8_t> payload;
    const char* magic = "RIFF";
    bool with_fmt = true;
    bool with_data = true;

    void le(std::vector<std::uint8_t>& out, std::uint64_t v, int n) const {
        for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> build() const {
        std::vector<std::uint8_t> b(magic, magic + 4);
        le(b, 0, 4);
        b.insert(b.end(), {'W', 'A', 'V', 'E'});
        if (with_fmt) {
            b.insert(b.end(), {'f', 'm', 't', ' '});
            le(b, 16, 4);
            le(b, format, 2);
            le(b, channels, 2);
            le(b, rate, 4);
            le(b, rate * channels * bits / 8, 4);
            le(b, channels * bits / 8, 2);
            le(b, bits, 2);
        }
        if (with_data) {
            b.insert(b.end(), {'d', 'a', 't', 'a'});
            le(b, payload.size(), 4);
            b.insert(b.end(), payload.begin(), payload.end());
        }
        const auto riff_size = static_cast<std::uint32_t>(b.size() - 8);
        for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<std::uint8_t>(riff_size >> (8 * i));
        return b;
    }

    void push_i16(std::int16_t v) { le(payload, static_cast<std::uint16_t>(v), 2); }
    void push_f32(float v) { le(payload, std::bit_cast<std::uint32_t>(v), 4); }
};

WavErrorKind parse_error(const std::vector<std::uint8_t>& bytes) {
    try {
        parse_wav(bytes);
    } catch (const WavError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "parse unexpectedly succeeded";
    return WavErrorKind::io;
}

WavClip sine(double hz, double amplitude, std::size_t n, std::uint32_t rate = 8000) {
    WavClip c{rate, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i)
        c.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
    return c;
}

// Independent O(n²) DFT of one Hann-windowed frame.
std::vector<double> direct_power(const std::vector<double>& samples, std::size_t start, std::size_t n_fft) {
    std::vector<double> out(n_fft / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n_fft; ++i) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n_fft);
            const double x = start + i < samples.size() ? samples[start + i] : 0.0;
            acc += x * w * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n_fft);
        }
        out[k] = std::norm(acc);
    }
    return out;
}

}  // namespace

TEST(ReadWav, Pcm16Scaling) {
    WavBuilder b;
    for (std::int16_t v : {std::int16_t{0}, std::int16_t{16384}, std::int16_t{-32768}}) b.push_i16(v);
    const auto clip = parse_wav(b.build());
    EXPECT_EQ(clip.sample_rate, 8000u);
    EXPECT_EQ(clip.samples, (std::vector<double>{0.0, 0.5, -1.0}));
}

TEST(ReadWav, StereoFloatAveragesToMono) {
    WavBuilder b;
    b.format = 3;
    b.bits = 32;
    b.channels = 2;
    b.push_f32(1.0f);
    b.push_f32(0.0f);
    const auto clip = parse_wav(b.build());
    EXPECT_EQ(clip.samples, (std::vector<double>{0.5}));
}

TEST(ReadWav, DistinctParseErrors) {
    WavBuilder b;
    b.push_i16(1);
    b.magic = "RIFX";
    EXPECT_EQ(parse_error(b.build()), WavErrorKind::not_riff);

    b = WavBuilder{};
    b.push_i16(1);
    b.bits = 8;
    EXPECT_EQ(parse_error(b.build()), WavErrorKind::unsupported_codec);

    b = WavBuilder{};
    b.push_i16(1);
    b.format = 2;  // ADPCM
    EXPECT_EQ(parse_error(b.build()), WavErrorKind::unsupported_codec);

    b = WavBuilder{};
    b.with_data = false;
    EXPECT_EQ(parse_error(b.build()), WavErrorKind::missing_data);

    b = WavBuilder{};
    b.push_i16(1);
    b.with_fmt = false;
    EXPECT_EQ(parse_error(b.build()), WavErrorKind::missing_fmt);

    b = WavBuilder{};
    for (int i = 0; i < 8; ++i) b.push_i16(100);
    auto bytes = b.build();
    bytes.resize(bytes.size() - 6);
    EXPECT_EQ(parse_error(bytes), WavErrorKind::truncated);

    EXPECT_THROW(read_wav("/nonexistent/qpae.wav"), WavError);
}

TEST(ReadWav, WriteReadRoundTrip) {
    Rng rng(5);
    WavClip clip{16000, qpae::testing::random_vector(rng, 777)};
    const auto path = std::filesystem::temp_directory_path() / "qpae_roundtrip.wav";
    write_wav(clip, path);
    const auto back = read_wav(path);
    ASSERT_EQ(back.samples.size(), clip.samples.size());
    EXPECT_EQ(back.sample_rate, clip.sample_rate);
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32768.0);
    std::filesystem::remove(path);
}

TEST(Spectrogram, MatchesDirectDft) {
    Rng rng(11);
    WavClip clip{8000, qpae::testing::random_vector(rng, 900)};
    const auto spec = power_spectrogram(clip, 256, 128);
    ASSERT_EQ(spec.size(), 1u + (900 - 256) / 128);
    for (std::size_t t = 0; t < spec.size(); ++t) {
        const auto oracle = direct_power(clip.samples, t * 128, 256);
        for (std::size_t k = 0; k < oracle.size(); ++k)
            EXPECT_NEAR(spec[t][k], oracle[k], 1e-9 * std::max(1.0, oracle[k]));
    }
}

TEST(Spectrogram, SilenceIsFloorEverywhere) {
    const WavClip silent{8000, std::vector<double>(6400, 0.0)};
    const auto f = log_mel_spectrogram(silent, SpectrogramParams{});
    ASSERT_EQ(f.flattened_dim(), 32u * 32u);
    for (double v : f.values) EXPECT_EQ(v, std::log(1e-6));

    // Shorter than one window: zero-padded, never an error.
    const WavClip tiny{8000, std::vector<double>(10, 0.0)};
    for (double v : log_mel_spectrogram(tiny, SpectrogramParams{}).values) EXPECT_EQ(v, std::log(1e-6));
}

TEST(Spectrogram, BinCentredSineLandsInItsMelBand) {
    const SpectrogramParams params{};
    for (std::size_t bin : {10u, 23u, 40u, 64u, 100u}) {
        const double hz = 8000.0 * static_cast<double>(bin) / 256.0;
        const auto f = log_mel_spectrogram(sine(hz, 1.0, 6400), params);
        // Oracle band: the filter with the largest weight at the tone's frequency.
        std::size_t expected = 0;
        for (std::size_t m = 1; m < params.n_mels; ++m)
            if (mel_filter_weight(m, hz, 8000.0, params.n_mels) > mel_filter_weight(expected, hz, 8000.0, params.n_mels))
                expected = m;
        const std::size_t mid = params.target_frames / 2;
        std::size_t best = 0;
        for (std::size_t m = 1; m < params.n_mels; ++m)
            if (f.at(m, mid) > f.at(best, mid)) best = m;
        EXPECT_EQ(best, expected) << "tone at " << hz << " Hz";
    }
}

TEST(Spectrogram, GainShiftsLogPowerByLogFour) {
    const auto a = log_mel_spectrogram(sine(700.0, 1.0, 6400), SpectrogramParams{});
    const auto b = log_mel_spectrogram(sine(700.0, 2.0, 6400), SpectrogramParams{});
    std::size_t checked = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        // Bins where the 1e-6 floor is negligible at the 1e-9 level.
        if (a.values[i] < std::log(1e3)) continue;
        EXPECT_NEAR(b.values[i] - a.values[i], std::log(4.0), 1e-9);
        ++checked;
    }
    EXPECT_GT(checked, 0u);
}

TEST(Spectrogram, ParsevalHoldsForSines) {
    const std::size_t n_fft = 256;
    const auto window = hann_window(n_fft);
    for (int i = 0; i < 10; ++i) {
        const double hz = 150.0 + 370.0 * i;
        const auto clip = sine(hz, 1.0, n_fft);
        const auto spec = power_spectrogram(clip, n_fft, n_fft);
        double time_energy = 0.0;
        for (std::size_t t = 0; t < n_fft; ++t) time_energy += std::pow(clip.samples[t] * window[t], 2);
        double spectral = 0.0;
        for (std::size_t k = 0; k < spec[0].size(); ++k)
            spectral += (k == 0 || k == n_fft / 2 ? 1.0 : 2.0) * spec[0][k];
        EXPECT_NEAR(spectral / n_fft, time_energy, 1e-9 * time_energy) << hz << " Hz";
        EXPECT_GE(spectral / n_fft, 0.9 * time_energy);
    }
}

TEST(Spectrogram, RandomClipsStayFinite) {
    Rng rng(123);
    const SpectrogramParams params{};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(1500);
        WavClip clip{8000, qpae::testing::random_vector(rng, n, -1.0, 1.0)};
        const auto f = log_mel_spectrogram(clip, params);
        for (double v : f.values) ASSERT_TRUE(std::isfinite(v)) << "trial " << trial;
    }
}

TEST(Spectrogram, RejectsBadParameters) {
    const WavClip clip{8000, std::vector<double>(512, 0.1)};
    EXPECT_THROW(log_mel_spectrogram(clip, SpectrogramParams{255, 128, 32, 32}), ConfigError);
    EXPECT_THROW(log_mel_spectrogram(clip, SpectrogramParams{256, 0, 32, 32}), ConfigError);
    EXPECT_THROW(log_mel_spectrogram(clip, SpectrogramParams{256, 128, 129, 32}), ConfigError);
}

TEST(Synth, DeterministicForFixedSeed) {
    SynthSpec spec;
    spec.num_classes = 10;
    spec.per_class = 20;
    spec.seed = 7;
    const auto a = synth_dataset(spec);
    const auto b = synth_dataset(spec);
    EXPECT_EQ(a, b);
    spec.seed = 8;
    EXPECT_NE(synth_dataset(spec).features, a.features);
}

TEST(Synth, ExactPerClassCounts) {
    SynthSpec spec;
    spec.num_classes = 5;
    spec.per_class = 7;
    const auto d = synth_dataset(spec);
    EXPECT_EQ(d.size(), 35u);
    EXPECT_EQ(d.feature_dim, 1024u);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(d.count_of(c), 7u);
    d.validate();
}

TEST(Synth, NoiselessTwoClassIsLinearlySeparable) {
    SynthSpec spec;
    spec.num_classes = 2;
    spec.per_class = 50;
    spec.noise_sigma = 0.0;
    auto d = synth_dataset(spec);
    Standardizer::fit(d).apply(d);
    auto probe = make_classifier(d.feature_dim, std::vector<std::size_t>{}, 2, 1);
    train(probe, d, TrainConfig{0.05, 30, 16, 2, true}, cross_entropy_loss());
    EXPECT_DOUBLE_EQ(accuracy(probe, d), 100.0);
}

TEST(Manifest, WriteThenLoad) {
    SynthSpec spec;
    spec.num_classes = 3;
    spec.per_class = 2;
    spec.duration_s = 0.1;
    const auto clips = synth_clips(spec);
    const auto dir = std::filesystem::temp_directory_path() / "qpae_manifest_test";
    std::filesystem::remove_all(dir);
    write_manifest(dir, clips);
    const auto loaded = load_manifest(dir, 3, spec.spectrogram);
    EXPECT_EQ(loaded.size(), 6u);
    EXPECT_EQ(loaded.original_class, (std::vector<std::size_t>{0, 0, 1, 1, 2, 2}));

    EXPECT_THROW(load_manifest(dir, 2, spec.spectrogram), ConfigError);  // class_id 2 >= K

    std::ofstream(dir / "labels.csv") << "file,label\na.wav,0\n";
    EXPECT_THROW(load_manifest(dir, 3, spec.spectrogram), ConfigError);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_manifest(dir, 3, spec.spectrogram), IoError);
}
