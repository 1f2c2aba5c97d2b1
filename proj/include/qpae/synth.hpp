#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qpae/dataset.hpp"
#include "qpae/error.hpp"
#include "qpae/rng.hpp"
#include "qpae/spectrogram.hpp"
#include "qpae/wav.hpp"

namespace qpae {

/// Parameters of the seeded harmonic-tone generator. Class c is centred on
/// base_hz + spacing_hz·c.
struct SynthSpec {
    std::size_t num_classes = 10;
    std::size_t per_class = 200;
    std::uint64_t seed = 7;
    double base_hz = 300.0;
    double spacing_hz = 120.0;
    double jitter = 0.03;       // relative, uniform in ±jitter
    double noise_sigma = 0.02;  // additive white Gaussian noise
    double duration_s = 0.8;
    std::uint32_t sample_rate = 8000;
    SpectrogramParams spectrogram{};

    /// Narrow class spacing so neighbouring classes overlap in frequency.
    static SynthSpec accent_profile() {
        SynthSpec s;
        s.spacing_hz = 45.0;
        s.jitter = 0.04;
        s.noise_sigma = 0.05;
        return s;
    }

    void validate() const {
        if (num_classes < 2) throw ConfigError("synthetic dataset needs at least two classes");
        if (per_class == 0) throw ConfigError("per_class must be at least 1");
        if (sample_rate == 0 || !(duration_s > 0.0)) throw ConfigError("sample_rate and duration must be positive");
        if (!(jitter >= 0.0) || !(noise_sigma >= 0.0)) throw ConfigError("jitter and noise_sigma must be >= 0");
        spectrogram.validate();
    }

    bool operator==(const SynthSpec&) const = default;
};

struct LabeledClip {
    WavClip clip;
    std::size_t class_id = 0;
};

/// Raw waveforms, class-major: per_class clips of class 0, then class 1, ...
inline std::vector<LabeledClip> synth_clips(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const double nyquist = spec.sample_rate / 2.0;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
    constexpr double kHarmonicGain[] = {1.0, 0.5, 0.25};

    std::vector<LabeledClip> out;
    out.reserve(spec.num_classes * spec.per_class);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        for (std::size_t s = 0; s < spec.per_class; ++s) {
            const double f0 = (spec.base_hz + spec.spacing_hz * static_cast<double>(c)) *
                              (1.0 + rng.uniform(-spec.jitter, spec.jitter));
            const double gain = rng.uniform(0.3, 0.6);
            double phase[3];
            for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
            WavClip clip{spec.sample_rate, std::vector<double>(n)};
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / spec.sample_rate;
                double v = 0.0;
                for (std::size_t h = 0; h < 3; ++h) {
                    const double f = f0 * static_cast<double>(h + 1);
                    if (f >= nyquist) break;
                    v += kHarmonicGain[h] * std::sin(2.0 * std::numbers::pi * f * t + phase[h]);
                }
                clip.samples[i] = gain * v;
            }
            // Noise is drawn even when sigma is zero so the tone parameters of
            // later clips do not depend on the noise level.
            for (double& v : clip.samples) v += spec.noise_sigma * rng.normal();
            out.push_back({std::move(clip), c});
        }
    }
    return out;
}

inline LabeledDataset features_from_clips(const std::vector<LabeledClip>& clips, std::size_t num_classes,
                                          const SpectrogramParams& params) {
    LabeledDataset data{num_classes, params.feature_dim(), {}, {}, {}};
    for (const auto& lc : clips) data.add(log_mel_spectrogram(lc.clip, params).values, lc.class_id);
    return data;
}

/// Deterministic desk-scale stand-in for a spoken-class corpus.
inline LabeledDataset synth_dataset(const SynthSpec& spec) {
    return features_from_clips(synth_clips(spec), spec.num_classes, spec.spectrogram);
}

// Manifest layout: <dir>/labels.csv with header "path,class_id"; paths are
// relative to <dir>.

inline std::vector<LabeledClip> read_manifest_clips(const std::filesystem::path& dir, std::size_t num_classes) {
    const auto csv = dir / "labels.csv";
    std::ifstream in(csv);
    if (!in) throw IoError("cannot open manifest " + csv.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("manifest is empty: " + csv.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "path,class_id") throw ConfigError("manifest header must be 'path,class_id'");

    std::vector<LabeledClip> clips;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw ConfigError("manifest line " + std::to_string(line_no) + ": no comma");
        const std::string rel = line.substr(0, comma);
        const std::string id_text = line.substr(comma + 1);
        std::size_t consumed = 0;
        long long id = -1;
        try {
            id = std::stoll(id_text, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != id_text.size() || id < 0 || static_cast<unsigned long long>(id) >= num_classes)
            throw ConfigError("manifest line " + std::to_string(line_no) + ": class_id '" + id_text +
                              "' outside [0, " + std::to_string(num_classes) + ")");
        clips.push_back({read_wav(dir / rel), static_cast<std::size_t>(id)});
    }
    return clips;
}

inline LabeledDataset load_manifest(const std::filesystem::path& dir, std::size_t num_classes,
                                    const SpectrogramParams& params) {
    return features_from_clips(read_manifest_clips(dir, num_classes), num_classes, params);
}

/// Writes clips as 16-bit WAVs plus labels.csv.
inline void write_manifest(const std::filesystem::path& dir, const std::vector<LabeledClip>& clips) {
    std::filesystem::create_directories(dir / "audio");
    std::ofstream csv(dir / "labels.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (dir / "labels.csv").string());
    csv << "path,class_id\n";
    for (std::size_t i = 0; i < clips.size(); ++i) {
        std::ostringstream name;
        name << "audio/c" << clips[i].class_id << "_" << i << ".wav";
        write_wav(clips[i].clip, dir / name.str());
        csv << name.str() << ',' << clips[i].class_id << '\n';
    }
}

}  // namespace qpae
