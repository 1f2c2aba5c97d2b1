#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "qpae/error.hpp"
#include "qpae/matrix.hpp"
#include "qpae/wav.hpp"

namespace qpae {

/// Floor added to mel power before the log; silence maps to log(kPowerFloor).
inline constexpr double kPowerFloor = 1e-6;

struct SpectrogramParams {
    std::size_t n_fft = 256;
    std::size_t hop = 128;
    std::size_t n_mels = 32;
    std::size_t target_frames = 32;

    void validate() const {
        if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) throw ConfigError("n_fft must be a power of two >= 2");
        if (hop == 0) throw ConfigError("hop must be at least 1");
        if (n_mels == 0 || n_mels > n_fft / 2) throw ConfigError("n_mels must lie in [1, n_fft/2]");
        if (target_frames == 0) throw ConfigError("target_frames must be at least 1");
    }

    std::size_t feature_dim() const noexcept { return n_mels * target_frames; }

    bool operator==(const SpectrogramParams&) const = default;
};

/// Log-mel magnitudes, mel-major: values[m * n_frames + t].
struct SpectrogramFeature {
    std::size_t n_mels = 0;
    std::size_t n_frames = 0;
    std::vector<double> values;

    double at(std::size_t mel, std::size_t frame) const noexcept { return values[mel * n_frames + frame]; }
    std::size_t flattened_dim() const noexcept { return n_mels * n_frames; }
};

inline double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Weight of triangular mel filter `band` at frequency `hz`. Filters have
/// edges equally spaced on the mel scale over [0, sample_rate/2].
inline double mel_filter_weight(std::size_t band, double hz, double sample_rate, std::size_t n_mels) noexcept {
    const double top = hz_to_mel(sample_rate / 2.0);
    const double step = top / static_cast<double>(n_mels + 1);
    const double lo = mel_to_hz(step * static_cast<double>(band));
    const double mid = mel_to_hz(step * static_cast<double>(band + 1));
    const double hi = mel_to_hz(step * static_cast<double>(band + 2));
    if (hz <= lo || hz >= hi) return 0.0;
    return hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
}

/// n_mels × (n_fft/2 + 1) filterbank sampled at the DFT bin frequencies.
inline Matrix mel_filterbank(double sample_rate, std::size_t n_fft, std::size_t n_mels) {
    const std::size_t n_bins = n_fft / 2 + 1;
    Matrix fb(n_mels, n_bins);
    for (std::size_t m = 0; m < n_mels; ++m)
        for (std::size_t k = 0; k < n_bins; ++k)
            fb(m, k) = mel_filter_weight(m, static_cast<double>(k) * sample_rate / static_cast<double>(n_fft),
                                         sample_rate, n_mels);
    return fb;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

namespace detail {

// Owns one real-to-complex FFTW plan and its buffers.
class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n),
          in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
          out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
        if (!in_ || !out_) throw std::bad_alloc();
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
        if (!plan_) throw Error("fftw: plan creation failed");
    }
    ~RealFft() { fftw_destroy_plan(plan_); }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() noexcept { return in_.get(); }

    /// |X_k|² for k in [0, n/2].
    void power(std::vector<double>& out) {
        fftw_execute(plan_);
        out.resize(n_ / 2 + 1);
        const fftw_complex* x = out_.get();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k][0] * x[k][0] + x[k][1] * x[k][1];
    }

private:
    struct Free {
        void operator()(void* p) const noexcept { fftw_free(p); }
    };
    std::size_t n_;
    std::unique_ptr<double, Free> in_;
    std::unique_ptr<fftw_complex, Free> out_;
    fftw_plan plan_ = nullptr;
};

}  // namespace detail

/// Hann-windowed power spectra of non-centered frames, start = t·hop.
/// Clips shorter than one window yield a single zero-padded frame.
inline std::vector<std::vector<double>> power_spectrogram(const WavClip& clip, std::size_t n_fft, std::size_t hop) {
    const std::size_t n = clip.samples.size();
    const std::size_t frames = n <= n_fft ? 1 : 1 + (n - n_fft) / hop;
    const auto window = hann_window(n_fft);
    detail::RealFft fft(n_fft);
    std::vector<std::vector<double>> spec(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        double* buf = fft.input();
        const std::size_t start = t * hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            const std::size_t idx = start + i;
            buf[i] = idx < n ? clip.samples[idx] * window[i] : 0.0;
        }
        fft.power(spec[t]);
    }
    return spec;
}

/// Log-mel spectrogram with the time axis center-cropped or padded with
/// silence frames to exactly `target_frames`.
inline SpectrogramFeature log_mel_spectrogram(const WavClip& clip, const SpectrogramParams& params) {
    params.validate();
    if (clip.sample_rate == 0 || clip.samples.empty()) throw ShapeError("clip needs a sample rate and samples");
    const auto power = power_spectrogram(clip, params.n_fft, params.hop);
    const auto fb = mel_filterbank(static_cast<double>(clip.sample_rate), params.n_fft, params.n_mels);

    const std::size_t have = power.size();
    const std::size_t want = params.target_frames;
    SpectrogramFeature out{params.n_mels, want, std::vector<double>(params.n_mels * want, std::log(kPowerFloor))};
    // Source frame s lands in output column s - src_offset + dst_offset.
    const std::size_t src_offset = have > want ? (have - want) / 2 : 0;
    const std::size_t dst_offset = have < want ? (want - have) / 2 : 0;
    const std::size_t count = std::min(have, want);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& frame = power[src_offset + i];
        for (std::size_t m = 0; m < params.n_mels; ++m) {
            double e = 0.0;
            const auto w = fb.row(m);
            for (std::size_t k = 0; k < frame.size(); ++k) e += w[k] * frame[k];
            out.values[m * want + dst_offset + i] = std::log(kPowerFloor + e);
        }
    }
    return out;
}

}  // namespace qpae
