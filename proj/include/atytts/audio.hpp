#pragma once

#include <Eigen/Dense>
#include <complex>
#include <filesystem>
#include <vector>

#include "atytts/common.hpp"

namespace aty::audio {

struct Waveform {
    std::vector<double> samples;  // amplitude in [-1, 1]
    int sample_rate = 0;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

struct FeatureConfig {
    int sample_rate = 22050;
    int n_fft = 1024;        // 46.4 ms window at 22.05 kHz
    int hop_samples = 256;   // 11.6 ms hop
    int n_mels = 80;
    double f_min = 0.0;
    double f_max = 8000.0;
    double log_floor = 1e-5;

    double hop_ms() const { return 1000.0 * hop_samples / sample_rate; }
    double win_ms() const { return 1000.0 * n_fft / sample_rate; }

    void validate() const {
        require(sample_rate > 0, "feature config: sample_rate must be positive");
        require(hop_samples > 0 && hop_samples <= n_fft,
                "feature config: hop_samples must be in (0, n_fft]");
        require(n_mels > 0 && n_mels <= n_fft / 2 + 1,
                "feature config: n_mels must be <= n_fft/2 + 1");
    }
};

struct MelSpectrogram {
    Eigen::MatrixXd frames;  // T x F, log-mel energy
    double frame_hop_ms = 0.0;

    int n_frames() const { return static_cast<int>(frames.rows()); }
    int n_mels() const { return static_cast<int>(frames.cols()); }
};

// Radix-2 FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Triangular filterbank on the HTK mel scale, rows = mel bands, cols = fft bins.
// Deterministic; every row is non-negative with positive sum.
Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg);

// Center frequencies (Hz) of the mel bands, used as the oracle for tone tests.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Frame count of the framing convention: one frame per full hop,
// T = floor(n_samples / hop), windows centered on their hop segment.
int frame_count(size_t n_samples, const FeatureConfig& cfg);

// Magnitude STFT (power if `power` is true), T x (n_fft/2 + 1).
Eigen::MatrixXd stft_magnitude(const Waveform& w, const FeatureConfig& cfg, bool power);

MelSpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg);

// Windowed-sinc resampler. Preserves duration within one sample period.
Waveform resample(const Waveform& w, int target_rate);

struct GriffinLimResult {
    Waveform wave;
    bool phase_zero = false;  // true when iters == 0 (no phase refinement ran)
    int iterations_run = 0;
};

GriffinLimResult griffin_lim(const MelSpectrogram& m, const FeatureConfig& cfg, int iters);

// Spectral distance used by the Griffin-Lim convergence checks.
double mel_l2_distance(const MelSpectrogram& a, const MelSpectrogram& b);

// Mono WAV I/O. Writes 16-bit PCM or 32-bit float; reads either, any rate.
void write_wav(const std::filesystem::path& path, const Waveform& w, bool float32 = false);
Waveform read_wav(const std::filesystem::path& path);

// Flat binary mel container: magic "ATYM", version u32, T u32, F u32,
// hop_ms f64, row-major f32 payload. Bit-exact round trip at f32 precision.
void write_mel(const std::filesystem::path& path, const MelSpectrogram& m);
MelSpectrogram read_mel(const std::filesystem::path& path);

}  // namespace aty::audio
