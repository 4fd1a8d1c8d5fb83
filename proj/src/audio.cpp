#include "atytts/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace aty::audio {

namespace {

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

std::vector<double> hann_window(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    }
    return w;
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    require(is_pow2(n), "fft size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
    double mel_lo = hz_to_mel(cfg.f_min);
    double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> centers(cfg.n_mels);
    for (int m = 0; m < cfg.n_mels; ++m) {
        centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
    }
    return centers;
}

Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const int n_bins = cfg.n_fft / 2 + 1;
    double mel_lo = hz_to_mel(cfg.f_min);
    double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
    }
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
    for (int m = 0; m < cfg.n_mels; ++m) {
        double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
            double v = 0.0;
            if (f > lo && f < center) {
                v = (f - lo) / (center - lo);
            } else if (f >= center && f < hi) {
                v = (hi - f) / (hi - center);
            }
            fb(m, k) = v;
        }
        // Guarantee a positive row sum even for very narrow low bands.
        if (fb.row(m).sum() <= 0.0) {
            int k = static_cast<int>(std::lround(center * cfg.n_fft / cfg.sample_rate));
            k = std::clamp(k, 0, n_bins - 1);
            fb(m, k) = 1.0;
        }
    }
    return fb;
}

int frame_count(size_t n_samples, const FeatureConfig& cfg) {
    return static_cast<int>(n_samples / static_cast<size_t>(cfg.hop_samples));
}

Eigen::MatrixXd stft_magnitude(const Waveform& w, const FeatureConfig& cfg, bool power) {
    cfg.validate();
    require(!w.samples.empty(), "stft: empty input signal");
    require(w.sample_rate == cfg.sample_rate, "stft: waveform rate does not match config");
    require(w.samples.size() >= static_cast<size_t>(cfg.n_fft),
            "stft: signal shorter than one analysis window");
    const int T = frame_count(w.samples.size(), cfg);
    const int n_bins = cfg.n_fft / 2 + 1;
    // Window centered on each hop segment: frame t covers
    // [t*hop - (n_fft-hop)/2, ...), zero padded at the edges.
    const long pad = (cfg.n_fft - cfg.hop_samples) / 2;
    const auto window = hann_window(cfg.n_fft);
    Eigen::MatrixXd mag(T, n_bins);
    std::vector<std::complex<double>> buf(cfg.n_fft);
    const long n = static_cast<long>(w.samples.size());
    for (int t = 0; t < T; ++t) {
        const long start = static_cast<long>(t) * cfg.hop_samples - pad;
        for (int i = 0; i < cfg.n_fft; ++i) {
            long idx = start + i;
            double s = (idx >= 0 && idx < n) ? w.samples[static_cast<size_t>(idx)] : 0.0;
            buf[i] = s * window[i];
        }
        fft_inplace(buf, false);
        for (int k = 0; k < n_bins; ++k) {
            double m2 = std::norm(buf[k]);
            mag(t, k) = power ? m2 : std::sqrt(m2);
        }
    }
    return mag;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg) {
    Eigen::MatrixXd p = stft_magnitude(w, cfg, /*power=*/true);
    Eigen::MatrixXd fb = mel_filterbank(cfg);
    Eigen::MatrixXd mel = p * fb.transpose();  // T x n_mels
    MelSpectrogram out;
    out.frames = mel.array().max(cfg.log_floor).log().matrix();
    out.frame_hop_ms = cfg.hop_ms();
    return out;
}

namespace {

// Kaiser-free windowed sinc: Hann-windowed, `taps` zero crossings per side.
double sinc_kernel(double x, double cutoff, int taps) {
    if (std::abs(x) >= taps) return 0.0;
    double s = (x == 0.0) ? 1.0 : std::sin(M_PI * x * cutoff) / (M_PI * x);
    if (x == 0.0) s = cutoff;
    double wnd = 0.5 + 0.5 * std::cos(M_PI * x / taps);
    return s * wnd;
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
    require(!w.samples.empty(), "resample: empty input signal");
    require(w.sample_rate > 0 && target_rate > 0, "resample: rates must be positive");
    if (target_rate == w.sample_rate) return w;
    const double ratio = static_cast<double>(target_rate) / w.sample_rate;
    const size_t out_len =
        static_cast<size_t>(std::llround(static_cast<double>(w.samples.size()) * ratio));
    const int taps = 32;
    // When decimating, the anti-alias cutoff sits at the target Nyquist.
    const double cutoff = std::min(1.0, ratio);
    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(std::max<size_t>(out_len, 1));
    const long n = static_cast<long>(w.samples.size());
    for (size_t i = 0; i < out.samples.size(); ++i) {
        const double src_pos = static_cast<double>(i) / ratio;
        const long center = static_cast<long>(std::floor(src_pos));
        const int half = static_cast<int>(std::ceil(taps / cutoff));
        double acc = 0.0;
        for (long j = center - half; j <= center + half + 1; ++j) {
            if (j < 0 || j >= n) continue;
            acc += w.samples[static_cast<size_t>(j)] *
                   sinc_kernel((src_pos - static_cast<double>(j)) * cutoff, 1.0, taps) * cutoff;
        }
        out.samples[i] = acc;
    }
    return out;
}

double mel_l2_distance(const MelSpectrogram& a, const MelSpectrogram& b) {
    int T = std::min(a.n_frames(), b.n_frames());
    require(a.n_mels() == b.n_mels(), "mel distance: bin count mismatch");
    require(T > 0, "mel distance: empty spectrogram");
    return std::sqrt((a.frames.topRows(T) - b.frames.topRows(T)).squaredNorm() /
                     (static_cast<double>(T) * a.n_mels()));
}

GriffinLimResult griffin_lim(const MelSpectrogram& m, const FeatureConfig& cfg, int iters) {
    cfg.validate();
    require(m.n_frames() >= 1, "griffin_lim: empty mel");
    require(m.n_mels() == cfg.n_mels, "griffin_lim: mel bin count does not match config");
    const int T = m.n_frames();
    const int n_bins = cfg.n_fft / 2 + 1;

    // Invert the filterbank: undo the log, then distribute mel energy back to
    // fft bins with the column-normalized transpose.
    Eigen::MatrixXd fb = mel_filterbank(cfg);
    Eigen::MatrixXd fb_t = fb.transpose();  // n_bins x n_mels
    for (int k = 0; k < n_bins; ++k) {
        double s = fb_t.row(k).sum();
        if (s > 0) fb_t.row(k) /= s;
    }
    Eigen::MatrixXd mel_power = m.frames.array().exp().matrix();
    Eigen::MatrixXd target_mag = (mel_power * fb_t.transpose()).array().max(0.0).sqrt().matrix();

    const auto window = hann_window(cfg.n_fft);
    const long pad = (cfg.n_fft - cfg.hop_samples) / 2;
    const size_t out_len = static_cast<size_t>(T) * cfg.hop_samples;

    // ISTFT with overlap-add and window-square normalization.
    auto istft = [&](const std::vector<std::vector<std::complex<double>>>& spec) {
        std::vector<double> acc(out_len + cfg.n_fft, 0.0);
        std::vector<double> norm(out_len + cfg.n_fft, 0.0);
        std::vector<std::complex<double>> buf(cfg.n_fft);
        for (int t = 0; t < T; ++t) {
            for (int k = 0; k < n_bins; ++k) buf[k] = spec[t][k];
            for (int k = n_bins; k < cfg.n_fft; ++k) buf[k] = std::conj(spec[t][cfg.n_fft - k]);
            fft_inplace(buf, true);
            const long start = static_cast<long>(t) * cfg.hop_samples - pad;
            for (int i = 0; i < cfg.n_fft; ++i) {
                long idx = start + i;
                if (idx < 0 || idx >= static_cast<long>(out_len)) continue;
                acc[static_cast<size_t>(idx)] += buf[i].real() * window[i];
                norm[static_cast<size_t>(idx)] += window[i] * window[i];
            }
        }
        std::vector<double> out(out_len);
        for (size_t i = 0; i < out_len; ++i) {
            out[i] = norm[i] > 1e-9 ? acc[i] / norm[i] : 0.0;
        }
        return out;
    };

    auto forward = [&](const std::vector<double>& samples) {
        std::vector<std::vector<std::complex<double>>> spec(
            T, std::vector<std::complex<double>>(n_bins));
        std::vector<std::complex<double>> buf(cfg.n_fft);
        const long n = static_cast<long>(samples.size());
        for (int t = 0; t < T; ++t) {
            const long start = static_cast<long>(t) * cfg.hop_samples - pad;
            for (int i = 0; i < cfg.n_fft; ++i) {
                long idx = start + i;
                double s = (idx >= 0 && idx < n) ? samples[static_cast<size_t>(idx)] : 0.0;
                buf[i] = s * window[i];
            }
            fft_inplace(buf, false);
            for (int k = 0; k < n_bins; ++k) spec[t][k] = buf[k];
        }
        return spec;
    };

    // Phase-zero start.
    std::vector<std::vector<std::complex<double>>> spec(
        T, std::vector<std::complex<double>>(n_bins));
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < n_bins; ++k) spec[t][k] = {target_mag(t, k), 0.0};
    }

    std::vector<double> samples = istft(spec);
    for (int it = 0; it < iters; ++it) {
        auto est = forward(samples);
        for (int t = 0; t < T; ++t) {
            for (int k = 0; k < n_bins; ++k) {
                double mag = std::abs(est[t][k]);
                spec[t][k] = mag > 1e-12 ? est[t][k] * (target_mag(t, k) / mag)
                                         : std::complex<double>(target_mag(t, k), 0.0);
            }
        }
        samples = istft(spec);
    }

    GriffinLimResult res;
    res.wave.sample_rate = cfg.sample_rate;
    res.wave.samples = std::move(samples);
    double peak = 0.0;
    for (double s : res.wave.samples) peak = std::max(peak, std::abs(s));
    if (peak > 1.0) {
        for (double& s : res.wave.samples) s /= peak;
    }
    res.phase_zero = (iters == 0);
    res.iterations_run = iters;
    return res;
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::string& s, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    s.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& s, size_t off) {
    require(off + sizeof(T) <= s.size(), "wav: truncated file");
    T v;
    std::memcpy(&v, s.data() + off, sizeof(T));
    return v;
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& w, bool float32) {
    require(!w.samples.empty(), "write_wav: empty waveform");
    require(w.sample_rate > 0, "write_wav: invalid sample rate");
    const uint16_t fmt = float32 ? 3 : 1;
    const uint16_t bits = float32 ? 32 : 16;
    const uint32_t byte_rate = static_cast<uint32_t>(w.sample_rate) * bits / 8;
    const uint32_t data_size = static_cast<uint32_t>(w.samples.size()) * bits / 8;

    std::string s;
    s.reserve(44 + data_size);
    s += "RIFF";
    put<uint32_t>(s, 36 + data_size);
    s += "WAVEfmt ";
    put<uint32_t>(s, 16);
    put<uint16_t>(s, fmt);
    put<uint16_t>(s, 1);  // mono
    put<uint32_t>(s, static_cast<uint32_t>(w.sample_rate));
    put<uint32_t>(s, byte_rate);
    put<uint16_t>(s, static_cast<uint16_t>(bits / 8));
    put<uint16_t>(s, bits);
    s += "data";
    put<uint32_t>(s, data_size);
    for (double x : w.samples) {
        double c = std::clamp(x, -1.0, 1.0);
        if (float32) {
            put<float>(s, static_cast<float>(c));
        } else {
            put<int16_t>(s, static_cast<int16_t>(std::lround(c * 32767.0)));
        }
    }
    write_text_file(path, s);
}

Waveform read_wav(const std::filesystem::path& path) {
    std::string s = read_text_file(path);
    require(s.size() >= 44 && s.compare(0, 4, "RIFF") == 0 && s.compare(8, 4, "WAVE") == 0,
            "read_wav: not a RIFF/WAVE file: " + path.string());
    size_t off = 12;
    uint16_t fmt = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_size = 0;
    while (off + 8 <= s.size()) {
        std::string id = s.substr(off, 4);
        uint32_t sz = get<uint32_t>(s, off + 4);
        if (id == "fmt ") {
            fmt = get<uint16_t>(s, off + 8);
            channels = get<uint16_t>(s, off + 10);
            rate = get<uint32_t>(s, off + 12);
            bits = get<uint16_t>(s, off + 22);
        } else if (id == "data") {
            data_off = off + 8;
            data_size = sz;
        }
        off += 8 + sz + (sz & 1);
    }
    require(data_off != 0, "read_wav: missing data chunk");
    require(channels == 1, "read_wav: only mono supported");
    require(fmt == 1 || fmt == 3, "read_wav: unsupported format code");
    require(bits == 16 || bits == 32, "read_wav: unsupported bit depth");

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    const size_t bytes = bits / 8;
    const size_t n = std::min(data_size, s.size() - data_off) / bytes;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        if (fmt == 1) {
            w.samples[i] = get<int16_t>(s, data_off + i * bytes) / 32767.0;
        } else {
            w.samples[i] = get<float>(s, data_off + i * bytes);
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// Mel container
// ---------------------------------------------------------------------------

void write_mel(const std::filesystem::path& path, const MelSpectrogram& m) {
    std::string s;
    s += "ATYM";
    put<uint32_t>(s, 1);
    put<uint32_t>(s, static_cast<uint32_t>(m.n_frames()));
    put<uint32_t>(s, static_cast<uint32_t>(m.n_mels()));
    put<double>(s, m.frame_hop_ms);
    for (int t = 0; t < m.n_frames(); ++t) {
        for (int f = 0; f < m.n_mels(); ++f) {
            put<float>(s, static_cast<float>(m.frames(t, f)));
        }
    }
    write_text_file(path, s);
}

MelSpectrogram read_mel(const std::filesystem::path& path) {
    std::string s = read_text_file(path);
    require(s.size() >= 24 && s.compare(0, 4, "ATYM") == 0,
            "read_mel: not an ATYM container: " + path.string());
    uint32_t version = get<uint32_t>(s, 4);
    require(version == 1, "read_mel: unsupported version");
    uint32_t T = get<uint32_t>(s, 8);
    uint32_t F = get<uint32_t>(s, 12);
    MelSpectrogram m;
    m.frame_hop_ms = get<double>(s, 16);
    require(s.size() >= 24 + static_cast<size_t>(T) * F * 4, "read_mel: truncated payload");
    m.frames.resize(T, F);
    size_t off = 24;
    for (uint32_t t = 0; t < T; ++t) {
        for (uint32_t f = 0; f < F; ++f, off += 4) {
            m.frames(t, f) = get<float>(s, off);
        }
    }
    return m;
}

}  // namespace aty::audio
