#include "atytts/augment.hpp"

#include <cmath>
#include <json.hpp>

namespace aty::augment {

AugmentPolicy AugmentPolicy::identity() {
    AugmentPolicy p;
    p.time_mask_count = 0;
    p.freq_mask_count = 0;
    p.speed_factors = {1.0};
    p.gain_db_lo = p.gain_db_hi = 0.0;
    p.noise_snr_db_lo = p.noise_snr_db_hi = std::numeric_limits<double>::infinity();
    return p;
}

void AugmentPolicy::validate() const {
    require(time_mask_count >= 0 && freq_mask_count >= 0, "augment policy: counts must be >= 0");
    require(time_mask_max_width >= 0 && freq_mask_max_width >= 0,
            "augment policy: widths must be >= 0");
    require(!speed_factors.empty(), "augment policy: at least one speed factor required");
    for (double s : speed_factors) {
        require(s > 0.0, "augment policy: speed factors must be positive");
    }
    require(gain_db_lo <= gain_db_hi, "augment policy: gain range inverted");
    require(noise_snr_db_lo <= noise_snr_db_hi, "augment policy: snr range inverted");
}

audio::MelSpectrogram spec_augment(const audio::MelSpectrogram& m, const AugmentPolicy& policy,
                                   bool* clamped) {
    policy.validate();
    require(m.n_frames() >= 1 && m.n_mels() >= 1, "spec_augment: empty mel");
    audio::MelSpectrogram out = m;
    if (clamped) *clamped = false;
    if (policy.time_mask_count == 0 && policy.freq_mask_count == 0) return out;

    const double fill = m.frames.mean();
    Rng rng = Rng(policy.seed).derive("spec");

    auto mask_span = [&](int max_width, long dim) -> std::pair<long, long> {
        long w;
        if (max_width >= dim) {
            w = dim;  // clamped to full coverage
            if (clamped) *clamped = true;
        } else {
            w = 1 + static_cast<long>(rng.below(static_cast<uint64_t>(max_width)));
        }
        long start = static_cast<long>(rng.below(static_cast<uint64_t>(dim - w + 1)));
        return {start, w};
    };

    for (int k = 0; k < policy.time_mask_count; ++k) {
        if (policy.time_mask_max_width == 0) break;
        auto [start, w] = mask_span(policy.time_mask_max_width, out.n_frames());
        out.frames.middleRows(start, w).setConstant(fill);
    }
    for (int k = 0; k < policy.freq_mask_count; ++k) {
        if (policy.freq_mask_max_width == 0) break;
        auto [start, w] = mask_span(policy.freq_mask_max_width, out.n_mels());
        out.frames.middleCols(start, w).setConstant(fill);
    }
    return out;
}

audio::Waveform wave_augment(const audio::Waveform& w, const AugmentPolicy& policy) {
    policy.validate();
    require(!w.samples.empty(), "wave_augment: empty waveform");
    Rng rng = Rng(policy.seed).derive("wave");

    audio::Waveform out = w;

    // Speed perturbation: play the signal back at a different rate.
    double speed = policy.speed_factors[rng.below(policy.speed_factors.size())];
    if (speed != 1.0) {
        int virtual_rate = static_cast<int>(std::lround(w.sample_rate / speed));
        out = audio::resample(w, virtual_rate);
        out.sample_rate = w.sample_rate;
    }

    double gain_db = (policy.gain_db_lo == policy.gain_db_hi)
                         ? policy.gain_db_lo
                         : rng.uniform(policy.gain_db_lo, policy.gain_db_hi);
    if (gain_db != 0.0) {
        double g = std::pow(10.0, gain_db / 20.0);
        for (double& s : out.samples) s *= g;
    }

    double snr_db = (policy.noise_snr_db_lo == policy.noise_snr_db_hi)
                        ? policy.noise_snr_db_lo
                        : rng.uniform(policy.noise_snr_db_lo, policy.noise_snr_db_hi);
    if (std::isfinite(snr_db)) {
        double signal_power = 0.0;
        for (double s : out.samples) signal_power += s * s;
        signal_power /= static_cast<double>(out.samples.size());
        if (signal_power > 0.0) {
            std::vector<double> noise(out.samples.size());
            double noise_power = 0.0;
            for (double& n : noise) {
                n = rng.normal();
                noise_power += n * n;
            }
            noise_power /= static_cast<double>(noise.size());
            double target_power = signal_power / std::pow(10.0, snr_db / 10.0);
            double scale = std::sqrt(target_power / noise_power);
            for (size_t i = 0; i < out.samples.size(); ++i) {
                out.samples[i] += scale * noise[i];
            }
        }
    }

    for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
    return out;
}

audio::MelSpectrogram augment_utterance(const audio::Waveform& w,
                                        const audio::FeatureConfig& cfg,
                                        const AugmentPolicy& policy) {
    return spec_augment(audio::mel_spectrogram(wave_augment(w, policy), cfg), policy);
}

void save_policy(const std::filesystem::path& path, const AugmentPolicy& p) {
    nlohmann::json j = {{"time_mask_count", p.time_mask_count},
                        {"time_mask_max_width", p.time_mask_max_width},
                        {"freq_mask_count", p.freq_mask_count},
                        {"freq_mask_max_width", p.freq_mask_max_width},
                        {"speed_factors", p.speed_factors},
                        {"gain_db", {p.gain_db_lo, p.gain_db_hi}},
                        {"noise_snr_db",
                         {std::isfinite(p.noise_snr_db_lo) ? nlohmann::json(p.noise_snr_db_lo)
                                                           : nlohmann::json("inf"),
                          std::isfinite(p.noise_snr_db_hi) ? nlohmann::json(p.noise_snr_db_hi)
                                                           : nlohmann::json("inf")}},
                        {"seed", p.seed}};
    write_text_file(path, j.dump(2) + "\n");
}

AugmentPolicy load_policy(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    AugmentPolicy p;
    p.time_mask_count = j.value("time_mask_count", p.time_mask_count);
    p.time_mask_max_width = j.value("time_mask_max_width", p.time_mask_max_width);
    p.freq_mask_count = j.value("freq_mask_count", p.freq_mask_count);
    p.freq_mask_max_width = j.value("freq_mask_max_width", p.freq_mask_max_width);
    if (j.contains("speed_factors")) p.speed_factors = j["speed_factors"].get<std::vector<double>>();
    auto parse_bound = [](const nlohmann::json& v) {
        return v.is_string() ? std::numeric_limits<double>::infinity() : v.get<double>();
    };
    if (j.contains("gain_db")) {
        p.gain_db_lo = j["gain_db"][0];
        p.gain_db_hi = j["gain_db"][1];
    }
    if (j.contains("noise_snr_db")) {
        p.noise_snr_db_lo = parse_bound(j["noise_snr_db"][0]);
        p.noise_snr_db_hi = parse_bound(j["noise_snr_db"][1]);
    }
    p.seed = j.value("seed", 0ull);
    p.validate();
    return p;
}

}  // namespace aty::augment
