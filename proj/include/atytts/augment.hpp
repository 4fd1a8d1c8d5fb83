#pragma once

#include <limits>
#include <vector>

#include "atytts/audio.hpp"
#include "atytts/rng.hpp"

namespace aty::augment {

struct AugmentPolicy {
    int time_mask_count = 2;
    int time_mask_max_width = 27;  // frames
    int freq_mask_count = 2;
    int freq_mask_max_width = 10;  // mel bins
    std::vector<double> speed_factors = {0.9, 1.0, 1.1};
    double gain_db_lo = -6.0;
    double gain_db_hi = 6.0;
    double noise_snr_db_lo = 15.0;
    double noise_snr_db_hi = 30.0;  // +inf disables noise
    uint64_t seed = 0;

    static AugmentPolicy identity();
    void validate() const;
};

// Time/frequency masking; masked cells take the per-utterance mean, all other
// cells stay bit-identical. A mask width >= the dimension is clamped to cover
// it fully (reported through `clamped`).
audio::MelSpectrogram spec_augment(const audio::MelSpectrogram& m, const AugmentPolicy& policy,
                                   bool* clamped = nullptr);

// Seeded speed perturbation, gain, and additive white noise at a sampled SNR.
// Output is clipped to [-1, 1]. Length changes only through the speed factor.
audio::Waveform wave_augment(const audio::Waveform& w, const AugmentPolicy& policy);

// Fixed composition order: wave_augment first, then mel extraction, then
// spec_augment.
audio::MelSpectrogram augment_utterance(const audio::Waveform& w,
                                        const audio::FeatureConfig& cfg,
                                        const AugmentPolicy& policy);

void save_policy(const std::filesystem::path& path, const AugmentPolicy& policy);
AugmentPolicy load_policy(const std::filesystem::path& path);

}  // namespace aty::augment
