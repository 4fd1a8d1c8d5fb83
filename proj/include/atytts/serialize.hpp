#pragma once

#include <json.hpp>

#include "atytts/audio.hpp"

namespace aty::audio {

inline void to_json(nlohmann::json& j, const FeatureConfig& c) {
    j = nlohmann::json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},
                       {"hop_samples", c.hop_samples}, {"n_mels", c.n_mels},
                       {"f_min", c.f_min},             {"f_max", c.f_max},
                       {"log_floor", c.log_floor}};
}

inline void from_json(const nlohmann::json& j, FeatureConfig& c) {
    j.at("sample_rate").get_to(c.sample_rate);
    j.at("n_fft").get_to(c.n_fft);
    j.at("hop_samples").get_to(c.hop_samples);
    j.at("n_mels").get_to(c.n_mels);
    j.at("f_min").get_to(c.f_min);
    j.at("f_max").get_to(c.f_max);
    j.at("log_floor").get_to(c.log_floor);
}

}  // namespace aty::audio

namespace aty::nn {
class ParamStore;
}

namespace aty {

// Versioned checkpoint container: magic "ATYC", u32 version, u64 header
// length, JSON header bytes, then the named parameter payload.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const nn::ParamStore& params);

nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Loads the payload into an already-constructed store (names/shapes must match).
void read_checkpoint_params(const std::filesystem::path& path, nn::ParamStore& params);

}  // namespace aty
