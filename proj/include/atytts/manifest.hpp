#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atytts/common.hpp"

namespace aty {

enum class Origin { real, tts, vc, augmented };

std::string origin_name(Origin o);
Origin origin_from_name(const std::string& s);

// One utterance record; the JSON-lines row format shared by the corpus
// generator, training commands and the SLU harness.
struct UtteranceRecord {
    std::string utterance_id;
    std::string audio_path;  // .wav or .mel container
    std::string transcript;
    std::string speaker_id;
    std::optional<double> severity;  // present for atypical speakers
    std::string intent;
    std::vector<std::pair<std::string, std::string>> entities;  // (type, value)
    Origin origin = Origin::real;
    std::vector<int> durations;  // ground-truth frame durations when known
    uint64_t seed = 0;

    std::string to_json_line() const;
    static UtteranceRecord from_json_line(const std::string& line);
};

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

}  // namespace aty
