#include "atytts/manifest.hpp"

#include <json.hpp>

namespace aty {

std::string origin_name(Origin o) {
    switch (o) {
        case Origin::real: return "real";
        case Origin::tts: return "tts";
        case Origin::vc: return "vc";
        case Origin::augmented: return "augmented";
    }
    throw InvalidInput("unknown origin");
}

Origin origin_from_name(const std::string& s) {
    if (s == "real") return Origin::real;
    if (s == "tts") return Origin::tts;
    if (s == "vc") return Origin::vc;
    if (s == "augmented") return Origin::augmented;
    throw InvalidInput("unknown origin '" + s + "'");
}

std::string UtteranceRecord::to_json_line() const {
    nlohmann::json j;
    j["utterance_id"] = utterance_id;
    j["audio_path"] = audio_path;
    j["transcript"] = transcript;
    j["speaker_id"] = speaker_id;
    if (severity.has_value()) j["severity"] = *severity;
    j["intent"] = intent;
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& [type, value] : entities) {
        ents.push_back(nlohmann::json::array({type, value}));
    }
    j["entities"] = ents;
    j["origin"] = origin_name(origin);
    if (!durations.empty()) j["durations"] = durations;
    if (seed != 0) j["seed"] = seed;
    return j.dump();
}

UtteranceRecord UtteranceRecord::from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    UtteranceRecord r;
    r.utterance_id = j.at("utterance_id");
    r.audio_path = j.at("audio_path");
    r.transcript = j.at("transcript");
    r.speaker_id = j.at("speaker_id");
    if (j.contains("severity")) r.severity = j.at("severity").get<double>();
    r.intent = j.value("intent", "");
    if (j.contains("entities")) {
        for (const auto& e : j.at("entities")) {
            require(e.is_array() && e.size() == 2, "manifest: entity tuple must be [type, value]");
            r.entities.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
        }
    }
    r.origin = origin_from_name(j.value("origin", "real"));
    if (j.contains("durations")) r.durations = j.at("durations").get<std::vector<int>>();
    r.seed = j.value("seed", 0ull);
    return r;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records) {
    std::string out;
    for (const auto& r : records) out += r.to_json_line() + "\n";
    write_text_file(path, out);
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
    std::vector<UtteranceRecord> records;
    for (const auto& raw : split(read_text_file(path), '\n')) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        records.push_back(UtteranceRecord::from_json_line(line));
    }
    return records;
}

}  // namespace aty
