#pragma once

#include <json.hpp>

#include "atytts/audio.hpp"
#include "atytts/augment.hpp"
#include "atytts/corpus.hpp"
#include "atytts/finetune.hpp"
#include "atytts/slu.hpp"
#include "atytts/tts.hpp"
#include "atytts/vc.hpp"

namespace aty {

// One structured config file with a section per module; CLI flags override
// individual keys by dot path. The full snapshot (and its hash) is recorded
// in every run directory.
class RunConfig {
  public:
    RunConfig();  // defaults

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::json& overrides);

    // "section.key=value" (value parsed as JSON when possible, else string).
    void set_override(const std::string& dotted_assignment);

    const nlohmann::json& json() const { return j_; }
    std::string hash() const;
    void save(const std::filesystem::path& path) const;

    audio::FeatureConfig feature() const;
    corpus::CorpusSpec corpus_spec(const std::filesystem::path& out_dir) const;
    tts::TtsConfig tts_arch(int vocab_size) const;
    vc::VcConfig vc_arch() const;
    augment::AugmentPolicy augment_policy() const;
    slu::SluConfig slu_arch(uint64_t seed) const;
    slu::SluTrainConfig slu_train() const;

    // Scalar access for trainer settings.
    double get_num(const std::string& section, const std::string& key) const;
    int get_int(const std::string& section, const std::string& key) const;
    uint64_t get_u64(const std::string& section, const std::string& key) const;

  private:
    nlohmann::json j_;
};

nlohmann::json default_config_json();

// Run directory: config snapshot + hash, machine-parseable key=value log.
struct RunDir {
    std::filesystem::path root;

    static RunDir create(const std::filesystem::path& root, const RunConfig& config);
    void log(const std::string& key_values) const;  // appends one line to run.log
    std::filesystem::path file(const std::string& name) const { return root / name; }
};

// Deterministic CSV writers for the training metrics logs.
std::string tts_metrics_csv(const std::vector<tts::TtsStepResult>& rows);
std::string aty_metrics_csv(const std::vector<finetune::AtyLossBreakdown>& rows);

}  // namespace aty
