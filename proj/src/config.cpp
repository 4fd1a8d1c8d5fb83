#include "atytts/config.hpp"

namespace aty {

nlohmann::json default_config_json() {
    return {
        {"audio",
         {{"sample_rate", 22050},
          {"n_fft", 1024},
          {"hop_samples", 256},
          {"n_mels", 80},
          {"f_min", 0.0},
          {"f_max", 8000.0},
          {"log_floor", 1e-5}}},
        {"corpus",
         {{"n_typical", 6},
          {"n_atypical", 8},
          {"utterances_per_speaker", 40},
          {"seed", 1}}},
        {"tts",
         {{"emb_dim", 48},
          {"enc_hidden", 96},
          {"dur_hidden", 48},
          {"dec_hidden", 96},
          {"spk_dim", 16},
          {"crop_frames", 172},
          {"max_frames", 2000},
          {"pretrain_lr", 1e-4},
          {"pretrain_batch", 64},
          {"pretrain_epochs", 200},
          {"model_seed", 1}}},
        {"vc",
         {{"enc_hidden", 96},
          {"bottleneck", 16},
          {"dec_hidden", 96},
          {"spk_dim", 16},
          {"train_lr", 1e-4},
          {"train_batch", 64},
          {"train_epochs", 200},
          {"aty_lr", 5e-5},
          {"aty_epochs", 50},
          {"aty_batch", 8},
          {"model_seed", 2}}},
        {"finetune",
         {{"lr", 5e-5},
          {"batch", 32},
          {"epochs", 50},
          {"hours_aux", 20.0},
          {"lambda_speaker", 1.0},
          {"lambda_atypical", 1.0},
          {"real_utts_per_speaker", 12},
          {"seed", 3}}},
        {"augment",
         {{"time_mask_count", 2},
          {"time_mask_max_width", 27},
          {"freq_mask_count", 2},
          {"freq_mask_max_width", 10},
          {"speed_factors", {0.9, 1.0, 1.1}},
          {"gain_db", {-6.0, 6.0}},
          {"noise_snr_db", {15.0, 30.0}},
          {"copies", 2},
          {"seed", 4}}},
        {"slu",
         {{"chunks", 8},
          {"hidden", 128},
          {"epochs", 30},
          {"batch", 64},
          {"lr", 1e-3}}},
        {"experiment",
         {{"seeds", {1, 2, 3}},
          {"ab_seeds", {1, 2, 3, 4, 5}},
          {"train_fold_fraction", 0.5},
          {"synth_utts_per_speaker", 60},
          {"sweep_hours", {0.0, 0.02, 0.05}},
          {"checkpoint_every", 200}}},
    };
}

namespace {

void deep_merge(nlohmann::json& base, const nlohmann::json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            deep_merge(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

}  // namespace

RunConfig::RunConfig() : j_(default_config_json()) {}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    nlohmann::json overlay;
    try {
        overlay = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput("config: cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(overlay);
}

RunConfig RunConfig::from_json(const nlohmann::json& overrides) {
    RunConfig cfg;
    deep_merge(cfg.j_, overrides);
    return cfg;
}

void RunConfig::set_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0,
            "config override must look like section.key=value: " + assignment);
    std::string path = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
        parsed = value;  // plain string
    }
    nlohmann::json* node = &j_;
    auto keys = split(path, '.');
    for (size_t i = 0; i + 1 < keys.size(); ++i) {
        node = &(*node)[keys[i]];
    }
    (*node)[keys.back()] = parsed;
}

std::string RunConfig::hash() const { return hex64(fnv1a(j_.dump())); }

void RunConfig::save(const std::filesystem::path& path) const {
    write_text_file(path, j_.dump(2) + "\n");
}

audio::FeatureConfig RunConfig::feature() const {
    audio::FeatureConfig f;
    const auto& a = j_.at("audio");
    f.sample_rate = a.at("sample_rate");
    f.n_fft = a.at("n_fft");
    f.hop_samples = a.at("hop_samples");
    f.n_mels = a.at("n_mels");
    f.f_min = a.at("f_min");
    f.f_max = a.at("f_max");
    f.log_floor = a.at("log_floor");
    f.validate();
    return f;
}

corpus::CorpusSpec RunConfig::corpus_spec(const std::filesystem::path& out_dir) const {
    corpus::CorpusSpec s;
    const auto& c = j_.at("corpus");
    s.n_typical = c.at("n_typical");
    s.n_atypical = c.at("n_atypical");
    s.utterances_per_speaker = c.at("utterances_per_speaker");
    s.seed = c.at("seed");
    s.feature = feature();
    s.out_dir = out_dir;
    return s;
}

tts::TtsConfig RunConfig::tts_arch(int vocab_size) const {
    tts::TtsConfig t;
    const auto& c = j_.at("tts");
    t.vocab_size = vocab_size;
    t.n_mels = feature().n_mels;
    t.emb_dim = c.at("emb_dim");
    t.enc_hidden = c.at("enc_hidden");
    t.dur_hidden = c.at("dur_hidden");
    t.dec_hidden = c.at("dec_hidden");
    t.spk_dim = c.at("spk_dim");
    t.crop_frames = c.at("crop_frames");
    t.max_frames = c.at("max_frames");
    return t;
}

vc::VcConfig RunConfig::vc_arch() const {
    vc::VcConfig v;
    const auto& c = j_.at("vc");
    v.n_mels = feature().n_mels;
    v.enc_hidden = c.at("enc_hidden");
    v.bottleneck = c.at("bottleneck");
    v.dec_hidden = c.at("dec_hidden");
    v.spk_dim = c.at("spk_dim");
    return v;
}

augment::AugmentPolicy RunConfig::augment_policy() const {
    augment::AugmentPolicy p;
    const auto& c = j_.at("augment");
    p.time_mask_count = c.at("time_mask_count");
    p.time_mask_max_width = c.at("time_mask_max_width");
    p.freq_mask_count = c.at("freq_mask_count");
    p.freq_mask_max_width = c.at("freq_mask_max_width");
    p.speed_factors = c.at("speed_factors").get<std::vector<double>>();
    p.gain_db_lo = c.at("gain_db")[0];
    p.gain_db_hi = c.at("gain_db")[1];
    p.noise_snr_db_lo = c.at("noise_snr_db")[0];
    p.noise_snr_db_hi = c.at("noise_snr_db")[1];
    p.seed = c.at("seed");
    p.validate();
    return p;
}

slu::SluConfig RunConfig::slu_arch(uint64_t seed) const {
    slu::SluConfig s;
    const auto& c = j_.at("slu");
    s.n_mels = feature().n_mels;
    s.chunks = c.at("chunks");
    s.hidden = c.at("hidden");
    s.seed = seed;
    return s;
}

slu::SluTrainConfig RunConfig::slu_train() const {
    slu::SluTrainConfig t;
    const auto& c = j_.at("slu");
    t.epochs = c.at("epochs");
    t.batch_size = c.at("batch");
    t.lr = c.at("lr");
    return t;
}

double RunConfig::get_num(const std::string& section, const std::string& key) const {
    return j_.at(section).at(key).get<double>();
}

int RunConfig::get_int(const std::string& section, const std::string& key) const {
    return j_.at(section).at(key).get<int>();
}

uint64_t RunConfig::get_u64(const std::string& section, const std::string& key) const {
    return j_.at(section).at(key).get<uint64_t>();
}

RunDir RunDir::create(const std::filesystem::path& root, const RunConfig& config) {
    std::filesystem::create_directories(root);
    config.save(root / "config.json");
    write_text_file(root / "config.hash", config.hash() + "\n");
    return RunDir{root};
}

void RunDir::log(const std::string& key_values) const {
    std::ofstream out(root / "run.log", std::ios::app);
    out << key_values << "\n";
}

std::string tts_metrics_csv(const std::vector<tts::TtsStepResult>& rows) {
    std::string csv = "step,L_encoder,L_duration,L_decoder,total\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        csv += std::to_string(i) + "," + format_double(rows[i].l_encoder) + "," +
               format_double(rows[i].l_duration) + "," + format_double(rows[i].l_decoder) + "," +
               format_double(rows[i].total) + "\n";
    }
    return csv;
}

std::string aty_metrics_csv(const std::vector<finetune::AtyLossBreakdown>& rows) {
    std::string csv = "step,L_encoder,L_duration,L_decoder,L_speaker,L_atypical,total\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        csv += std::to_string(i) + "," + format_double(r.l_encoder) + "," +
               format_double(r.l_duration) + "," + format_double(r.l_decoder) + "," +
               format_double(r.l_speaker) + "," + format_double(r.l_atypical) + "," +
               format_double(r.total) + "\n";
    }
    return csv;
}

}  // namespace aty
