#include "atytts/corpus.hpp"

#include <cmath>
#include <json.hpp>
#include <map>

#include "atytts/rng.hpp"

namespace aty::corpus {

namespace {

struct PhonemeInfo {
    double m1, m2, m3;  // formant multipliers on the speaker basis
    double amp;
    double dur_ms;
    bool silent;
};

const std::map<std::string, PhonemeInfo>& phoneme_table() {
    static const std::map<std::string, PhonemeInfo> table = {
        {"sil", {0, 0, 0, 0.0, 90, true}},
        {"sp", {0, 0, 0, 0.0, 70, true}},
        {"aa", {1.46, 0.73, 0.98, 1.00, 130, false}},
        {"ae", {1.32, 1.15, 0.96, 1.00, 125, false}},
        {"ah", {1.28, 0.79, 0.96, 1.00, 110, false}},
        {"eh", {1.06, 1.23, 0.99, 1.00, 115, false}},
        {"iy", {0.54, 1.53, 1.20, 1.00, 120, false}},
        {"ow", {1.14, 0.56, 0.96, 1.00, 125, false}},
        {"uw", {0.60, 0.58, 0.90, 1.00, 120, false}},
        {"b", {0.50, 0.90, 1.10, 0.50, 55, false}},
        {"d", {0.70, 1.40, 1.30, 0.50, 55, false}},
        {"f", {1.80, 2.60, 2.20, 0.45, 70, false}},
        {"g", {0.60, 1.10, 0.85, 0.50, 60, false}},
        {"h", {1.00, 1.00, 1.40, 0.40, 60, false}},
        {"j", {0.80, 1.60, 1.50, 0.55, 70, false}},
        {"k", {0.90, 1.30, 0.70, 0.50, 60, false}},
        {"l", {0.72, 0.80, 1.35, 0.75, 70, false}},
        {"m", {0.50, 0.70, 0.88, 0.70, 70, false}},
        {"n", {0.56, 1.10, 1.02, 0.70, 65, false}},
        {"p", {0.75, 0.60, 1.20, 0.45, 55, false}},
        {"r", {0.96, 0.70, 0.64, 0.75, 70, false}},
        {"s", {2.40, 3.00, 2.70, 0.50, 80, false}},
        {"t", {1.60, 2.20, 1.90, 0.45, 55, false}},
        {"v", {0.66, 1.00, 1.55, 0.55, 60, false}},
        {"w", {0.58, 0.46, 0.95, 0.70, 65, false}},
        {"z", {2.10, 2.70, 2.40, 0.55, 75, false}},
        {"sh", {1.90, 2.30, 2.00, 0.50, 80, false}},
    };
    return table;
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& word_table() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> words = {
        {"hey", {"h", "eh", "iy"}},
        {"jay", {"j", "eh", "iy"}},
        {"turn", {"t", "ah", "r", "n"}},
        {"switch", {"s", "w", "iy", "t", "sh"}},
        {"on", {"aa", "n"}},
        {"off", {"aa", "f"}},
        {"the", {"d", "ah"}},
        {"set", {"s", "eh", "t"}},
        {"to", {"t", "uw"}},
        {"level", {"l", "eh", "v", "ah", "l"}},
        {"play", {"p", "l", "eh", "iy"}},
        {"put", {"p", "uw", "t"}},
        {"music", {"m", "j", "uw", "z", "iy", "k"}},
        {"what", {"w", "aa", "t"}},
        {"is", {"iy", "z"}},
        {"weather", {"w", "eh", "d", "ah", "r"}},
        {"in", {"iy", "n"}},
        {"call", {"k", "aa", "l"}},
        {"ring", {"r", "iy", "n", "g"}},
        {"lamp", {"l", "ae", "m", "p"}},
        {"fan", {"f", "ae", "n"}},
        {"heater", {"h", "iy", "t", "ah", "r"}},
        {"radio", {"r", "eh", "iy", "d", "iy", "ow"}},
        {"one", {"w", "ah", "n"}},
        {"two", {"t", "uw"}},
        {"three", {"t", "r", "iy"}},
        {"four", {"f", "ow", "r"}},
        {"five", {"f", "aa", "iy", "v"}},
        {"jazz", {"j", "ae", "z"}},
        {"rock", {"r", "aa", "k"}},
        {"folk", {"f", "ow", "k"}},
        {"boston", {"b", "aa", "s", "t", "ah", "n"}},
        {"dublin", {"d", "ah", "b", "l", "iy", "n"}},
        {"oslo", {"aa", "z", "l", "ow"}},
        {"mom", {"m", "aa", "m"}},
        {"alex", {"ae", "l", "eh", "k", "s"}},
        {"sam", {"s", "ae", "m"}},
    };
    return words;
}

struct Template {
    std::string intent;
    std::vector<std::string> variants;        // "{slot}" placeholders
    std::vector<std::string> slots;           // slot types used
};

const std::vector<Template>& templates() {
    static const std::vector<Template> t = {
        {"turn_on", {"hey jay turn on the {device}", "hey jay switch on the {device}"}, {"device"}},
        {"turn_off",
         {"hey jay turn off the {device}", "hey jay switch off the {device}"},
         {"device"}},
        {"set_level", {"hey jay set the {device} to level {level}"}, {"device", "level"}},
        {"play_music", {"hey jay play {genre} music", "hey jay put on {genre} music"}, {"genre"}},
        {"get_weather", {"hey jay what is the weather in {city}"}, {"city"}},
        {"call_contact", {"hey jay call {contact}", "hey jay ring {contact}"}, {"contact"}},
    };
    return t;
}

const std::map<std::string, std::vector<std::string>>& slot_values() {
    static const std::map<std::string, std::vector<std::string>> v = {
        {"device", {"lamp", "fan", "heater", "radio"}},
        {"level", {"one", "two", "three", "four", "five"}},
        {"genre", {"jazz", "rock", "folk"}},
        {"city", {"boston", "dublin", "oslo"}},
        {"contact", {"mom", "alex", "sam"}},
    };
    return v;
}

}  // namespace

AtypicalTransform AtypicalTransform::from_severity(double severity) {
    require(severity >= 0.0 && severity <= 4.0, "severity must be in [0, 4]");
    AtypicalTransform t;
    t.time_stretch = 1.0 + 0.20 * severity;
    t.spectral_tilt = -1.2 * severity;
    t.jitter_depth = 0.012 * severity;
    t.pause_scale = 1.0 + 0.30 * severity;
    return t;
}

bool AtypicalTransform::is_identity() const {
    return time_stretch == 1.0 && spectral_tilt == 0.0 && jitter_depth == 0.0 &&
           pause_scale == 1.0;
}

SyntheticSpeakerProfile make_profile(const std::string& speaker_id, bool atypical,
                                     double severity, uint64_t master_seed) {
    require(atypical ? severity > 0.0 : severity == 0.0,
            "profile: severity must be 0 iff the speaker is typical");
    Rng rng = Rng(master_seed).derive("speaker_" + speaker_id);
    SyntheticSpeakerProfile p;
    p.speaker_id = speaker_id;
    double gamma = rng.uniform(0.85, 1.18);
    p.base_formants = {500.0 * gamma + rng.uniform(-25.0, 25.0),
                       1500.0 * gamma + rng.uniform(-60.0, 60.0),
                       2500.0 * gamma + rng.uniform(-90.0, 90.0)};
    p.pitch_hz = rng.uniform(110.0, 230.0);
    p.atypical = atypical;
    p.severity = severity;
    p.transform = AtypicalTransform::from_severity(severity);
    return p;
}

text::Lexicon corpus_lexicon() {
    text::Lexicon lex;
    for (const auto& [word, phs] : word_table()) lex.add(word, phs);
    return lex;
}

text::PhonemeVocabulary corpus_vocabulary() {
    std::vector<std::string> symbols;
    for (const auto& [sym, info] : phoneme_table()) symbols.push_back(sym);
    for (char c = 'a'; c <= 'z'; ++c) symbols.push_back(text::fallback_symbol(c));
    symbols.push_back(text::fallback_symbol('\''));
    for (char c = '0'; c <= '9'; ++c) symbols.push_back(text::fallback_symbol(c));
    return text::PhonemeVocabulary::from_symbols(symbols);
}

std::vector<int> phonemize_with_silences(const std::string& text, const text::Lexicon& lexicon,
                                         const text::PhonemeVocabulary& vocab) {
    std::string norm = text::normalize_text(text);
    require(!norm.empty(), "phonemize_with_silences: empty text");
    std::vector<int> ids;
    ids.push_back(vocab.id_of("sil"));
    bool first = true;
    for (const auto& word : split(norm, ' ')) {
        if (word.empty()) continue;
        if (!first) ids.push_back(vocab.id_of("sp"));
        first = false;
        if (lexicon.contains(word)) {
            for (const auto& ph : lexicon.phonemes_of(word)) ids.push_back(vocab.id_of(ph));
        } else {
            for (char c : word) ids.push_back(vocab.id_of(text::fallback_symbol(c)));
        }
    }
    ids.push_back(vocab.id_of("sil"));
    return ids;
}

uint64_t utterance_seed(uint64_t master_seed, const std::string& text) {
    return fnv1a(text, master_seed ^ 0x51ed270b7a4aa117ull);
}

RenderResult render_utterance(const std::string& text, const SyntheticSpeakerProfile& profile,
                              const audio::FeatureConfig& cfg, uint64_t seed,
                              const std::vector<int>* duration_override) {
    cfg.validate();
    require(profile.base_formants.size() == 3, "render: profile needs three base formants");
    const auto lex = corpus_lexicon();
    const auto vocab = corpus_vocabulary();
    const auto& table = phoneme_table();

    std::vector<int> ids = phonemize_with_silences(text, lex, vocab);
    const size_t L = ids.size();
    std::vector<const PhonemeInfo*> info(L);
    std::vector<std::string> symbols(L);
    for (size_t i = 0; i < L; ++i) {
        symbols[i] = vocab.symbol_of(ids[i]);
        auto it = table.find(symbols[i]);
        require(it != table.end(), "render: '" + symbols[i] + "' is not a corpus phoneme");
        info[i] = &it->second;
    }

    const AtypicalTransform& tr = profile.transform;
    Rng urng(seed);

    // Phoneme boundaries in samples.
    std::vector<long> bounds(L + 1, 0);
    if (duration_override) {
        require(duration_override->size() == L,
                "render: duration override length does not match phoneme count");
        long acc = 0;
        for (size_t i = 0; i < L; ++i) {
            require((*duration_override)[i] >= 1, "render: override durations must be >= 1");
            acc += static_cast<long>((*duration_override)[i]) * cfg.hop_samples;
            bounds[i + 1] = acc;
        }
    } else {
        double acc_ms = 0.0;
        for (size_t i = 0; i < L; ++i) {
            double jitter = 1.0 + 0.08 * (2.0 * urng.derive("dur", i).uniform() - 1.0);
            double pause = info[i]->silent ? tr.pause_scale : 1.0;
            acc_ms += info[i]->dur_ms * jitter * pause * tr.time_stretch;
            bounds[i + 1] = std::llround(acc_ms * cfg.sample_rate / 1000.0);
        }
    }
    const long total_samples = bounds[L];
    const int T = audio::frame_count(static_cast<size_t>(total_samples), cfg);
    require(T >= 1, "render: utterance shorter than one frame");

    // Ground-truth frame durations from frame centers.
    std::vector<int> durations(L, 0);
    {
        size_t ph = 0;
        for (int f = 0; f < T; ++f) {
            long center = static_cast<long>(f) * cfg.hop_samples + cfg.hop_samples / 2;
            while (ph + 1 < L && center >= bounds[ph + 1]) ++ph;
            ++durations[ph];
        }
    }

    // Harmonic-stack synthesis.
    audio::Waveform wave;
    wave.sample_rate = cfg.sample_rate;
    wave.samples.assign(static_cast<size_t>(total_samples), 0.0);

    const double drift_phase = 2.0 * M_PI * urng.derive("drift").uniform();
    const double jit_phase = 2.0 * M_PI * urng.derive("jitter").uniform();
    const int n_harm = std::clamp(static_cast<int>(7800.0 / profile.pitch_hz), 6, 34);
    std::vector<double> phase(n_harm, 0.0);
    std::vector<double> amp(n_harm, 0.0);

    const double A[3] = {1.0, 0.63, 0.32};
    const long ramp = std::lround(0.004 * cfg.sample_rate);  // 4 ms boundary ramps

    size_t ph = 0;
    for (long t = 0; t < total_samples; ++t) {
        while (ph + 1 < L && t >= bounds[ph + 1]) ++ph;
        const PhonemeInfo& pi = *info[ph];
        const double ts = static_cast<double>(t) / cfg.sample_rate;
        const double pitch =
            profile.pitch_hz * (1.0 + 0.02 * std::sin(2.0 * M_PI * 0.6 * ts + drift_phase) +
                                tr.jitter_depth * std::sin(2.0 * M_PI * 5.5 * ts + jit_phase));

        // Refresh harmonic amplitudes at hop boundaries (slow-varying).
        if (t % cfg.hop_samples == 0) {
            double sum = 0.0;
            for (int h = 0; h < n_harm; ++h) {
                double f = (h + 1) * pitch;
                double env = 0.015;
                for (int k = 0; k < 3; ++k) {
                    double fk = profile.base_formants[static_cast<size_t>(k)] *
                                (k == 0 ? pi.m1 : (k == 1 ? pi.m2 : pi.m3));
                    double bw = 70.0 + 0.08 * fk;
                    double d = (f - fk) / bw;
                    env += A[k] * std::exp(-0.5 * d * d);
                }
                double tilt = 1.0;
                if (tr.spectral_tilt != 0.0 && f > 200.0) {
                    tilt = std::pow(10.0, tr.spectral_tilt * std::log2(f / 200.0) / 20.0);
                }
                amp[h] = env * tilt * pi.amp;
                sum += amp[h];
            }
            double norm = 0.5 / std::max(sum, 1e-9);
            for (int h = 0; h < n_harm; ++h) amp[h] *= norm;
        }

        double gate = 1.0;
        long into = t - bounds[ph];
        long left = bounds[ph + 1] - t;
        if (into < ramp) gate *= 0.5 - 0.5 * std::cos(M_PI * into / ramp);
        if (left < ramp) gate *= 0.5 - 0.5 * std::cos(M_PI * left / ramp);

        double s = 0.0;
        for (int h = 0; h < n_harm; ++h) {
            phase[h] += 2.0 * M_PI * (h + 1) * pitch / cfg.sample_rate;
            if (!pi.silent) s += amp[h] * std::sin(phase[h]);
        }
        wave.samples[static_cast<size_t>(t)] = std::clamp(s * gate, -1.0, 1.0);
    }

    RenderResult out;
    out.mel = audio::mel_spectrogram(wave, cfg);
    require(out.mel.n_frames() == T, "render: frame bookkeeping mismatch");
    out.wave = std::move(wave);
    out.durations = std::move(durations);
    out.phoneme_ids = std::move(ids);
    return out;
}

// --- corpus generation -----------------------------------------------------------

std::vector<std::string> intent_labels() {
    std::vector<std::string> labels;
    for (const auto& t : templates()) labels.push_back(t.intent);
    return labels;
}

std::vector<std::pair<std::string, std::string>> entity_tuple_space() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [type, values] : slot_values()) {
        for (const auto& v : values) out.emplace_back(type, v);
    }
    return out;
}

SentenceSpec make_sentence(uint64_t master_seed, uint64_t index) {
    const auto& tpls = templates();
    Rng rng = Rng(master_seed).derive("sentence", index);
    const Template& tpl = tpls[index % tpls.size()];
    std::string text = tpl.variants[rng.below(tpl.variants.size())];

    SentenceSpec s;
    s.intent = tpl.intent;
    for (const auto& slot : tpl.slots) {
        const auto& values = slot_values().at(slot);
        const std::string& value = values[rng.below(values.size())];
        std::string placeholder = "{" + slot + "}";
        size_t pos = text.find(placeholder);
        require(pos != std::string::npos, "template is missing placeholder " + placeholder);
        text.replace(pos, placeholder.size(), value);
        s.entities.emplace_back(slot, value);
    }
    s.text = text;
    return s;
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec) {
    require(spec.n_typical >= 1 && spec.n_atypical >= 0, "corpus: speaker counts must be positive");
    require(spec.utterances_per_speaker >= 1, "corpus: utterance count must be positive");
    require(!spec.out_dir.empty(), "corpus: out_dir required");
    std::filesystem::create_directories(spec.out_dir / "wav");

    GeneratedCorpus out;
    for (int k = 0; k < spec.utterances_per_speaker; ++k) {
        out.sentences.push_back(make_sentence(spec.seed, static_cast<uint64_t>(k)));
    }

    // Severity pattern: half the atypical speakers Low (<= 1.5), half High.
    const std::vector<double> lows = {0.8, 1.2, 1.4, 1.0, 1.3, 1.5};
    const std::vector<double> highs = {2.2, 2.9, 3.5, 2.5, 3.1, 3.8};
    char name[16];
    for (int i = 0; i < spec.n_typical; ++i) {
        std::snprintf(name, sizeof(name), "T%02d", i);
        out.profiles.push_back(make_profile(name, false, 0.0, spec.seed));
    }
    for (int i = 0; i < spec.n_atypical; ++i) {
        std::snprintf(name, sizeof(name), "A%02d", i);
        double severity =
            (i % 2 == 0) ? lows[static_cast<size_t>(i / 2) % lows.size()]
                         : highs[static_cast<size_t>(i / 2) % highs.size()];
        out.profiles.push_back(make_profile(name, true, severity, spec.seed));
    }

    for (const auto& profile : out.profiles) {
        for (int k = 0; k < spec.utterances_per_speaker; ++k) {
            const SentenceSpec& sent = out.sentences[static_cast<size_t>(k)];
            uint64_t useed = utterance_seed(spec.seed, sent.text);
            RenderResult render = render_utterance(sent.text, profile, spec.feature, useed);

            char utt[24];
            std::snprintf(utt, sizeof(utt), "%s_%04d", profile.speaker_id.c_str(), k);
            UtteranceRecord rec;
            rec.utterance_id = utt;
            rec.audio_path = "wav/" + std::string(utt) + ".wav";
            rec.transcript = sent.text;
            rec.speaker_id = profile.speaker_id;
            if (profile.atypical) rec.severity = profile.severity;
            rec.intent = sent.intent;
            rec.entities = sent.entities;
            rec.origin = Origin::real;
            rec.durations = render.durations;
            rec.seed = useed;
            out.manifest.push_back(rec);

            if (spec.write_wavs) {
                audio::write_wav(spec.out_dir / rec.audio_path, render.wave);
            }
        }
    }

    write_manifest(spec.out_dir / "manifest.jsonl", out.manifest);
    corpus_lexicon().save(spec.out_dir / "lexicon.txt");
    corpus_vocabulary().save(spec.out_dir / "vocab.txt");
    write_profiles(spec.out_dir / "profiles.json", out.profiles);
    return out;
}

void write_profiles(const std::filesystem::path& path,
                    const std::vector<SyntheticSpeakerProfile>& profiles) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : profiles) {
        arr.push_back({{"speaker_id", p.speaker_id},
                       {"base_formants", p.base_formants},
                       {"pitch_hz", p.pitch_hz},
                       {"atypical", p.atypical},
                       {"severity", p.severity},
                       {"transform",
                        {{"time_stretch", p.transform.time_stretch},
                         {"spectral_tilt", p.transform.spectral_tilt},
                         {"jitter_depth", p.transform.jitter_depth},
                         {"pause_scale", p.transform.pause_scale}}}});
    }
    write_text_file(path, arr.dump(2) + "\n");
}

std::vector<SyntheticSpeakerProfile> read_profiles(const std::filesystem::path& path) {
    nlohmann::json arr = nlohmann::json::parse(read_text_file(path));
    std::vector<SyntheticSpeakerProfile> out;
    for (const auto& j : arr) {
        SyntheticSpeakerProfile p;
        p.speaker_id = j.at("speaker_id");
        p.base_formants = j.at("base_formants").get<std::vector<double>>();
        p.pitch_hz = j.at("pitch_hz");
        p.atypical = j.at("atypical");
        p.severity = j.at("severity");
        const auto& t = j.at("transform");
        p.transform.time_stretch = t.at("time_stretch");
        p.transform.spectral_tilt = t.at("spectral_tilt");
        p.transform.jitter_depth = t.at("jitter_depth");
        p.transform.pause_scale = t.at("pause_scale");
        out.push_back(p);
    }
    return out;
}

}  // namespace aty::corpus
