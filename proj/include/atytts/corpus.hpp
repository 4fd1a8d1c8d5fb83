#pragma once

#include <string>
#include <vector>

#include "atytts/audio.hpp"
#include "atytts/manifest.hpp"
#include "atytts/text.hpp"

namespace aty::corpus {

// Monotone-in-severity rendering transform for atypical speech; identity at
// severity zero.
struct AtypicalTransform {
    double time_stretch = 1.0;       // >= 1, slows the speaking rate
    double spectral_tilt = 0.0;      // dB/octave added to the envelope
    double jitter_depth = 0.0;       // pitch wobble depth
    double pause_scale = 1.0;        // >= 1, lengthens silences

    static AtypicalTransform from_severity(double severity);
    bool is_identity() const;
};

struct SyntheticSpeakerProfile {
    std::string speaker_id;
    std::vector<double> base_formants;  // speaker formant basis, Hz
    double pitch_hz = 0.0;
    bool atypical = false;
    double severity = 0.0;  // 0 iff not atypical
    AtypicalTransform transform;
};

// Deterministic profile from (speaker tag, master seed).
SyntheticSpeakerProfile make_profile(const std::string& speaker_id, bool atypical,
                                     double severity, uint64_t master_seed);

// Closed word list with hand-fixed pronunciations, plus the phoneme
// vocabulary (with silence markers and character fallbacks).
text::Lexicon corpus_lexicon();
text::PhonemeVocabulary corpus_vocabulary();

// Phonemize with utterance-initial/final silence and inter-word gaps, the
// sequence the renderer and the TTS training/synthesis paths share.
std::vector<int> phonemize_with_silences(const std::string& text, const text::Lexicon& lexicon,
                                         const text::PhonemeVocabulary& vocab);

// Per-utterance micro-variation seed; shared across speakers for the same
// text so cross-speaker renderings stay frame-parallel.
uint64_t utterance_seed(uint64_t master_seed, const std::string& text);

struct RenderResult {
    audio::Waveform wave;
    audio::MelSpectrogram mel;
    std::vector<int> durations;    // ground-truth frames per phoneme; sums to T
    std::vector<int> phoneme_ids;  // includes silence markers
};

// Harmonic-stack pseudo-speech with per-phoneme formant targets. Fully
// deterministic in (text, profile, cfg, seed). When duration_override is
// given (frames per phoneme), those exact durations are rendered, which is
// the conversion oracle used by the VC and fine-tune experiments.
RenderResult render_utterance(const std::string& text, const SyntheticSpeakerProfile& profile,
                              const audio::FeatureConfig& cfg, uint64_t seed,
                              const std::vector<int>* duration_override = nullptr);

// --- corpus generation ---------------------------------------------------------

struct SentenceSpec {
    std::string text;
    std::string intent;
    std::vector<std::pair<std::string, std::string>> entities;
};

// Intent templates with slotted entity values; entity values appear verbatim.
SentenceSpec make_sentence(uint64_t master_seed, uint64_t index);
std::vector<std::string> intent_labels();
std::vector<std::pair<std::string, std::string>> entity_tuple_space();

struct CorpusSpec {
    int n_typical = 6;
    int n_atypical = 8;
    int utterances_per_speaker = 40;
    uint64_t seed = 1;
    audio::FeatureConfig feature;
    bool write_wavs = true;
    std::filesystem::path out_dir;
};

struct GeneratedCorpus {
    std::vector<SyntheticSpeakerProfile> profiles;
    std::vector<UtteranceRecord> manifest;
    std::vector<SentenceSpec> sentences;  // shared text list, index-aligned per speaker
};

// Emits wav files, manifest.jsonl, lexicon.txt, vocab.txt and profiles.json.
GeneratedCorpus generate_corpus(const CorpusSpec& spec);

// Profiles persisted alongside the corpus (needed by oracle evaluations).
void write_profiles(const std::filesystem::path& path,
                    const std::vector<SyntheticSpeakerProfile>& profiles);
std::vector<SyntheticSpeakerProfile> read_profiles(const std::filesystem::path& path);

}  // namespace aty::corpus
