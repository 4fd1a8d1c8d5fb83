#include <doctest.h>

#include "atytts/corpus.hpp"
#include "test_util.hpp"

using namespace aty;
using namespace aty::corpus;

namespace {

audio::FeatureConfig cfg() { return audio::FeatureConfig{}; }

SyntheticSpeakerProfile typical_profile() { return make_profile("T00", false, 0.0, 7); }

}  // namespace

TEST_CASE("severity zero gives the identity transform and identical rendering") {
    AtypicalTransform id = AtypicalTransform::from_severity(0.0);
    CHECK(id.is_identity());

    SyntheticSpeakerProfile p = typical_profile();
    SyntheticSpeakerProfile p2 = p;
    p2.transform = id;
    uint64_t seed = utterance_seed(1, "hey jay call mom");
    RenderResult a = render_utterance("hey jay call mom", p, cfg(), seed);
    RenderResult b = render_utterance("hey jay call mom", p2, cfg(), seed);
    CHECK(a.wave.samples == b.wave.samples);
    CHECK(a.mel.frames == b.mel.frames);
}

TEST_CASE("transform parameters are monotone in severity") {
    double prev_stretch = 0.0, prev_tilt = 1.0, prev_jit = -1.0, prev_pause = 0.0;
    for (double s : {0.0, 0.5, 1.5, 2.5, 4.0}) {
        AtypicalTransform t = AtypicalTransform::from_severity(s);
        CHECK(t.time_stretch >= prev_stretch);
        CHECK(t.spectral_tilt <= prev_tilt);
        CHECK(t.jitter_depth >= prev_jit);
        CHECK(t.pause_scale >= prev_pause);
        prev_stretch = t.time_stretch;
        prev_tilt = t.spectral_tilt;
        prev_jit = t.jitter_depth;
        prev_pause = t.pause_scale;
    }
    CHECK_THROWS_AS(AtypicalTransform::from_severity(5.0), InvalidInput);
}

TEST_CASE("pure time stretch doubles the frame count within one frame") {
    SyntheticSpeakerProfile p = typical_profile();
    uint64_t seed = utterance_seed(3, "hey jay play jazz music");
    RenderResult base = render_utterance("hey jay play jazz music", p, cfg(), seed);

    SyntheticSpeakerProfile stretched = p;
    stretched.transform.time_stretch = 2.0;
    RenderResult twice = render_utterance("hey jay play jazz music", stretched, cfg(), seed);
    CHECK(std::abs(twice.mel.n_frames() - 2 * base.mel.n_frames()) <= 1);
}

TEST_CASE("ground-truth durations sum to the rendered frame count") {
    SyntheticSpeakerProfile p = make_profile("A01", true, 2.5, 11);
    uint64_t seed = utterance_seed(11, "hey jay turn on the lamp");
    RenderResult r = render_utterance("hey jay turn on the lamp", p, cfg(), seed);
    int sum = 0;
    for (int d : r.durations) sum += d;
    CHECK(sum == r.mel.n_frames());
    CHECK(r.durations.size() == r.phoneme_ids.size());
    for (int d : r.durations) CHECK(d >= 1);
}

TEST_CASE("duration override renders exactly the requested frames") {
    SyntheticSpeakerProfile src = typical_profile();
    SyntheticSpeakerProfile tgt = make_profile("A00", true, 3.0, 7);
    uint64_t seed = utterance_seed(1, "hey jay ring sam");
    RenderResult source = render_utterance("hey jay ring sam", src, cfg(), seed);
    RenderResult oracle =
        render_utterance("hey jay ring sam", tgt, cfg(), seed, &source.durations);
    CHECK(oracle.durations == source.durations);
    CHECK(oracle.mel.n_frames() == source.mel.n_frames());
}

TEST_CASE("rendering is deterministic and rejects unknown words") {
    SyntheticSpeakerProfile p = typical_profile();
    uint64_t seed = utterance_seed(5, "hey jay call alex");
    RenderResult a = render_utterance("hey jay call alex", p, cfg(), seed);
    RenderResult b = render_utterance("hey jay call alex", p, cfg(), seed);
    CHECK(a.wave.samples == b.wave.samples);
    CHECK_THROWS_AS(render_utterance("hey jay zzqq", p, cfg(), seed), InvalidInput);
}

TEST_CASE("mel distance to the typical rendering grows with severity") {
    SyntheticSpeakerProfile base = typical_profile();
    uint64_t seed = utterance_seed(1, "hey jay set the fan to level two");
    RenderResult typical = render_utterance("hey jay set the fan to level two", base, cfg(), seed);

    double prev = -1.0;
    for (double s : {0.5, 1.5, 2.5, 3.5}) {
        SyntheticSpeakerProfile p = base;
        p.atypical = true;
        p.severity = s;
        p.transform = AtypicalTransform::from_severity(s);
        RenderResult r = render_utterance("hey jay set the fan to level two", p, cfg(), seed,
                                          &typical.durations);
        double dist = audio::mel_l2_distance(r.mel, typical.mel);
        CHECK(dist >= prev);
        prev = dist;
    }
}

TEST_CASE("typical speakers rendering the same text share frame counts") {
    // Cross-speaker frame parallelism backs the VC training pairs.
    SyntheticSpeakerProfile a = make_profile("T00", false, 0.0, 9);
    SyntheticSpeakerProfile b = make_profile("T01", false, 0.0, 9);
    uint64_t seed = utterance_seed(9, "hey jay what is the weather in oslo");
    RenderResult ra = render_utterance("hey jay what is the weather in oslo", a, cfg(), seed);
    RenderResult rb = render_utterance("hey jay what is the weather in oslo", b, cfg(), seed);
    CHECK(ra.durations == rb.durations);
    CHECK(ra.mel.n_frames() == rb.mel.n_frames());
}

TEST_CASE("sentence templates put entity values verbatim in the text") {
    for (uint64_t k = 0; k < 24; ++k) {
        SentenceSpec s = make_sentence(17, k);
        CHECK(!s.intent.empty());
        for (const auto& [type, value] : s.entities) {
            INFO("sentence: ", s.text, " entity: ", value);
            CHECK(s.text.find(value) != std::string::npos);
        }
    }
}

TEST_CASE("generate_corpus emits the right counts and reproduces byte-identically") {
    auto dir = testutil::temp_dir("corpus_a");
    CorpusSpec spec;
    spec.n_typical = 2;
    spec.n_atypical = 2;
    spec.utterances_per_speaker = 3;
    spec.seed = 21;
    spec.out_dir = dir;
    spec.write_wavs = false;  // manifests are what we compare

    GeneratedCorpus a = generate_corpus(spec);
    CHECK(a.manifest.size() == 4 * 3);
    std::string manifest_a = read_text_file(dir / "manifest.jsonl");

    auto dir2 = testutil::temp_dir("corpus_b");
    spec.out_dir = dir2;
    generate_corpus(spec);
    CHECK(read_text_file(dir2 / "manifest.jsonl") == manifest_a);

    // Severity grouping is populated on both sides of 1.5.
    bool has_low = false, has_high = false;
    for (const auto& p : a.profiles) {
        if (!p.atypical) continue;
        (p.severity <= 1.5 ? has_low : has_high) = true;
    }
    CHECK(has_low);
    CHECK(has_high);

    // Manifest round trip.
    auto loaded = read_manifest(dir / "manifest.jsonl");
    REQUIRE(loaded.size() == a.manifest.size());
    CHECK(loaded[5].to_json_line() == a.manifest[5].to_json_line());

    // Lexicon and vocabulary files exist and load.
    auto lex = text::Lexicon::load(dir / "lexicon.txt");
    CHECK(lex.contains("weather"));
    auto vocab = text::PhonemeVocabulary::load(dir / "vocab.txt");
    CHECK(vocab.contains("sil"));

    auto profiles = read_profiles(dir / "profiles.json");
    CHECK(profiles.size() == a.profiles.size());
    CHECK(profiles[2].speaker_id == a.profiles[2].speaker_id);
    CHECK(profiles[2].pitch_hz == a.profiles[2].pitch_hz);
}

TEST_CASE("generated wavs can be read back and match the manifest") {
    auto dir = testutil::temp_dir("corpus_wav");
    CorpusSpec spec;
    spec.n_typical = 1;
    spec.n_atypical = 1;
    spec.utterances_per_speaker = 2;
    spec.seed = 5;
    spec.out_dir = dir;

    GeneratedCorpus g = generate_corpus(spec);
    for (const auto& rec : g.manifest) {
        audio::Waveform w = audio::read_wav(dir / rec.audio_path);
        CHECK(w.sample_rate == spec.feature.sample_rate);
        int T = audio::frame_count(w.samples.size(), spec.feature);
        int sum = 0;
        for (int d : rec.durations) sum += d;
        CHECK(sum == T);
    }
}
