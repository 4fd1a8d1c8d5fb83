#include <doctest.h>

#include <algorithm>
#include <set>

#include "atytts/slu.hpp"
#include "test_util.hpp"

using namespace aty;
using namespace aty::slu;

namespace {

// Separable toy set: one feature centroid per intent, entity tuple tied to it.
std::vector<LabeledUtterance> toy_set(int per_class, uint64_t seed, int classes = 3,
                                      int dim_chunks = 2, int n_mels = 4) {
    Rng rng(seed);
    std::vector<LabeledUtterance> out;
    const long D = static_cast<long>(dim_chunks) * n_mels;
    for (int c = 0; c < classes; ++c) {
        Eigen::RowVectorXd centroid(D);
        for (long j = 0; j < D; ++j) centroid(j) = 3.0 * rng.normal();
        for (int i = 0; i < per_class; ++i) {
            LabeledUtterance u;
            u.features = centroid;
            for (long j = 0; j < D; ++j) u.features(j) += 0.15 * rng.normal();
            u.intent = "intent_" + std::to_string(c);
            u.entities = {{"slot", "v" + std::to_string(c)}};
            u.speaker_id = "spk" + std::to_string(i % 4);
            u.utterance_id = "u" + std::to_string(c) + "_" + std::to_string(i);
            out.push_back(std::move(u));
        }
    }
    return out;
}

SluConfig toy_cfg(uint64_t seed = 1) {
    SluConfig cfg;
    cfg.n_mels = 4;
    cfg.chunks = 2;
    cfg.hidden = 16;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("severity grouping boundary sits exactly at 1.5, Low inclusive") {
    CHECK(assign_group(1.5) == Group::Low);
    CHECK(assign_group(1.5 + 1e-9) == Group::High);
    CHECK(assign_group(1.6) == Group::High);
    CHECK(assign_group(0.0) == Group::Low);
    CHECK(assign_group(4.0) == Group::High);
    CHECK_THROWS_AS(assign_group(-0.1), InvalidInput);
    CHECK_THROWS_AS(assign_group(4.1), InvalidInput);
}

TEST_CASE("cv splits partition 17 speakers into fold sizes {4,4,3,3,3}") {
    std::vector<std::string> speakers;
    for (int i = 0; i < 17; ++i) speakers.push_back("s" + std::to_string(i));
    auto splits = make_cv_splits(speakers, 5, 11);
    REQUIRE(splits.size() == 5);

    std::multiset<size_t> sizes;
    std::set<std::string> seen;
    for (const auto& s : splits) {
        sizes.insert(s.test_speakers.size());
        for (const auto& spk : s.test_speakers) {
            CHECK(!seen.count(spk));  // each speaker tested exactly once
            seen.insert(spk);
            // No leakage into the fold's train side.
            CHECK(std::find(s.train_speakers.begin(), s.train_speakers.end(), spk) ==
                  s.train_speakers.end());
        }
        CHECK(s.train_speakers.size() + s.test_speakers.size() == speakers.size());
    }
    CHECK(seen.size() == speakers.size());
    CHECK(sizes == std::multiset<size_t>{3, 3, 3, 4, 4});

    // Determinism and leave-one-out.
    auto again = make_cv_splits(speakers, 5, 11);
    CHECK(again[2].test_speakers == splits[2].test_speakers);
    auto loo = make_cv_splits(speakers, 17, 3);
    for (const auto& s : loo) CHECK(s.test_speakers.size() == 1);

    CHECK_THROWS_AS(make_cv_splits(speakers, 18, 0), InvalidInput);
}

TEST_CASE("chunk_features handles short and long inputs") {
    audio::MelSpectrogram m;
    m.frames.resize(3, 4);
    m.frames << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    Eigen::RowVectorXd f = chunk_features(m, 8);
    CHECK(f.size() == 32);
    CHECK(std::isfinite(f.sum()));

    audio::MelSpectrogram one;
    one.frames = Eigen::MatrixXd::Ones(1, 4);
    Eigen::RowVectorXd g = chunk_features(one, 8);
    CHECK(g == Eigen::RowVectorXd::Ones(32));
}

TEST_CASE("train_slu overfits a 50-utterance toy set") {
    auto train = toy_set(17, 5);  // 51 utterances, 3 classes
    SluModel model = train_slu(train, toy_cfg(5), {.epochs = 60, .batch_size = 16, .lr = 5e-3});
    CHECK(intent_accuracy(model, train) >= 0.95);
    CHECK(slu_f1(model, train) >= 0.9);
}

TEST_CASE("train_slu is deterministic under a fixed seed") {
    auto train = toy_set(8, 6);
    SluModel a = train_slu(train, toy_cfg(9), {.epochs = 10, .batch_size = 8, .lr = 3e-3});
    SluModel b = train_slu(train, toy_cfg(9), {.epochs = 10, .batch_size = 8, .lr = 3e-3});
    CHECK(a.params().value_fingerprint() == b.params().value_fingerprint());
}

TEST_CASE("train_slu refuses single-class training sets") {
    auto train = toy_set(5, 7, /*classes=*/1);
    CHECK_THROWS_AS(train_slu(train, toy_cfg(), {}), InvalidInput);
}

TEST_CASE("slu checkpoint round trips label maps and predictions") {
    auto dir = testutil::temp_dir("slu_ckpt");
    auto train = toy_set(10, 8);
    SluModel model = train_slu(train, toy_cfg(3), {.epochs = 25, .batch_size = 8, .lr = 5e-3});
    save_slu(dir / "slu.ckpt", model);
    SluModel loaded = load_slu(dir / "slu.ckpt");
    CHECK(loaded.intent_labels() == model.intent_labels());
    CHECK(loaded.entity_labels() == model.entity_labels());
    for (const auto& u : train) {
        CHECK(loaded.predict(u.features).intent == model.predict(u.features).intent);
    }
}

TEST_CASE("intent accuracy counts correct predictions and ignores order") {
    auto train = toy_set(12, 4);
    SluModel model = train_slu(train, toy_cfg(4), {.epochs = 50, .batch_size = 8, .lr = 5e-3});
    std::vector<LabeledUtterance> test(train.begin(), train.begin() + 4);
    REQUIRE(intent_accuracy(model, test) == 1.0);

    // Mislabel one gold intent: 3 of 4 correct.
    test[1].intent = "intent_nonexistent";
    CHECK(intent_accuracy(model, test) == doctest::Approx(0.75));

    std::vector<LabeledUtterance> shuffled = {test[2], test[0], test[3], test[1]};
    CHECK(intent_accuracy(model, shuffled) == doctest::Approx(0.75));

    CHECK_THROWS_AS(intent_accuracy(model, {}), InvalidInput);
}

TEST_CASE("entity tuple F1 worked examples") {
    using Ents = std::vector<std::pair<std::string, std::string>>;
    Ents gold = {{"a", "x"}, {"b", "y"}};
    Ents pred = {{"a", "x"}, {"c", "z"}};
    CHECK(entity_tuple_f1({gold}, {pred}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(entity_tuple_f1({gold}, {gold}) == 1.0);
    CHECK(entity_tuple_f1({gold}, {Ents{}}) == 0.0);
    // Permutation invariance over the test set.
    CHECK(entity_tuple_f1({gold, pred}, {pred, pred}) ==
          doctest::Approx(entity_tuple_f1({pred, gold}, {pred, pred})).epsilon(1e-12));
}

TEST_CASE("grouped accuracy pools utterances for the All column") {
    auto train = toy_set(12, 14);
    SluModel model = train_slu(train, toy_cfg(7), {.epochs = 50, .batch_size = 8, .lr = 5e-3});

    std::vector<LabeledUtterance> test(train.begin(), train.begin() + 9);
    // 5 low-severity, 4 high-severity utterances; one high gold mislabeled.
    for (size_t i = 0; i < test.size(); ++i) {
        test[i].severity = (i < 5) ? 1.0 : 2.5;
    }
    test[8].intent = "intent_wrong";
    GroupedAccuracy g = grouped_intent_accuracy(model, test);
    REQUIRE(g.low.has_value());
    REQUIRE(g.high.has_value());
    CHECK(*g.low == doctest::Approx(1.0));
    CHECK(*g.high == doctest::Approx(0.75));
    // Pooled, not the mean of group accuracies (which would be 0.875).
    CHECK(g.all == doctest::Approx(8.0 / 9.0));
    CHECK(g.n_all == 9);
}

TEST_CASE("subjective stats worked examples") {
    std::vector<ScoreRow> table = {
        {"spk1", "T1", "real", "r1", 1.0},      {"spk1", "T1", "synthetic", "r1", 2.0},
        {"spk2", "T1", "real", "r1", 3.0},      {"spk2", "T1", "synthetic", "r1", 2.0},
    };
    SubjectiveStats s = subjective_stats(table, "T1");
    CHECK(s.mae == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.rmse == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(s.r2.has_value());
    CHECK(*s.r2 == doctest::Approx(0.0).epsilon(1e-12));

    // Identity: synthetic equals real.
    std::vector<ScoreRow> same = {
        {"spk1", "T2", "real", "r1", 1.5}, {"spk1", "T2", "synthetic", "r1", 1.5},
        {"spk2", "T2", "real", "r1", 3.5}, {"spk2", "T2", "synthetic", "r1", 3.5},
    };
    SubjectiveStats id = subjective_stats(same, "T2");
    CHECK(id.mae == 0.0);
    CHECK(id.rmse == 0.0);
    REQUIRE(id.r2.has_value());
    CHECK(*id.r2 == doctest::Approx(1.0));

    // Zero variance in the reference scores: R^2 undefined with a diagnostic.
    std::vector<ScoreRow> flat = {
        {"spk1", "T3", "real", "r1", 2.0}, {"spk1", "T3", "synthetic", "r1", 2.5},
        {"spk2", "T3", "real", "r1", 2.0}, {"spk2", "T3", "synthetic", "r1", 1.0},
    };
    SubjectiveStats f = subjective_stats(flat, "T3");
    CHECK(!f.r2.has_value());
    CHECK(!f.diagnostic.empty());

    CHECK_THROWS_AS(subjective_stats(table, "T9"), InvalidInput);
}

TEST_CASE("RMSE >= MAE and R^2 <= 1 on random score tables") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ScoreRow> table;
        int speakers = rng.uniform_int(2, 6);
        for (int s = 0; s < speakers; ++s) {
            table.push_back({"spk" + std::to_string(s), "T", "real", "r1",
                             rng.uniform(0.0, 4.0)});
            table.push_back({"spk" + std::to_string(s), "T", "synthetic", "r1",
                             rng.uniform(0.0, 4.0)});
        }
        SubjectiveStats st = subjective_stats(table, "T");
        CHECK(st.rmse >= st.mae - 1e-12);
        if (st.r2.has_value()) CHECK(*st.r2 <= 1.0 + 1e-12);
    }
}

TEST_CASE("score table round trips through CSV") {
    auto dir = testutil::temp_dir("scores");
    std::vector<ScoreRow> rows = {{"spk1", "T1", "real", "r1", 2.5},
                                  {"spk1", "T1", "synthetic", "r2", 1.25}};
    write_score_table(dir / "scores.csv", rows);
    auto loaded = read_score_table(dir / "scores.csv");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].score == 1.25);
    CHECK(loaded[0].rater == "r1");
}

TEST_CASE("report tables render NA cells and deterministic bytes") {
    auto dir = testutil::temp_dir("report");
    std::vector<ReportRow> rows = {
        {"baseline", "Low", "ICA", 0.91},
        {"baseline", "High", "ICA", std::nullopt},
        {"aty_tts", "All", "ICA", 0.9412},
    };
    report_tables(rows, dir / "r.csv", dir / "r.txt");
    std::string csv = read_text_file(dir / "r.csv");
    CHECK(csv.find("method,group,metric,value") == 0);
    CHECK(csv.find("baseline,High,ICA,NA") != std::string::npos);
    std::string txt = read_text_file(dir / "r.txt");
    CHECK(txt.find("0.9412") != std::string::npos);

    report_tables(rows, dir / "r2.csv", dir / "r2.txt");
    CHECK(read_text_file(dir / "r2.csv") == csv);

    report_tables({}, dir / "empty.csv", dir / "empty.txt");
    CHECK(read_text_file(dir / "empty.csv") == "method,group,metric,value\n");
}
