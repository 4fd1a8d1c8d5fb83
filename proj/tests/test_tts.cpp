#include <doctest.h>

#include <cmath>

#include "atytts/tts.hpp"
#include "test_util.hpp"

using namespace aty;
using namespace aty::tts;
using nn::Matrix;
using nn::Tensor;

namespace {

TtsConfig tiny_cfg(int n_mels = 8) {
    TtsConfig c;
    c.vocab_size = 12;
    c.n_mels = n_mels;
    c.emb_dim = 6;
    c.enc_hidden = 10;
    c.dur_hidden = 6;
    c.dec_hidden = 10;
    c.spk_dim = 4;
    c.crop_frames = 16;
    return c;
}

TtsModel tiny_model(uint64_t seed = 1, int n_mels = 8) {
    return TtsModel(tiny_cfg(n_mels), {"spk_a", "spk_b"}, seed);
}

// Independent oracle: enumerate every composition of T frames into L
// positive parts and take the cheapest.
std::vector<int> brute_force_align(const Matrix& mu, const Matrix& z) {
    const int L = static_cast<int>(mu.rows()), T = static_cast<int>(z.rows());
    std::vector<int> best, cur(L, 0);
    double best_cost = std::numeric_limits<double>::infinity();
    std::function<void(int, int, double)> rec = [&](int i, int used, double cost) {
        if (i == L - 1) {
            int d = T - used;
            if (d < 1) return;
            double c = cost;
            int start = used;
            for (int t = start; t < start + d; ++t) c += (mu.row(i) - z.row(t)).squaredNorm();
            if (c < best_cost) {
                best_cost = c;
                cur[i] = d;
                best = cur;
            }
            return;
        }
        for (int d = 1; used + d <= T - (L - 1 - i); ++d) {
            double c = cost;
            for (int t = used; t < used + d; ++t) c += (mu.row(i) - z.row(t)).squaredNorm();
            cur[i] = d;
            rec(i + 1, used + d, c);
        }
    };
    rec(0, 0, 0.0);
    return best;
}

Matrix random_matrix(long r, long c, Rng& rng) {
    Matrix m(r, c);
    for (long i = 0; i < r; ++i) {
        for (long j = 0; j < c; ++j) m(i, j) = rng.normal();
    }
    return m;
}

std::vector<TtsBatchItem> toy_batch(const TtsModel& model, Rng& rng, int n_items = 2) {
    std::vector<TtsBatchItem> batch;
    for (int b = 0; b < n_items; ++b) {
        TtsBatchItem item;
        int L = 3 + b;
        for (int i = 0; i < L; ++i) item.ids.push_back(rng.uniform_int(1, 11));
        int T = L * 3 + b;
        item.mel = random_matrix(T, model.config().n_mels, rng);
        item.speaker_idx = b % 2;
        item.utt_id = "toy" + std::to_string(b);
        batch.push_back(item);
    }
    return batch;
}

}  // namespace

TEST_CASE("encode obeys the L x F shape contract and determinism") {
    TtsModel model = tiny_model();
    Tensor one = model.encode({3});
    CHECK(one.rows() == 1);
    CHECK(one.cols() == 8);
    Tensor a = model.encode({3, 5, 7});
    Tensor b = model.encode({3, 5, 7});
    CHECK(a.value() == b.value());
    CHECK_THROWS_AS(model.encode({0}), InvalidInput);
    CHECK_THROWS_AS(model.encode({99}), InvalidInput);
}

TEST_CASE("encoder gradient matches central differences") {
    TtsModel model = tiny_model(7);
    Rng rng(3);
    Matrix target = random_matrix(3, 8, rng);
    auto loss_fn = [&]() { return nn::mse(model.encode({2, 4, 6}), Tensor::constant(target)); };
    CHECK(testutil::grad_check(model.all_params(), loss_fn) < 1e-3);
}

TEST_CASE("duration predictor shape and gradient") {
    TtsModel model = tiny_model(11);
    Tensor mu = model.encode({1, 2, 3});
    Tensor p_hat = model.predict_durations(mu);
    CHECK(p_hat.rows() == 3);
    CHECK(p_hat.cols() == 1);
    CHECK(p_hat.value() == model.predict_durations(mu).value());

    Matrix target(3, 1);
    target << std::log(2.0), std::log(3.0), std::log(1.0);
    auto loss_fn = [&]() {
        Tensor m = model.encode({1, 2, 3});
        return nn::mse(model.predict_durations(m), Tensor::constant(target));
    };
    // Only the duration head receives gradient; mu_tilde is gradient-stopped.
    std::vector<Tensor> dur_params = {model.params().get("dur1.W"), model.params().get("dur1.b"),
                                      model.params().get("dur2.W"), model.params().get("dur2.b")};
    CHECK(testutil::grad_check(dur_params, loss_fn) < 1e-3);
}

TEST_CASE("duration loss does not leak gradient into the encoder") {
    TtsModel model = tiny_model(5);
    Matrix target = Matrix::Zero(2, 1);
    model.params().zero_grad();
    Tensor loss = nn::mse(model.predict_durations(model.encode({1, 2})), Tensor::constant(target));
    nn::backward(loss);
    CHECK(model.params().get("enc1.W").grad().norm() == 0.0);
    CHECK(model.params().get("emb").grad().norm() == 0.0);
    CHECK(model.params().get("dur1.W").grad().norm() > 0.0);
}

TEST_CASE("align_infer expansion follows the ceiling rule") {
    Matrix mu(2, 3);
    mu << 1, 1, 1, 2, 2, 2;

    // exp(p_hat) = [1.2, 2.0] -> ceil = [2, 2]
    InferDurations d =
        durations_from_log({std::log(1.2), std::log(2.0)}, 100);
    CHECK(d.durations == std::vector<int>{2, 2});
    Tensor expanded = expand_by_durations(Tensor::constant(mu), d.durations);
    CHECK(expanded.rows() == 4);
    CHECK(expanded.value().row(0) == mu.row(0));
    CHECK(expanded.value().row(1) == mu.row(0));
    CHECK(expanded.value().row(2) == mu.row(1));
    CHECK(expanded.value().row(3) == mu.row(1));

    // Single phoneme repeated exactly exp(p_hat) = 3 times.
    InferDurations single = durations_from_log({std::log(3.0)}, 100);
    CHECK(single.durations == std::vector<int>{3});

    // All exp(p_hat) in (0, 1] give exactly one frame each.
    InferDurations ones = durations_from_log({std::log(0.2), std::log(1.0), std::log(0.7)}, 100);
    CHECK(ones.durations == std::vector<int>{1, 1, 1});
    CHECK_FALSE(ones.capped);
}

TEST_CASE("align_infer records the max-frames cap") {
    InferDurations d = durations_from_log({std::log(50.0), std::log(50.0)}, 60);
    CHECK(d.capped);
    CHECK(d.durations[0] + d.durations[1] <= 60);
}

TEST_CASE("align_train worked example and degenerate cases") {
    Matrix mu(2, 1);
    mu << 0, 10;
    Matrix z(3, 1);
    z << 0, 10, 10;
    CHECK(align_train(mu, z) == std::vector<int>{1, 2});
    CHECK(brute_force_align(mu, z) == std::vector<int>{1, 2});

    // Single phoneme takes all frames.
    Matrix one(1, 1);
    one << 3;
    CHECK(align_train(one, z) == std::vector<int>{3});

    // L == T forces the diagonal.
    Matrix sq = z;
    CHECK(align_train(sq, z) == std::vector<int>{1, 1, 1});

    // More phonemes than frames is invalid.
    CHECK_THROWS_AS(align_train(z, mu), InvalidInput);
}

TEST_CASE("align_train matches brute force on random small instances") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        int L = rng.uniform_int(1, 4);
        int T = rng.uniform_int(L, 8);
        Matrix mu = random_matrix(L, 2, rng);
        Matrix z = random_matrix(T, 2, rng);
        std::vector<int> got = align_train(mu, z);
        std::vector<int> want = brute_force_align(mu, z);
        REQUIRE(got == want);
        int sum = 0;
        for (int d : got) sum += d;
        CHECK(sum == T);
    }
}

TEST_CASE("decode preserves shape and its gradient checks out") {
    TtsModel model = tiny_model(17);
    Rng rng(5);
    Matrix mel_in = random_matrix(4, 8, rng);
    Tensor out = model.decode(Tensor::constant(mel_in), 1);
    CHECK(out.rows() == 4);
    CHECK(out.cols() == 8);

    Matrix target = random_matrix(4, 8, rng);
    auto loss_fn = [&]() {
        return nn::mse(model.decode(Tensor::constant(mel_in), 1), Tensor::constant(target));
    };
    CHECK(testutil::grad_check(model.all_params(), loss_fn) < 1e-3);
}

TEST_CASE("decoder overfits a single (mu, z) pair") {
    TtsModel model = tiny_model(23);
    Rng rng(9);
    Matrix mu = random_matrix(6, 8, rng);
    Matrix target = random_matrix(6, 8, rng);
    nn::Adam opt(model.all_params(), {.lr = 1e-2});
    double final_loss = 1.0;
    for (int step = 0; step < 800; ++step) {
        model.params().zero_grad();
        Tensor loss = nn::mse(model.decode(Tensor::constant(mu), 0), Tensor::constant(target));
        final_loss = loss.scalar();
        nn::backward(loss);
        opt.step();
    }
    CHECK(final_loss < 1e-2);
}

TEST_CASE("loss worked examples from direct arithmetic") {
    Matrix a(2, 2), b(2, 2);
    a << 1, 1, 1, 1;
    b << 0, 0, 2, 2;
    CHECK(loss_encoder(a, b) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(loss_encoder(a, a) == 0.0);

    CHECK(loss_duration({0.0, 0.0}, {1.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(loss_duration({std::log(2), std::log(3)}, {std::log(2), std::log(3)}) == 0.0);
    // Permuting both vectors identically leaves the loss unchanged.
    CHECK(loss_duration({0.5, -1.0, 2.0}, {0.0, 1.0, -1.0}) ==
          doctest::Approx(loss_duration({-1.0, 2.0, 0.5}, {1.0, -1.0, 0.0})).epsilon(1e-14));

    Matrix ones = Matrix::Ones(3, 4), zeros = Matrix::Zero(3, 4);
    CHECK(loss_decoder(ones, zeros) == doctest::Approx(1.0).epsilon(1e-14));

    Rng rng(17);
    Matrix x = random_matrix(3, 5, rng), y = random_matrix(3, 5, rng);
    double manual = 0.0;
    for (long i = 0; i < 3; ++i) {
        for (long j = 0; j < 5; ++j) manual += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
    }
    manual /= 15.0;
    CHECK(std::abs(loss_decoder(x, y) - manual) < 1e-12);

    // Scaling the difference by c scales the loss by c^2.
    Matrix mid = y + 3.0 * (x - y);
    CHECK(loss_encoder(mid, y) == doctest::Approx(9.0 * loss_encoder(x, y)).epsilon(1e-12));

    CHECK_THROWS_AS(loss_encoder(a, ones), InvalidInput);
    CHECK_THROWS_AS(loss_duration({0.0}, {0.0, 1.0}), InvalidInput);
}

TEST_CASE("losses are non-negative and zero only at equality") {
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
        Matrix x = random_matrix(3, 4, rng), y = random_matrix(3, 4, rng);
        CHECK(loss_encoder(x, y) >= 0.0);
        if (!(x == y)) CHECK(loss_encoder(x, y) > 0.0);
    }
}

TEST_CASE("train step descends on a repeated batch") {
    int descents = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        TtsModel model = tiny_model(100 + seed);
        Rng data_rng(seed);
        auto batch = toy_batch(model, data_rng);
        nn::Adam opt(model.all_params(), {.lr = 3e-3});
        Rng crop_rng = Rng(seed).derive("crop");
        TtsStepResult first = tts_train_step(model, batch, opt, crop_rng.derive("s", 0));
        TtsStepResult second{};
        for (int s = 1; s <= 5; ++s) {
            second = tts_train_step(model, batch, opt, crop_rng.derive("s", s));
        }
        if (second.total < first.total) ++descents;
    }
    CHECK(descents >= 18);  // >= 90% of 20 seeded trials
}

TEST_CASE("loss breakdown sums to the optimized scalar") {
    TtsModel model = tiny_model(55);
    Rng rng(4);
    auto batch = toy_batch(model, rng);
    Rng crop_rng(8);
    TtsLossGraph g = tts_loss_graph(model, batch, crop_rng);
    double total = nn::add(nn::add(g.l_encoder, g.l_duration), g.l_decoder).scalar();
    CHECK(std::abs((g.l_encoder.scalar() + g.l_duration.scalar() + g.l_decoder.scalar()) - total) <
          1e-10);
}

TEST_CASE("near-zero encoder gradient when mel already matches mu") {
    TtsModel model = tiny_model(77);
    // Single phoneme; target equals the expanded latents exactly.
    std::vector<int> ids{4};
    Matrix mu = model.encode(ids).value();
    TtsBatchItem item;
    item.ids = ids;
    item.mel = mu.replicate(3, 1);
    item.speaker_idx = 0;
    item.utt_id = "match";

    Rng crop_rng(1);
    TtsLossGraph g = tts_loss_graph(model, {item}, crop_rng);
    CHECK(g.l_encoder.scalar() == doctest::Approx(0.0).epsilon(1e-12));
    model.params().zero_grad();
    nn::backward(g.l_encoder);
    CHECK(model.params().get("enc1.W").grad().norm() < 1e-12);
}

TEST_CASE("every parameter receives gradient from the three-loss objective") {
    TtsModel model = tiny_model(91);
    Rng rng(6);
    // Batch touching both speakers and every vocabulary id.
    std::vector<TtsBatchItem> batch;
    for (int b = 0; b < 2; ++b) {
        TtsBatchItem item;
        for (int id = 1; id < model.config().vocab_size; ++id) item.ids.push_back(id);
        item.mel = random_matrix(static_cast<long>(item.ids.size()) * 2, 8, rng);
        item.speaker_idx = b;
        item.utt_id = "dead" + std::to_string(b);
        batch.push_back(item);
    }
    Rng crop_rng(2);
    TtsLossGraph g = tts_loss_graph(model, batch, crop_rng);
    model.params().zero_grad();
    nn::backward(nn::add(nn::add(g.l_encoder, g.l_duration), g.l_decoder));
    for (const auto& [name, t] : model.params().items()) {
        INFO("parameter ", name);
        CHECK(t.node()->grad.cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("non-finite loss aborts the step and names the batch") {
    TtsModel model = tiny_model(13);
    TtsBatchItem item;
    item.ids = {1, 2};
    item.mel = Matrix::Constant(4, 8, std::numeric_limits<double>::quiet_NaN());
    item.speaker_idx = 0;
    item.utt_id = "bad_utt";
    nn::Adam opt(model.all_params(), {});
    try {
        tts_train_step(model, {item}, opt, Rng(0));
        FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
        CHECK(std::string(e.what()).find("bad_utt") != std::string::npos);
    }
}

TEST_CASE("synthesis frame count equals the align_infer contract") {
    TtsModel model = tiny_model(42);
    audio::FeatureConfig cfg;
    cfg.n_mels = 8;
    std::vector<int> ids{1, 3, 5, 7};
    SynthesisResult r = synthesize_mel(model, ids, 0, cfg);
    long expect = 0;
    for (int d : r.durations) expect += d;
    CHECK(r.mel.n_frames() == expect);

    // Determinism: same input, same model -> bit-identical mel.
    SynthesisResult r2 = synthesize_mel(model, ids, 0, cfg);
    CHECK(r.mel.frames == r2.mel.frames);
}

TEST_CASE("checkpoint round trip reproduces synthesis bit-exactly") {
    auto dir = testutil::temp_dir("tts_ckpt");
    TtsModel model = tiny_model(42);
    audio::FeatureConfig cfg;
    cfg.n_mels = 8;
    std::vector<int> ids{2, 4, 6};
    SynthesisResult before = synthesize_mel(model, ids, 1, cfg);

    save_tts(dir / "m.ckpt", model, 0xabcdef, cfg);
    LoadedTts loaded = load_tts(dir / "m.ckpt");
    CHECK(loaded.vocab_hash == 0xabcdef);
    CHECK(loaded.model.speakers() == model.speakers());
    CHECK(loaded.feature_cfg.n_mels == 8);

    SynthesisResult after = synthesize_mel(loaded.model, ids, 1, cfg);
    CHECK(before.mel.frames == after.mel.frames);
    CHECK(before.durations == after.durations);
}
