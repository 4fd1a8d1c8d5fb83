#include "atytts/tts.hpp"

#include <cmath>
#include <limits>

namespace aty::tts {

using nn::add;
using nn::add_rowvec;
using nn::concat_cols;
using nn::gather_rows;
using nn::matmul;
using nn::mse;
using nn::slice_rows;
using nn::stop_gradient;
using nn::tanh_t;
using nn::Tensor;

TtsModel::TtsModel(TtsConfig cfg, std::vector<std::string> speakers, uint64_t seed)
    : cfg_(cfg), speakers_(std::move(speakers)) {
    require(cfg_.vocab_size > 1, "tts model: vocab_size must include at least one symbol");
    require(!speakers_.empty(), "tts model: at least one speaker required");
    Rng rng(seed);
    emb_ = params_.create("emb", nn::xavier_init(cfg_.vocab_size, cfg_.emb_dim, rng));
    enc1_ = nn::Linear::create(params_, "enc1", cfg_.emb_dim, cfg_.enc_hidden, rng);
    enc2_ = nn::Linear::create(params_, "enc2", cfg_.enc_hidden, cfg_.enc_hidden, rng);
    enc3_ = nn::Linear::create(params_, "enc3", cfg_.enc_hidden, cfg_.n_mels, rng);
    dur1_ = nn::Linear::create(params_, "dur1", cfg_.n_mels, cfg_.dur_hidden, rng);
    dur2_ = nn::Linear::create(params_, "dur2", cfg_.dur_hidden, 1, rng);
    dec1_ = nn::Linear::create(params_, "dec1", cfg_.n_mels + cfg_.spk_dim, cfg_.dec_hidden, rng);
    dec2_ = nn::Linear::create(params_, "dec2", cfg_.dec_hidden, cfg_.dec_hidden, rng);
    dec3_ = nn::Linear::create(params_, "dec3", cfg_.dec_hidden, cfg_.n_mels, rng);
    spk_ = params_.create("spk",
                          nn::xavier_init(static_cast<int>(speakers_.size()), cfg_.spk_dim, rng));
}

int TtsModel::speaker_index(const std::string& speaker_id) const {
    for (size_t i = 0; i < speakers_.size(); ++i) {
        if (speakers_[i] == speaker_id) return static_cast<int>(i);
    }
    throw InvalidInput("tts model: unknown speaker '" + speaker_id + "'");
}

Tensor TtsModel::encode(const std::vector<int>& ids) const {
    require(!ids.empty(), "encode: empty phoneme sequence");
    for (int id : ids) {
        require(id > text::kPadId && id < cfg_.vocab_size,
                "encode: phoneme id " + std::to_string(id) + " out of vocabulary range");
    }
    Tensor x = gather_rows(emb_, ids);
    Tensor h = tanh_t(enc1_(x));
    h = tanh_t(enc2_(h));
    return enc3_(h);
}

Tensor TtsModel::duration_head(const Tensor& mu) const {
    Tensor h = tanh_t(dur1_(mu));
    return dur2_(h);
}

Tensor TtsModel::predict_durations(const Tensor& mu_tilde) const {
    require(mu_tilde.cols() == cfg_.n_mels, "predict_durations: expected L x n_mels input");
    return duration_head(stop_gradient(mu_tilde));
}

Tensor TtsModel::decode(const Tensor& mel_in, const std::vector<int>& speaker_rows) const {
    require(mel_in.cols() == cfg_.n_mels, "decode: input mel width does not match model");
    require(static_cast<long>(speaker_rows.size()) == mel_in.rows(),
            "decode: one speaker row per frame required");
    Tensor cond = gather_rows(spk_, speaker_rows);
    Tensor x = concat_cols(mel_in, cond);
    Tensor h = tanh_t(dec1_(x));
    h = tanh_t(dec2_(h));
    return add(mel_in, dec3_(h));
}

Tensor TtsModel::decode(const Tensor& mel_in, int speaker_idx) const {
    require(speaker_idx >= 0 && speaker_idx < static_cast<int>(speakers_.size()),
            "decode: speaker index out of range");
    return decode(mel_in, std::vector<int>(static_cast<size_t>(mel_in.rows()), speaker_idx));
}

std::vector<Tensor> TtsModel::all_params() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_.items()) out.push_back(t);
    return out;
}

// --- alignment ---------------------------------------------------------------

std::vector<int> align_train(const Matrix& mu_tilde, const Matrix& z) {
    const long L = mu_tilde.rows(), T = z.rows();
    require(mu_tilde.cols() == z.cols(), "align_train: feature widths disagree");
    require(L >= 1 && T >= 1, "align_train: empty input");
    require(L <= T, "align_train: more phonemes than frames (L > T)");

    // Frame-phoneme squared distances.
    Matrix cost(L, T);
    for (long i = 0; i < L; ++i) {
        for (long t = 0; t < T; ++t) {
            cost(i, t) = (mu_tilde.row(i) - z.row(t)).squaredNorm();
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    Matrix q = Matrix::Constant(L, T, inf);
    // stay(i,t) is true when frame t extends phoneme i rather than opening it.
    std::vector<std::vector<bool>> stay(static_cast<size_t>(L),
                                        std::vector<bool>(static_cast<size_t>(T), false));
    q(0, 0) = cost(0, 0);
    for (long t = 1; t <= T - L; ++t) {
        q(0, t) = q(0, t - 1) + cost(0, t);
        stay[0][static_cast<size_t>(t)] = true;
    }
    for (long i = 1; i < L; ++i) {
        for (long t = i; t <= T - L + i; ++t) {
            double via_stay = (t > i) ? q(i, t - 1) : inf;
            double via_open = q(i - 1, t - 1);
            if (via_stay <= via_open) {
                q(i, t) = via_stay + cost(i, t);
                stay[static_cast<size_t>(i)][static_cast<size_t>(t)] = true;
            } else {
                q(i, t) = via_open + cost(i, t);
            }
        }
    }

    std::vector<int> durations(static_cast<size_t>(L), 0);
    long i = L - 1;
    for (long t = T - 1; t >= 0; --t) {
        ++durations[static_cast<size_t>(i)];
        if (!stay[static_cast<size_t>(i)][static_cast<size_t>(t)]) --i;
    }
    require(i == -1, "align_train: backtrack failed");
    return durations;
}

InferDurations durations_from_log(const std::vector<double>& log_durations, int max_frames) {
    require(!log_durations.empty(), "durations_from_log: empty input");
    InferDurations out;
    out.durations.reserve(log_durations.size());
    long total = 0;
    for (double ld : log_durations) {
        require(std::isfinite(ld), "durations_from_log: non-finite log duration");
        // Guard against 1-ulp overshoot of exp(log(n)) pushing ceil to n+1.
        long d = static_cast<long>(std::ceil(std::exp(ld) - 1e-9));
        d = std::max<long>(d, 1);
        if (total + d > max_frames) {
            d = std::max<long>(1, static_cast<long>(max_frames) - total);
            out.capped = true;
        }
        out.durations.push_back(static_cast<int>(d));
        total += d;
    }
    require(total <= max_frames || !out.capped,
            "durations_from_log: sequence too long for max-frames cap");
    return out;
}

Tensor expand_by_durations(const Tensor& mu_tilde, const std::vector<int>& durations) {
    require(static_cast<long>(durations.size()) == mu_tilde.rows(),
            "expand_by_durations: one duration per phoneme required");
    std::vector<int> frame_rows;
    for (size_t i = 0; i < durations.size(); ++i) {
        require(durations[i] >= 0, "expand_by_durations: negative duration");
        for (int k = 0; k < durations[i]; ++k) frame_rows.push_back(static_cast<int>(i));
    }
    require(!frame_rows.empty(), "expand_by_durations: zero total duration");
    return gather_rows(mu_tilde, frame_rows);
}

// --- losses ------------------------------------------------------------------

double loss_encoder(const Matrix& mu, const Matrix& z_y) {
    require(mu.rows() == z_y.rows() && mu.cols() == z_y.cols(), "loss_encoder: shape mismatch");
    return nn::mse_value(mu, z_y);
}

double loss_duration(const std::vector<double>& p_hat, const std::vector<double>& p) {
    require(p_hat.size() == p.size() && !p.empty(), "loss_duration: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double d = p_hat[i] - p[i];
        acc += d * d;
    }
    return acc / static_cast<double>(p.size());
}

double loss_decoder(const Matrix& z_hat, const Matrix& z_y) {
    require(z_hat.rows() == z_y.rows() && z_hat.cols() == z_y.cols(),
            "loss_decoder: shape mismatch");
    return nn::mse_value(z_hat, z_y);
}

// --- training ----------------------------------------------------------------

TtsLossGraph tts_loss_graph(const TtsModel& model, const std::vector<TtsBatchItem>& batch,
                            Rng& crop_rng) {
    require(!batch.empty(), "tts_loss_graph: empty batch");
    const int F = model.config().n_mels;
    for (const auto& item : batch) {
        require(item.mel.cols() == F, "tts_loss_graph: mel width mismatch in batch");
    }

    // Encode all phonemes in one stacked pass.
    std::vector<int> all_ids;
    std::vector<long> seq_offset;
    for (const auto& item : batch) {
        seq_offset.push_back(static_cast<long>(all_ids.size()));
        all_ids.insert(all_ids.end(), item.ids.begin(), item.ids.end());
    }
    Tensor mu_stack = model.encode(all_ids);

    // Per-item monotonic alignment, then one global frame -> phoneme row map.
    std::vector<int> frame_rows;
    std::vector<double> log_dur_targets;
    Matrix z_full(0, F);
    long total_frames = 0;
    for (const auto& item : batch) total_frames += item.mel.rows();
    z_full.resize(total_frames, F);

    std::vector<std::pair<long, long>> frame_span;  // per item: (start, count) in stacked frames
    long cursor = 0;
    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& item = batch[b];
        const long L = static_cast<long>(item.ids.size());
        Matrix mu_item = mu_stack.value().middleRows(seq_offset[b], L);
        std::vector<int> durations = align_train(mu_item, item.mel);
        for (long i = 0; i < L; ++i) {
            log_dur_targets.push_back(std::log(static_cast<double>(durations[i])));
            for (int k = 0; k < durations[i]; ++k) {
                frame_rows.push_back(static_cast<int>(seq_offset[b] + i));
            }
        }
        z_full.middleRows(cursor, item.mel.rows()) = item.mel;
        frame_span.emplace_back(cursor, item.mel.rows());
        cursor += item.mel.rows();
    }

    Tensor mu_full = gather_rows(mu_stack, frame_rows);
    Tensor l_encoder = mse(mu_full, Tensor::constant(z_full));

    // Duration loss on the gradient-stopped latents.
    Tensor p_hat = model.predict_durations(mu_stack);
    Matrix p_target(static_cast<long>(log_dur_targets.size()), 1);
    for (size_t i = 0; i < log_dur_targets.size(); ++i) {
        p_target(static_cast<long>(i), 0) = log_dur_targets[i];
    }
    Tensor l_duration = mse(p_hat, Tensor::constant(p_target));

    // Decoder on fixed-length random crops (or full utterances when shorter).
    const int crop = model.config().crop_frames;
    std::vector<int> crop_indices;
    std::vector<int> crop_speakers;
    for (size_t b = 0; b < batch.size(); ++b) {
        const auto [start, count] = frame_span[b];
        long off = 0, len = count;
        if (count > crop) {
            off = static_cast<long>(crop_rng.below(static_cast<uint64_t>(count - crop + 1)));
            len = crop;
        }
        for (long k = 0; k < len; ++k) {
            crop_indices.push_back(static_cast<int>(start + off + k));
            crop_speakers.push_back(batch[b].speaker_idx);
        }
    }
    Matrix z_crop(static_cast<long>(crop_indices.size()), F);
    for (size_t i = 0; i < crop_indices.size(); ++i) {
        z_crop.row(static_cast<long>(i)) = z_full.row(crop_indices[i]);
    }
    Tensor mu_crop = gather_rows(mu_full, crop_indices);
    Tensor z_hat = model.decode(mu_crop, crop_speakers);
    Tensor l_decoder = mse(z_hat, Tensor::constant(z_crop));

    return {l_encoder, l_duration, l_decoder};
}

TtsStepResult tts_train_step(TtsModel& model, const std::vector<TtsBatchItem>& batch,
                             nn::Adam& opt, Rng crop_rng) {
    TtsLossGraph g = tts_loss_graph(model, batch, crop_rng);
    TtsStepResult res;
    res.l_encoder = g.l_encoder.scalar();
    res.l_duration = g.l_duration.scalar();
    res.l_decoder = g.l_decoder.scalar();
    res.total = res.l_encoder + res.l_duration + res.l_decoder;
    if (!std::isfinite(res.total)) {
        std::string ids;
        for (const auto& item : batch) ids += item.utt_id + " ";
        throw NumericalFailure("tts_train_step: non-finite loss, step aborted; batch: " + ids);
    }
    Tensor total = add(add(g.l_encoder, g.l_duration), g.l_decoder);
    model.params().zero_grad();
    nn::backward(total);
    opt.step();
    return res;
}

// --- synthesis ---------------------------------------------------------------

SynthesisResult synthesize_mel(const TtsModel& model, const std::vector<int>& phoneme_ids,
                               int speaker_idx, const audio::FeatureConfig& cfg) {
    Tensor mu_tilde = model.encode(phoneme_ids);
    Tensor p_hat = model.predict_durations(mu_tilde);
    std::vector<double> log_d(static_cast<size_t>(p_hat.rows()));
    for (long i = 0; i < p_hat.rows(); ++i) log_d[static_cast<size_t>(i)] = p_hat.value()(i, 0);
    InferDurations d = durations_from_log(log_d, model.config().max_frames);

    Tensor mu = expand_by_durations(mu_tilde, d.durations);
    const long T = mu.rows();
    const int cap = model.config().max_frames;

    SynthesisResult out;
    out.durations = d.durations;
    out.duration_capped = d.capped;

    Matrix mel(T, model.config().n_mels);
    if (T <= cap) {
        mel = model.decode(Tensor::constant(mu.value()), speaker_idx).value();
    } else {
        // The decoder is frame-local; chunking is exact, seams recorded anyway.
        const long overlap = 16;
        long pos = 0;
        while (pos < T) {
            long start = std::max<long>(0, pos - overlap);
            long len = std::min<long>(cap, T - start);
            Matrix chunk =
                model.decode(Tensor::constant(mu.value().middleRows(start, len)), speaker_idx)
                    .value();
            long copy_from = pos - start;
            mel.middleRows(pos, len - copy_from) = chunk.middleRows(copy_from, len - copy_from);
            pos = start + len;
            if (pos < T) out.decode_seams.push_back(pos);
        }
    }
    out.mel.frames = mel;
    out.mel.frame_hop_ms = cfg.hop_ms();
    return out;
}

// --- checkpoints ---------------------------------------------------------------

void save_tts(const std::filesystem::path& path, const TtsModel& model, uint64_t vocab_hash,
              const audio::FeatureConfig& feature_cfg) {
    const TtsConfig& c = model.config();
    nlohmann::json header = {
        {"kind", "tts"},
        {"arch",
         {{"vocab_size", c.vocab_size},
          {"n_mels", c.n_mels},
          {"emb_dim", c.emb_dim},
          {"enc_hidden", c.enc_hidden},
          {"dur_hidden", c.dur_hidden},
          {"dec_hidden", c.dec_hidden},
          {"spk_dim", c.spk_dim},
          {"crop_frames", c.crop_frames},
          {"max_frames", c.max_frames}}},
        {"speakers", model.speakers()},
        {"vocab_hash", hex64(vocab_hash)},
        {"feature", feature_cfg},
    };
    write_checkpoint(path, header, model.params());
}

LoadedTts load_tts(const std::filesystem::path& path) {
    nlohmann::json h = read_checkpoint_header(path);
    require(h.value("kind", "") == "tts", "load_tts: not a tts checkpoint");
    const auto& a = h.at("arch");
    TtsConfig c;
    c.vocab_size = a.at("vocab_size");
    c.n_mels = a.at("n_mels");
    c.emb_dim = a.at("emb_dim");
    c.enc_hidden = a.at("enc_hidden");
    c.dur_hidden = a.at("dur_hidden");
    c.dec_hidden = a.at("dec_hidden");
    c.spk_dim = a.at("spk_dim");
    c.crop_frames = a.at("crop_frames");
    c.max_frames = a.at("max_frames");
    std::vector<std::string> speakers = h.at("speakers");

    LoadedTts out{TtsModel(c, speakers, /*seed=*/0), 0, {}};
    read_checkpoint_params(path, out.model.params());
    out.vocab_hash = std::stoull(h.at("vocab_hash").get<std::string>(), nullptr, 16);
    out.feature_cfg = h.at("feature").get<audio::FeatureConfig>();
    return out;
}

}  // namespace aty::tts
