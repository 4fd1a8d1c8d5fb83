#include "atytts/finetune.hpp"

#include <cmath>

namespace aty::finetune {

using nn::add;
using nn::backward;
using nn::mse;
using nn::scale;
using nn::Tensor;

audio::MelSpectrogram scm_forward(const audio::MelSpectrogram& z_s, const tts::TtsModel& model,
                                  int target_speaker_idx) {
    require(z_s.n_mels() == model.config().n_mels, "scm_forward: mel width does not match model");
    require(z_s.n_frames() <= model.config().max_frames, "scm_forward: input exceeds frame cap");
    audio::MelSpectrogram out;
    out.frames = model.decode(Tensor::constant(z_s.frames), target_speaker_idx).value();
    out.frame_hop_ms = z_s.frame_hop_ms;
    return out;
}

audio::MelSpectrogram acm_forward(const audio::MelSpectrogram& z_t, const tts::TtsModel& model,
                                  int target_speaker_idx) {
    require(z_t.n_mels() == model.config().n_mels, "acm_forward: mel width does not match model");
    require(z_t.n_frames() <= model.config().max_frames, "acm_forward: input exceeds frame cap");
    audio::MelSpectrogram out;
    out.frames = model.decode(Tensor::constant(z_t.frames), target_speaker_idx).value();
    out.frame_hop_ms = z_t.frame_hop_ms;
    return out;
}

double loss_speaker(const Matrix& z1_hat, const Matrix& z_a) {
    require(z1_hat.rows() == z_a.rows() && z1_hat.cols() == z_a.cols(),
            "loss_speaker: shape mismatch");
    return nn::mse_value(z1_hat, z_a);
}

double loss_atypical(const Matrix& z2_hat, const Matrix& z_a) {
    require(z2_hat.rows() == z_a.rows() && z2_hat.cols() == z_a.cols(),
            "loss_atypical: shape mismatch");
    return nn::mse_value(z2_hat, z_a);
}

AuxLossGraph aux_loss_graph(const tts::TtsModel& model, const std::vector<AuxCrop>& aux_batch,
                            int target_speaker_idx) {
    require(!aux_batch.empty(), "aux_loss_graph: empty auxiliary batch");
    const int F = model.config().n_mels;
    long total = 0;
    for (const auto& c : aux_batch) {
        require(c.z_s.rows() == c.z_t.rows() && c.z_s.rows() == c.z_a.rows(),
                "aux crop: frame counts disagree");
        require(c.z_s.cols() == F && c.z_t.cols() == F && c.z_a.cols() == F,
                "aux crop: mel width mismatch");
        total += c.z_s.rows();
    }
    Matrix zs(total, F), zt(total, F), za(total, F);
    long cursor = 0;
    for (const auto& c : aux_batch) {
        zs.middleRows(cursor, c.z_s.rows()) = c.z_s;
        zt.middleRows(cursor, c.z_t.rows()) = c.z_t;
        za.middleRows(cursor, c.z_a.rows()) = c.z_a;
        cursor += c.z_s.rows();
    }
    Tensor z1_hat = model.decode(Tensor::constant(zs), target_speaker_idx);
    Tensor z2_hat = model.decode(Tensor::constant(zt), target_speaker_idx);
    Tensor za_c = Tensor::constant(za);
    return {mse(z1_hat, za_c), mse(z2_hat, za_c)};
}

AtyLossBreakdown aty_train_step(tts::TtsModel& model,
                                const std::vector<tts::TtsBatchItem>& tts_batch,
                                const std::vector<AuxCrop>& aux_batch, int target_speaker_idx,
                                nn::Adam& opt, const FinetuneWeights& weights, Rng crop_rng) {
    require(weights.lambda_speaker >= 0.0 && weights.lambda_atypical >= 0.0,
            "aty_train_step: loss weights must be non-negative");
    const bool use_aux =
        (weights.lambda_speaker > 0.0 || weights.lambda_atypical > 0.0) && !aux_batch.empty();

    Rng tts_rng = crop_rng.derive("tts");
    tts::TtsLossGraph g = tts::tts_loss_graph(model, tts_batch, tts_rng);

    AtyLossBreakdown out;
    out.l_encoder = g.l_encoder.scalar();
    out.l_duration = g.l_duration.scalar();
    out.l_decoder = g.l_decoder.scalar();

    Tensor total = add(add(g.l_encoder, g.l_duration), g.l_decoder);
    if (use_aux) {
        AuxLossGraph aux = aux_loss_graph(model, aux_batch, target_speaker_idx);
        Tensor w_speaker = scale(aux.l_speaker, weights.lambda_speaker);
        Tensor w_atypical = scale(aux.l_atypical, weights.lambda_atypical);
        out.l_speaker = w_speaker.scalar();
        out.l_atypical = w_atypical.scalar();
        total = add(total, add(w_speaker, w_atypical));
    }
    out.total = out.l_encoder + out.l_duration + out.l_decoder + out.l_speaker + out.l_atypical;

    const std::pair<const char*, double> components[] = {
        {"L_encoder", out.l_encoder},   {"L_duration", out.l_duration},
        {"L_decoder", out.l_decoder},   {"L_speaker", out.l_speaker},
        {"L_atypical", out.l_atypical},
    };
    for (const auto& [name, value] : components) {
        if (!std::isfinite(value)) {
            throw NumericalFailure(std::string("aty_train_step: non-finite component ") + name);
        }
    }

    model.params().zero_grad();
    backward(total);
    opt.step();
    return out;
}

FinetunePlan::FinetunePlan(std::vector<vc::PairedTriple> triples, int crop_frames, uint64_t seed)
    : triples_(std::move(triples)), crop_frames_(crop_frames), seed_(seed) {
    require(crop_frames_ >= 1, "finetune plan: crop_frames must be positive");
    Rng rng = Rng(seed_).derive("plan");
    for (size_t i = 0; i < triples_.size(); ++i) {
        const long T = triples_[i].z_s.n_frames();
        long offset = 0;
        if (T > crop_frames_) {
            offset = static_cast<long>(rng.below(static_cast<uint64_t>(T - crop_frames_ + 1)));
        }
        order_.push_back({i, offset});
    }
    rng.derive("shuffle").shuffle(order_);
}

AuxCrop FinetunePlan::crop(size_t index) const {
    require(index < order_.size(), "finetune plan: crop index out of range");
    const Slot& slot = order_[index];
    const vc::PairedTriple& t = triples_[slot.triple];
    const long T = t.z_s.n_frames();
    const long len = std::min<long>(crop_frames_, T);
    AuxCrop c;
    c.triple_id = t.triple_id;
    c.offset = slot.offset;
    c.z_s = t.z_s.frames.middleRows(slot.offset, len);
    c.z_t = t.z_t.frames.middleRows(slot.offset, len);
    c.z_a = t.z_a.frames.middleRows(slot.offset, len);
    return c;
}

nlohmann::json FinetunePlan::manifest() const {
    nlohmann::json crops = nlohmann::json::array();
    for (const auto& slot : order_) {
        crops.push_back({{"triple_id", triples_[slot.triple].triple_id},
                         {"offset", slot.offset}});
    }
    return {{"crop_frames", crop_frames_}, {"seed", seed_}, {"crops", crops}};
}

FinetunePlan build_finetune_plan(const std::string& speaker_id,
                                 const std::vector<vc::SourceUtterance>& source_corpus,
                                 const vc::SpeakerEmbedding& target, const vc::VcModel& vc_model,
                                 double hours, int crop_frames, uint64_t seed) {
    require(target.speaker_id == speaker_id, "build_finetune_plan: embedding speaker mismatch");
    vc::TripleGenResult gen = vc::generate_paired_triples(source_corpus, target, vc_model, hours);
    return FinetunePlan(std::move(gen.triples), crop_frames, seed);
}

}  // namespace aty::finetune
