#pragma once

#include <vector>

#include "atytts/tts.hpp"
#include "atytts/vc.hpp"

namespace aty::finetune {

using nn::Matrix;
using nn::Tensor;

// Frame-synchronized fixed-length crops from a paired triple; the three
// sub-matrices always come from identical frame ranges.
struct AuxCrop {
    Matrix z_s, z_t, z_a;
    std::string triple_id;
    long offset = 0;
};

struct FinetuneWeights {
    double lambda_speaker = 1.0;   // 0 reserved for ablations
    double lambda_atypical = 1.0;
};

struct AtyLossBreakdown {
    double l_encoder = 0.0;
    double l_duration = 0.0;
    double l_decoder = 0.0;
    double l_speaker = 0.0;
    double l_atypical = 0.0;
    double total = 0.0;
};

// SCM: the TTS decoder converts a source-typical mel toward the target
// speaker's atypical mel. Uses the same decoder parameters as tts decode.
audio::MelSpectrogram scm_forward(const audio::MelSpectrogram& z_s, const tts::TtsModel& model,
                                  int target_speaker_idx);
// ACM: same decoder applied to the typical mel with target timbre.
audio::MelSpectrogram acm_forward(const audio::MelSpectrogram& z_t, const tts::TtsModel& model,
                                  int target_speaker_idx);

double loss_speaker(const Matrix& z1_hat, const Matrix& z_a);
double loss_atypical(const Matrix& z2_hat, const Matrix& z_a);

// Graph losses for an auxiliary sub-batch (stacked crops).
struct AuxLossGraph {
    Tensor l_speaker, l_atypical;
};
AuxLossGraph aux_loss_graph(const tts::TtsModel& model, const std::vector<AuxCrop>& aux_batch,
                            int target_speaker_idx);

// One optimization step on the five-term objective
// L_encoder + L_duration + L_decoder + lambda_s * L_speaker + lambda_a * L_atypical.
// With both lambdas zero the step is exactly a tts-core train step.
AtyLossBreakdown aty_train_step(tts::TtsModel& model,
                                const std::vector<tts::TtsBatchItem>& tts_batch,
                                const std::vector<AuxCrop>& aux_batch, int target_speaker_idx,
                                nn::Adam& opt, const FinetuneWeights& weights, Rng crop_rng);

// Deterministic shuffled crop stream over paired triples.
class FinetunePlan {
  public:
    FinetunePlan(std::vector<vc::PairedTriple> triples, int crop_frames, uint64_t seed);

    size_t size() const { return order_.size(); }
    bool empty() const { return order_.empty(); }
    AuxCrop crop(size_t index) const;
    nlohmann::json manifest() const;

  private:
    std::vector<vc::PairedTriple> triples_;
    struct Slot {
        size_t triple = 0;
        long offset = 0;
    };
    std::vector<Slot> order_;
    int crop_frames_;
    uint64_t seed_;
};

// Generates paired triples for the target speaker and plans the crop stream.
FinetunePlan build_finetune_plan(const std::string& speaker_id,
                                 const std::vector<vc::SourceUtterance>& source_corpus,
                                 const vc::SpeakerEmbedding& target, const vc::VcModel& vc_model,
                                 double hours, int crop_frames, uint64_t seed);

}  // namespace aty::finetune
