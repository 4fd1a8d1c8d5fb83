#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atytts/audio.hpp"
#include "atytts/nn.hpp"
#include "atytts/serialize.hpp"
#include "atytts/text.hpp"

namespace aty::tts {

using nn::Matrix;
using nn::Tensor;

struct TtsConfig {
    int vocab_size = 0;  // including the pad slot
    int n_mels = 80;
    int emb_dim = 48;
    int enc_hidden = 96;
    int dur_hidden = 48;
    int dec_hidden = 96;
    int spk_dim = 16;
    int crop_frames = 172;  // decoder training segment
    int max_frames = 2000;  // synthesis duration cap
};

// Text-to-mel model: per-phoneme encoder, log-domain duration predictor, and
// a residual refinement decoder conditioned on a learned speaker embedding.
class TtsModel {
  public:
    TtsModel(TtsConfig cfg, std::vector<std::string> speakers, uint64_t seed);

    const TtsConfig& config() const { return cfg_; }
    const std::vector<std::string>& speakers() const { return speakers_; }
    int speaker_index(const std::string& speaker_id) const;

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Latent phoneme features, L x F. Ids must be valid non-pad vocabulary ids.
    Tensor encode(const std::vector<int>& ids) const;

    // Log-durations, L x 1, from a gradient-stopped copy of the latents.
    Tensor predict_durations(const Tensor& mu_tilde) const;
    // Same network without the gradient stop (training uses the stopped form).
    Tensor duration_head(const Tensor& mu_tilde_stopped) const;

    // Residual refinement on a T x F input in the decoder's conditioning slot.
    Tensor decode(const Tensor& mel_in, const std::vector<int>& speaker_rows) const;
    Tensor decode(const Tensor& mel_in, int speaker_idx) const;

    std::vector<Tensor> all_params() const;

  private:
    TtsConfig cfg_;
    std::vector<std::string> speakers_;
    nn::ParamStore params_;
    Tensor emb_;
    nn::Linear enc1_, enc2_, enc3_;
    nn::Linear dur1_, dur2_;
    nn::Linear dec1_, dec2_, dec3_;
    Tensor spk_;
};

// --- alignment ---------------------------------------------------------------

// Monotonic alignment search: durations (each >= 1, summing to T) minimizing
// sum_t ||mu_tilde[a(t)] - z[t]||^2 over monotone surjective assignments.
// Requires L <= T.
std::vector<int> align_train(const Matrix& mu_tilde, const Matrix& z);

struct InferDurations {
    std::vector<int> durations;  // ceil(exp(log_duration)), >= 1
    bool capped = false;         // some duration hit the max-frames cap
};

InferDurations durations_from_log(const std::vector<double>& log_durations, int max_frames);

// Repeat row i of mu_tilde durations[i] times, in order.
Tensor expand_by_durations(const Tensor& mu_tilde, const std::vector<int>& durations);

// --- losses ------------------------------------------------------------------

double loss_encoder(const Matrix& mu, const Matrix& z_y);
double loss_duration(const std::vector<double>& p_hat, const std::vector<double>& p);
double loss_decoder(const Matrix& z_hat, const Matrix& z_y);

// --- training ----------------------------------------------------------------

struct TtsBatchItem {
    std::vector<int> ids;
    Matrix mel;  // T x F
    int speaker_idx = 0;
    std::string utt_id;
};

struct TtsStepResult {
    double l_encoder = 0.0;
    double l_duration = 0.0;
    double l_decoder = 0.0;
    double total = 0.0;
};

// Losses over a batch, stacked; decoder sees crop_frames random crops. The
// returned tensors are graph scalars so callers can extend the objective.
struct TtsLossGraph {
    Tensor l_encoder, l_duration, l_decoder;
};

TtsLossGraph tts_loss_graph(const TtsModel& model, const std::vector<TtsBatchItem>& batch,
                            Rng& crop_rng);

// One Adam step on L_encoder + L_duration + L_decoder. Throws
// NumericalFailure (naming the batch) if any component is non-finite.
TtsStepResult tts_train_step(TtsModel& model, const std::vector<TtsBatchItem>& batch,
                             nn::Adam& opt, Rng crop_rng);

// --- synthesis ---------------------------------------------------------------

struct SynthesisResult {
    audio::MelSpectrogram mel;
    std::vector<int> durations;
    bool duration_capped = false;
    std::vector<long> decode_seams;  // chunk boundaries when T exceeded the cap
};

SynthesisResult synthesize_mel(const TtsModel& model, const std::vector<int>& phoneme_ids,
                               int speaker_idx, const audio::FeatureConfig& cfg);

// --- checkpoints --------------------------------------------------------------

void save_tts(const std::filesystem::path& path, const TtsModel& model, uint64_t vocab_hash,
              const audio::FeatureConfig& feature_cfg);

struct LoadedTts {
    TtsModel model;
    uint64_t vocab_hash = 0;
    audio::FeatureConfig feature_cfg;
};

LoadedTts load_tts(const std::filesystem::path& path);

}  // namespace aty::tts
