#pragma once

#include <string>
#include <vector>

#include "atytts/audio.hpp"
#include "atytts/nn.hpp"
#include "atytts/serialize.hpp"

namespace aty::vc {

using nn::Matrix;
using nn::Tensor;

struct SpeakerEmbedding {
    std::string speaker_id;
    Eigen::RowVectorXd vec;  // unit L2 norm
};

struct VcConfig {
    int n_mels = 80;
    int enc_hidden = 96;
    int bottleneck = 16;  // hidden representation width H
    int dec_hidden = 96;
    int spk_dim = 16;
};

// Voice conversion model: shared encoder to a narrow hidden representation,
// plus twin decoders (typical / atypical) conditioned on a speaker embedding.
class VcModel {
  public:
    VcModel(VcConfig cfg, std::vector<std::string> speakers, uint64_t seed);

    const VcConfig& config() const { return cfg_; }
    const std::vector<std::string>& speakers() const { return speakers_; }
    int speaker_index(const std::string& speaker_id) const;

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Hidden representation, T' x H.
    Tensor encode(const Tensor& mel) const;

    // Unit-normalized trainable embedding row, 1 x spk_dim (graph tensor).
    Tensor embedding_row(int speaker_idx) const;
    SpeakerEmbedding speaker_embedding(int speaker_idx) const;

    // Decoders over (h, e). `cond` is a 1 x spk_dim tensor broadcast to T' rows.
    Tensor decode_typical(const Tensor& hidden, const Tensor& cond) const;
    Tensor decode_atypical(const Tensor& hidden, const Tensor& cond) const;

    // Batched variant: row i of the stacked hidden uses cond_rows[tile[i]].
    Tensor decode_typical_tiled(const Tensor& hidden, const Tensor& cond_stack,
                                const std::vector<int>& tile) const;
    Tensor decode_atypical_tiled(const Tensor& hidden, const Tensor& cond_stack,
                                 const std::vector<int>& tile) const;

    // Copies g^t parameters into g^a (pre-finetune initialization).
    void copy_typical_to_atypical();

    std::vector<Tensor> encoder_and_typical_params() const;  // + speaker table
    std::vector<Tensor> atypical_params() const;
    uint64_t encoder_fingerprint() const;
    uint64_t typical_decoder_fingerprint() const;

  private:
    Tensor decode_with(const nn::Linear& l1, const nn::Linear& l2, const nn::Linear& l3,
                       const Tensor& hidden, const Tensor& cond) const;

    VcConfig cfg_;
    std::vector<std::string> speakers_;
    nn::ParamStore params_;
    nn::Linear enc1_, enc2_;
    nn::Linear dect1_, dect2_, dect3_;
    nn::Linear deca1_, deca2_, deca3_;
    Tensor spk_;
};

// --- conversion ----------------------------------------------------------------

// Typical-to-typical conversion preserving the frame count.
audio::MelSpectrogram convert_typical(const audio::MelSpectrogram& z_s, const SpeakerEmbedding& e,
                                      const VcModel& model);
// Typical-to-atypical conversion through g^a.
audio::MelSpectrogram convert_atypical(const audio::MelSpectrogram& z_s, const SpeakerEmbedding& e,
                                       const VcModel& model);

// --- training ------------------------------------------------------------------

struct VcPair {
    Matrix source;  // T' x F input mel
    Matrix target;  // T' x F reconstruction target
    int speaker_idx = 0;
    std::string id;
};

// One Adam step of reconstruction MSE through the typical decoder.
double vc_train_step(VcModel& model, const std::vector<VcPair>& batch, nn::Adam& opt);

// Fine-tunes only g^a on (mel, embedding) self-reconstruction pairs; the
// encoder, typical decoder and speaker table are untouched. Returns the
// per-epoch reconstruction losses.
std::vector<double> finetune_atypical_decoder(
    VcModel& model, const std::vector<std::pair<Matrix, SpeakerEmbedding>>& speaker_data,
    int epochs, int batch_size, double lr, uint64_t seed);

// --- paired data ---------------------------------------------------------------

struct SourceUtterance {
    std::string id;
    Matrix mel;
    double duration_s = 0.0;
};

struct PairedTriple {
    std::string triple_id;
    std::string source_id;
    std::string speaker_id;
    uint64_t seed = 0;
    audio::MelSpectrogram z_s, z_t, z_a;
};

struct TripleGenResult {
    std::vector<PairedTriple> triples;
    bool exhausted = false;  // corpus ran out before reaching the target hours
    double total_hours = 0.0;
};

TripleGenResult generate_paired_triples(const std::vector<SourceUtterance>& source_corpus,
                                        const SpeakerEmbedding& target, const VcModel& model,
                                        double hours);

// Triple store: mel containers plus a provenance manifest (JSON lines with
// triple_id, source_id, speaker_id, seed and the three mel paths).
void write_triple_store(const std::filesystem::path& dir,
                        const std::vector<PairedTriple>& triples);
std::vector<PairedTriple> read_triple_store(const std::filesystem::path& dir);

// --- checkpoints -----------------------------------------------------------------

void save_vc(const std::filesystem::path& path, const VcModel& model);

struct LoadedVc {
    VcModel model;
};

LoadedVc load_vc(const std::filesystem::path& path);

}  // namespace aty::vc
