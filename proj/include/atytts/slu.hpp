#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "atytts/audio.hpp"
#include "atytts/manifest.hpp"
#include "atytts/nn.hpp"
#include "atytts/serialize.hpp"

namespace aty::slu {

// --- severity grouping -----------------------------------------------------------

enum class Group { Low, High };
constexpr double kSeverityThreshold = 1.5;  // Low iff severity <= 1.5

Group assign_group(double severity);
std::string group_name(Group g);

// --- cross validation --------------------------------------------------------------

struct CvSplit {
    std::vector<std::string> train_speakers;
    std::vector<std::string> test_speakers;
};

// k disjoint leave-speakers-out folds covering every speaker exactly once.
std::vector<CvSplit> make_cv_splits(const std::vector<std::string>& speakers, int k,
                                    uint64_t seed);

// --- classifier ----------------------------------------------------------------------

struct SluConfig {
    int n_mels = 80;
    int chunks = 8;    // temporal pooling segments
    int hidden = 128;
    uint64_t seed = 1;
};

struct SluTrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double lr = 1e-3;
};

// Chunked mean-pooling of a mel into a fixed-length feature row.
Eigen::RowVectorXd chunk_features(const audio::MelSpectrogram& mel, int chunks);

struct LabeledUtterance {
    Eigen::RowVectorXd features;  // chunk_features output
    std::string intent;
    std::vector<std::pair<std::string, std::string>> entities;
    std::string speaker_id;
    std::optional<double> severity;
    std::string utterance_id;
};

struct SluPrediction {
    std::string intent;
    std::vector<std::pair<std::string, std::string>> entities;
};

// Mel-feature intent classifier with a bag-of-entity-tuples head.
class SluModel {
  public:
    SluModel(SluConfig cfg, std::vector<std::string> intent_labels,
             std::vector<std::pair<std::string, std::string>> entity_labels, uint64_t seed);

    const SluConfig& config() const { return cfg_; }
    const std::vector<std::string>& intent_labels() const { return intents_; }
    const std::vector<std::pair<std::string, std::string>>& entity_labels() const {
        return entities_;
    }

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    void set_normalization(Eigen::RowVectorXd mean, Eigen::RowVectorXd std);
    const Eigen::RowVectorXd& feat_mean() const { return feat_mean_; }
    const Eigen::RowVectorXd& feat_std() const { return feat_std_; }

    // Row-stacked logits for a normalized feature batch.
    nn::Tensor intent_logits(const nn::Tensor& x) const;
    nn::Tensor entity_logits(const nn::Tensor& x) const;
    nn::Matrix normalize(const nn::Matrix& raw_features) const;

    SluPrediction predict(const Eigen::RowVectorXd& features) const;

    std::vector<nn::Tensor> all_params() const;

  private:
    SluConfig cfg_;
    std::vector<std::string> intents_;
    std::vector<std::pair<std::string, std::string>> entities_;
    nn::ParamStore params_;
    nn::Linear trunk_, intent_head_, entity_head_;
    Eigen::RowVectorXd feat_mean_, feat_std_;
};

// Trains on the utterances' intent + entity labels; label maps come from the
// training set. Refuses single-class training sets.
SluModel train_slu(const std::vector<LabeledUtterance>& train, const SluConfig& cfg,
                   const SluTrainConfig& train_cfg, std::vector<double>* epoch_losses = nullptr);

void save_slu(const std::filesystem::path& path, const SluModel& model);
SluModel load_slu(const std::filesystem::path& path);

// --- metrics ----------------------------------------------------------------------------

double intent_accuracy(const SluModel& model, const std::vector<LabeledUtterance>& test);
double slu_f1(const SluModel& model, const std::vector<LabeledUtterance>& test);

// Micro-averaged exact-match F1 over (type, value) tuple sets.
double entity_tuple_f1(
    const std::vector<std::vector<std::pair<std::string, std::string>>>& gold,
    const std::vector<std::vector<std::pair<std::string, std::string>>>& predicted);

struct GroupedAccuracy {
    std::optional<double> low, high;
    double all = 0.0;  // pooled over all test utterances, not a group mean
    int n_low = 0, n_high = 0, n_all = 0;
};

// Per-severity-group ICA; utterances without severity count toward "all" only.
GroupedAccuracy grouped_intent_accuracy(const SluModel& model,
                                        const std::vector<LabeledUtterance>& test);

// --- subjective score comparison -----------------------------------------------------------

struct ScoreRow {
    std::string speaker_id;
    std::string trait;
    std::string source;  // "real" or "synthetic"
    std::string rater;
    double score = 0.0;  // in [0, 4]
};

// CSV with header speaker_id,trait,source,rater,score.
void write_score_table(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_score_table(const std::filesystem::path& path);

struct SubjectiveStats {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;  // absent when the real scores have zero variance
    std::string diagnostic;
    int n_pairs = 0;
};

// Pairs real/synthetic scores per (speaker, rater) for one trait.
SubjectiveStats subjective_stats(const std::vector<ScoreRow>& table, const std::string& trait);

// --- reports ---------------------------------------------------------------------------------

struct ReportRow {
    std::string method;
    std::string group;  // Low / High / All
    std::string metric;
    std::optional<double> value;  // absent cells rendered as NA
};

// CSV plus a fixed-width text table; deterministic bytes for fixed input.
void report_tables(const std::vector<ReportRow>& rows, const std::filesystem::path& csv_path,
                   const std::filesystem::path& text_path);

}  // namespace aty::slu
