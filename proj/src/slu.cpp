#include "atytts/slu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "atytts/rng.hpp"

namespace aty::slu {

using nn::Matrix;
using nn::Tensor;

Group assign_group(double severity) {
    require(severity >= 0.0 && severity <= 4.0, "assign_group: severity out of [0, 4]");
    return severity <= kSeverityThreshold ? Group::Low : Group::High;
}

std::string group_name(Group g) { return g == Group::Low ? "Low" : "High"; }

std::vector<CvSplit> make_cv_splits(const std::vector<std::string>& speakers, int k,
                                    uint64_t seed) {
    require(k >= 1, "make_cv_splits: k must be >= 1");
    require(k <= static_cast<int>(speakers.size()),
            "make_cv_splits: k exceeds the number of speakers");
    std::vector<std::string> shuffled = speakers;
    Rng(seed).derive("cv").shuffle(shuffled);

    std::vector<std::vector<std::string>> folds(static_cast<size_t>(k));
    for (size_t i = 0; i < shuffled.size(); ++i) {
        folds[i % static_cast<size_t>(k)].push_back(shuffled[i]);
    }
    std::vector<CvSplit> splits;
    for (int f = 0; f < k; ++f) {
        CvSplit s;
        s.test_speakers = folds[static_cast<size_t>(f)];
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            for (const auto& spk : folds[static_cast<size_t>(g)]) s.train_speakers.push_back(spk);
        }
        splits.push_back(std::move(s));
    }
    return splits;
}

Eigen::RowVectorXd chunk_features(const audio::MelSpectrogram& mel, int chunks) {
    require(chunks >= 1, "chunk_features: chunks must be >= 1");
    require(mel.n_frames() >= 1, "chunk_features: empty mel");
    const long T = mel.n_frames(), F = mel.n_mels();
    Eigen::RowVectorXd out(static_cast<long>(chunks) * F);
    for (int c = 0; c < chunks; ++c) {
        long lo = T * c / chunks;
        long hi = std::max(lo + 1, T * (c + 1) / chunks);
        hi = std::min(hi, T);
        if (lo >= T) lo = T - 1;
        out.segment(static_cast<long>(c) * F, F) =
            mel.frames.middleRows(lo, hi - lo).colwise().mean();
    }
    return out;
}

SluModel::SluModel(SluConfig cfg, std::vector<std::string> intent_labels,
                   std::vector<std::pair<std::string, std::string>> entity_labels, uint64_t seed)
    : cfg_(cfg), intents_(std::move(intent_labels)), entities_(std::move(entity_labels)) {
    require(intents_.size() >= 2, "slu model: at least two intent classes required");
    Rng rng(seed);
    const int in_dim = cfg_.chunks * cfg_.n_mels;
    trunk_ = nn::Linear::create(params_, "trunk", in_dim, cfg_.hidden, rng);
    intent_head_ = nn::Linear::create(params_, "intent", cfg_.hidden,
                                      static_cast<int>(intents_.size()), rng);
    entity_head_ = nn::Linear::create(params_, "entity", cfg_.hidden,
                                      std::max<int>(1, static_cast<int>(entities_.size())), rng);
    feat_mean_ = Eigen::RowVectorXd::Zero(in_dim);
    feat_std_ = Eigen::RowVectorXd::Ones(in_dim);
}

void SluModel::set_normalization(Eigen::RowVectorXd mean, Eigen::RowVectorXd std) {
    require(mean.size() == feat_mean_.size() && std.size() == feat_std_.size(),
            "slu model: normalization size mismatch");
    feat_mean_ = std::move(mean);
    feat_std_ = std::move(std);
}

Matrix SluModel::normalize(const Matrix& raw) const {
    require(raw.cols() == feat_mean_.size(), "slu model: feature width mismatch");
    Matrix out = raw;
    out.rowwise() -= feat_mean_;
    out.array().rowwise() /= feat_std_.array();
    return out;
}

Tensor SluModel::intent_logits(const Tensor& x) const {
    return intent_head_(nn::tanh_t(trunk_(x)));
}

Tensor SluModel::entity_logits(const Tensor& x) const {
    return entity_head_(nn::tanh_t(trunk_(x)));
}

SluPrediction SluModel::predict(const Eigen::RowVectorXd& features) const {
    Matrix x = normalize(features);
    Tensor xt = Tensor::constant(x);
    Matrix ilog = intent_logits(xt).value();
    int best = 0;
    ilog.row(0).maxCoeff(&best);
    SluPrediction p;
    p.intent = intents_[static_cast<size_t>(best)];
    if (!entities_.empty()) {
        Matrix elog = entity_logits(xt).value();
        for (long j = 0; j < elog.cols() && j < static_cast<long>(entities_.size()); ++j) {
            if (elog(0, j) > 0.0) {  // sigmoid(x) > 0.5
                p.entities.push_back(entities_[static_cast<size_t>(j)]);
            }
        }
    }
    return p;
}

std::vector<Tensor> SluModel::all_params() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_.items()) out.push_back(t);
    return out;
}

SluModel train_slu(const std::vector<LabeledUtterance>& train, const SluConfig& cfg,
                   const SluTrainConfig& train_cfg, std::vector<double>* epoch_losses) {
    require(!train.empty(), "train_slu: empty training set");

    std::set<std::string> intent_set;
    std::set<std::pair<std::string, std::string>> entity_set;
    for (const auto& u : train) {
        intent_set.insert(u.intent);
        for (const auto& e : u.entities) entity_set.insert(e);
    }
    require(intent_set.size() >= 2,
            "train_slu: training set covers a single intent class; refusing to train");

    SluModel model(cfg, {intent_set.begin(), intent_set.end()},
                   {entity_set.begin(), entity_set.end()}, cfg.seed);

    // Feature normalization from the training set.
    const long D = train[0].features.size();
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(D);
    for (const auto& u : train) mean += u.features;
    mean /= static_cast<double>(train.size());
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(D);
    for (const auto& u : train) {
        var += (u.features - mean).cwiseProduct(u.features - mean);
    }
    var /= static_cast<double>(train.size());
    Eigen::RowVectorXd stdv = (var.array() + 1e-8).sqrt();
    model.set_normalization(mean, stdv);

    std::map<std::string, int> intent_idx;
    for (size_t i = 0; i < model.intent_labels().size(); ++i) {
        intent_idx[model.intent_labels()[i]] = static_cast<int>(i);
    }
    std::map<std::pair<std::string, std::string>, int> entity_idx;
    for (size_t i = 0; i < model.entity_labels().size(); ++i) {
        entity_idx[model.entity_labels()[i]] = static_cast<int>(i);
    }

    nn::Adam opt(model.all_params(), {.lr = train_cfg.lr});
    Rng rng = Rng(cfg.seed).derive("train");
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const long E = std::max<long>(1, static_cast<long>(model.entity_labels().size()));
    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        rng.derive("shuffle", static_cast<uint64_t>(epoch)).shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(train_cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(train_cfg.batch_size));
            const long n = static_cast<long>(end - start);
            Matrix feats(n, D);
            std::vector<int> labels(static_cast<size_t>(n));
            Matrix targets = Matrix::Zero(n, E);
            for (long i = 0; i < n; ++i) {
                const auto& u = train[order[start + static_cast<size_t>(i)]];
                feats.row(i) = u.features;
                labels[static_cast<size_t>(i)] = intent_idx.at(u.intent);
                for (const auto& e : u.entities) {
                    auto it = entity_idx.find(e);
                    if (it != entity_idx.end()) targets(i, it->second) = 1.0;
                }
            }
            Tensor x = Tensor::constant(model.normalize(feats));
            Tensor loss = nn::cross_entropy(model.intent_logits(x), labels);
            if (!model.entity_labels().empty()) {
                loss = nn::add(loss, nn::bce_with_logits(model.entity_logits(x), targets));
            }
            double value = loss.scalar();
            if (!std::isfinite(value)) throw NumericalFailure("train_slu: non-finite loss");
            epoch_loss += value;
            ++batches;
            model.params().zero_grad();
            nn::backward(loss);
            opt.step();
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / std::max(1, batches));
    }
    return model;
}

void save_slu(const std::filesystem::path& path, const SluModel& model) {
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& [t, v] : model.entity_labels()) ents.push_back({t, v});
    nlohmann::json header = {
        {"kind", "slu"},
        {"arch",
         {{"n_mels", model.config().n_mels},
          {"chunks", model.config().chunks},
          {"hidden", model.config().hidden}}},
        {"intents", model.intent_labels()},
        {"entities", ents},
        {"feat_mean", std::vector<double>(model.feat_mean().data(),
                                          model.feat_mean().data() + model.feat_mean().size())},
        {"feat_std", std::vector<double>(model.feat_std().data(),
                                         model.feat_std().data() + model.feat_std().size())},
    };
    write_checkpoint(path, header, model.params());
}

SluModel load_slu(const std::filesystem::path& path) {
    nlohmann::json h = read_checkpoint_header(path);
    require(h.value("kind", "") == "slu", "load_slu: not an slu checkpoint");
    SluConfig cfg;
    cfg.n_mels = h.at("arch").at("n_mels");
    cfg.chunks = h.at("arch").at("chunks");
    cfg.hidden = h.at("arch").at("hidden");
    std::vector<std::pair<std::string, std::string>> ents;
    for (const auto& e : h.at("entities")) {
        ents.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    SluModel model(cfg, h.at("intents"), ents, 0);
    std::vector<double> mean = h.at("feat_mean"), stdv = h.at("feat_std");
    model.set_normalization(
        Eigen::Map<Eigen::RowVectorXd>(mean.data(), static_cast<long>(mean.size())),
        Eigen::Map<Eigen::RowVectorXd>(stdv.data(), static_cast<long>(stdv.size())));
    read_checkpoint_params(path, model.params());
    return model;
}

// --- metrics -----------------------------------------------------------------------

double intent_accuracy(const SluModel& model, const std::vector<LabeledUtterance>& test) {
    require(!test.empty(), "intent_accuracy: empty test set");
    int correct = 0;
    for (const auto& u : test) {
        if (model.predict(u.features).intent == u.intent) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double entity_tuple_f1(
    const std::vector<std::vector<std::pair<std::string, std::string>>>& gold,
    const std::vector<std::vector<std::pair<std::string, std::string>>>& predicted) {
    require(gold.size() == predicted.size(), "entity_tuple_f1: size mismatch");
    require(!gold.empty(), "entity_tuple_f1: empty test set");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        std::set<std::pair<std::string, std::string>> g(gold[i].begin(), gold[i].end());
        std::set<std::pair<std::string, std::string>> p(predicted[i].begin(), predicted[i].end());
        for (const auto& t : p) {
            if (g.count(t)) {
                ++tp;
            } else {
                ++fp;
            }
        }
        for (const auto& t : g) {
            if (!p.count(t)) ++fn;
        }
    }
    if (tp == 0 && (fp > 0 || fn > 0)) return 0.0;
    if (tp == 0) return 1.0;  // no gold and no predictions anywhere
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double slu_f1(const SluModel& model, const std::vector<LabeledUtterance>& test) {
    require(!test.empty(), "slu_f1: empty test set");
    std::vector<std::vector<std::pair<std::string, std::string>>> gold, pred;
    for (const auto& u : test) {
        gold.push_back(u.entities);
        pred.push_back(model.predict(u.features).entities);
    }
    return entity_tuple_f1(gold, pred);
}

GroupedAccuracy grouped_intent_accuracy(const SluModel& model,
                                        const std::vector<LabeledUtterance>& test) {
    require(!test.empty(), "grouped_intent_accuracy: empty test set");
    int c_low = 0, c_high = 0, c_all = 0;
    GroupedAccuracy g;
    for (const auto& u : test) {
        bool ok = model.predict(u.features).intent == u.intent;
        ++g.n_all;
        c_all += ok;
        if (u.severity.has_value()) {
            if (assign_group(*u.severity) == Group::Low) {
                ++g.n_low;
                c_low += ok;
            } else {
                ++g.n_high;
                c_high += ok;
            }
        }
    }
    // "all" pools utterances; it is not the mean of the group accuracies.
    g.all = static_cast<double>(c_all) / g.n_all;
    if (g.n_low > 0) g.low = static_cast<double>(c_low) / g.n_low;
    if (g.n_high > 0) g.high = static_cast<double>(c_high) / g.n_high;
    return g;
}

// --- subjective scores ----------------------------------------------------------------

void write_score_table(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
    std::string out = "speaker_id,trait,source,rater,score\n";
    for (const auto& r : rows) {
        out += r.speaker_id + "," + r.trait + "," + r.source + "," + r.rater + "," +
               format_double(r.score) + "\n";
    }
    write_text_file(path, out);
}

std::vector<ScoreRow> read_score_table(const std::filesystem::path& path) {
    std::vector<ScoreRow> rows;
    auto lines = split(read_text_file(path), '\n');
    require(!lines.empty() && trim(lines[0]) == "speaker_id,trait,source,rater,score",
            "score table: missing or unexpected header");
    for (size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        auto f = split(line, ',');
        require(f.size() == 5, "score table: malformed row '" + line + "'");
        ScoreRow r{f[0], f[1], f[2], f[3], std::stod(f[4])};
        require(r.score >= 0.0 && r.score <= 4.0, "score table: score out of [0, 4]");
        rows.push_back(std::move(r));
    }
    return rows;
}

SubjectiveStats subjective_stats(const std::vector<ScoreRow>& table, const std::string& trait) {
    // Average duplicate rows per (speaker, rater, source), then pair the sources.
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
        cells;
    for (const auto& r : table) {
        if (r.trait != trait) continue;
        auto& cell = cells[{r.speaker_id, r.rater}];
        if (r.source == "real") {
            cell.first.push_back(r.score);
        } else if (r.source == "synthetic") {
            cell.second.push_back(r.score);
        } else {
            throw InvalidInput("subjective_stats: unknown source '" + r.source + "'");
        }
    }
    std::vector<std::pair<double, double>> pairs;
    for (const auto& [key, cell] : cells) {
        if (cell.first.empty() || cell.second.empty()) continue;
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        pairs.emplace_back(mean(cell.first), mean(cell.second));
    }
    require(pairs.size() >= 2, "subjective_stats: need paired scores for at least two speakers");

    SubjectiveStats out;
    out.n_pairs = static_cast<int>(pairs.size());
    double abs_sum = 0.0, sq_sum = 0.0, real_mean = 0.0;
    for (const auto& [r, s] : pairs) {
        abs_sum += std::abs(r - s);
        sq_sum += (r - s) * (r - s);
        real_mean += r;
    }
    const double n = static_cast<double>(pairs.size());
    out.mae = abs_sum / n;
    out.rmse = std::sqrt(sq_sum / n);
    real_mean /= n;
    double ss_tot = 0.0;
    for (const auto& [r, s] : pairs) ss_tot += (r - real_mean) * (r - real_mean);
    if (ss_tot > 0.0) {
        out.r2 = 1.0 - sq_sum / ss_tot;
    } else {
        out.diagnostic = "real scores have zero variance; R^2 undefined";
    }
    return out;
}

// --- reports -------------------------------------------------------------------------

void report_tables(const std::vector<ReportRow>& rows, const std::filesystem::path& csv_path,
                   const std::filesystem::path& text_path) {
    std::string csv = "method,group,metric,value\n";
    for (const auto& r : rows) {
        csv += r.method + "," + r.group + "," + r.metric + "," +
               (r.value.has_value() ? format_double(*r.value) : "NA") + "\n";
    }
    write_text_file(csv_path, csv);

    size_t method_w = 6, group_w = 5, metric_w = 6;
    for (const auto& r : rows) {
        method_w = std::max(method_w, r.method.size());
        group_w = std::max(group_w, r.group.size());
        metric_w = std::max(metric_w, r.metric.size());
    }
    std::ostringstream txt;
    auto pad = [](const std::string& s, size_t w) {
        return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    txt << pad("method", method_w) << "  " << pad("group", group_w) << "  "
        << pad("metric", metric_w) << "  value\n";
    txt << std::string(method_w + group_w + metric_w + 11, '-') << "\n";
    for (const auto& r : rows) {
        char value[32];
        if (r.value.has_value()) {
            std::snprintf(value, sizeof(value), "%.4f", *r.value);
        } else {
            std::snprintf(value, sizeof(value), "NA");
        }
        txt << pad(r.method, method_w) << "  " << pad(r.group, group_w) << "  "
            << pad(r.metric, metric_w) << "  " << value << "\n";
    }
    write_text_file(text_path, txt.str());
}

}  // namespace aty::slu
