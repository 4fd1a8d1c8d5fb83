#include "atytts/vc.hpp"

#include <cmath>

namespace aty::vc {

using nn::add;
using nn::add_rowvec;
using nn::backward;
using nn::cmul;
using nn::concat_cols;
using nn::gather_rows;
using nn::matmul;
using nn::mse;
using nn::pow_scalar;
using nn::scale_t;
using nn::sum_all;
using nn::tanh_t;

VcModel::VcModel(VcConfig cfg, std::vector<std::string> speakers, uint64_t seed)
    : cfg_(cfg), speakers_(std::move(speakers)) {
    require(!speakers_.empty(), "vc model: at least one speaker required");
    Rng rng(seed);
    enc1_ = nn::Linear::create(params_, "enc1", cfg_.n_mels, cfg_.enc_hidden, rng);
    enc2_ = nn::Linear::create(params_, "enc2", cfg_.enc_hidden, cfg_.bottleneck, rng);
    dect1_ = nn::Linear::create(params_, "dect1", cfg_.bottleneck + cfg_.spk_dim, cfg_.dec_hidden,
                                rng);
    dect2_ = nn::Linear::create(params_, "dect2", cfg_.dec_hidden, cfg_.dec_hidden, rng);
    dect3_ = nn::Linear::create(params_, "dect3", cfg_.dec_hidden, cfg_.n_mels, rng);
    deca1_ = nn::Linear::create(params_, "deca1", cfg_.bottleneck + cfg_.spk_dim, cfg_.dec_hidden,
                                rng);
    deca2_ = nn::Linear::create(params_, "deca2", cfg_.dec_hidden, cfg_.dec_hidden, rng);
    deca3_ = nn::Linear::create(params_, "deca3", cfg_.dec_hidden, cfg_.n_mels, rng);
    spk_ = params_.create("spk",
                          nn::xavier_init(static_cast<int>(speakers_.size()), cfg_.spk_dim, rng));
}

int VcModel::speaker_index(const std::string& speaker_id) const {
    for (size_t i = 0; i < speakers_.size(); ++i) {
        if (speakers_[i] == speaker_id) return static_cast<int>(i);
    }
    throw InvalidInput("vc model: unknown speaker '" + speaker_id + "'");
}

Tensor VcModel::encode(const Tensor& mel) const {
    require(mel.cols() == cfg_.n_mels, "vc encode: mel width does not match model");
    Tensor h = tanh_t(enc1_(mel));
    return tanh_t(enc2_(h));
}

Tensor VcModel::embedding_row(int speaker_idx) const {
    require(speaker_idx >= 0 && speaker_idx < static_cast<int>(speakers_.size()),
            "vc: speaker index out of range");
    Tensor row = gather_rows(spk_, {speaker_idx});
    Tensor n2 = add(sum_all(cmul(row, row)),
                    Tensor::constant(Matrix::Constant(1, 1, 1e-12)));
    return scale_t(row, pow_scalar(n2, -0.5));
}

SpeakerEmbedding VcModel::speaker_embedding(int speaker_idx) const {
    SpeakerEmbedding e;
    e.speaker_id = speakers_[static_cast<size_t>(speaker_idx)];
    e.vec = embedding_row(speaker_idx).value().row(0);
    return e;
}

Tensor VcModel::decode_with(const nn::Linear& l1, const nn::Linear& l2, const nn::Linear& l3,
                            const Tensor& hidden, const Tensor& cond) const {
    require(cond.cols() == cfg_.spk_dim, "vc decode: embedding dimension mismatch");
    Tensor x = concat_cols(hidden, cond);
    Tensor h = tanh_t(l1(x));
    h = tanh_t(l2(h));
    return l3(h);
}

namespace {

std::vector<int> broadcast_tile(long rows) { return std::vector<int>(static_cast<size_t>(rows), 0); }

}  // namespace

Tensor VcModel::decode_typical(const Tensor& hidden, const Tensor& cond) const {
    require(cond.rows() == 1, "vc decode: expected a single conditioning row");
    return decode_with(dect1_, dect2_, dect3_, hidden,
                       gather_rows(cond, broadcast_tile(hidden.rows())));
}

Tensor VcModel::decode_atypical(const Tensor& hidden, const Tensor& cond) const {
    require(cond.rows() == 1, "vc decode: expected a single conditioning row");
    return decode_with(deca1_, deca2_, deca3_, hidden,
                       gather_rows(cond, broadcast_tile(hidden.rows())));
}

Tensor VcModel::decode_typical_tiled(const Tensor& hidden, const Tensor& cond_stack,
                                     const std::vector<int>& tile) const {
    require(static_cast<long>(tile.size()) == hidden.rows(),
            "vc decode: one conditioning index per frame required");
    return decode_with(dect1_, dect2_, dect3_, hidden, gather_rows(cond_stack, tile));
}

Tensor VcModel::decode_atypical_tiled(const Tensor& hidden, const Tensor& cond_stack,
                                      const std::vector<int>& tile) const {
    require(static_cast<long>(tile.size()) == hidden.rows(),
            "vc decode: one conditioning index per frame required");
    return decode_with(deca1_, deca2_, deca3_, hidden, gather_rows(cond_stack, tile));
}

void VcModel::copy_typical_to_atypical() {
    for (const char* name : {"1.W", "1.b", "2.W", "2.b", "3.W", "3.b"}) {
        params_.get(std::string("deca") + name).node()->value =
            params_.get(std::string("dect") + name).value();
    }
}

std::vector<Tensor> VcModel::encoder_and_typical_params() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_.items()) {
        if (name.rfind("deca", 0) != 0) out.push_back(t);
    }
    return out;
}

std::vector<Tensor> VcModel::atypical_params() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_.items()) {
        if (name.rfind("deca", 0) == 0) out.push_back(t);
    }
    return out;
}

namespace {

uint64_t fingerprint_group(const nn::ParamStore& params, const std::string& prefix) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params.items()) {
        if (name.rfind(prefix, 0) != 0) continue;
        h = fnv1a(name, h);
        h = fnv1a_bytes(t.value().data(),
                        sizeof(double) * static_cast<size_t>(t.value().size()), h);
    }
    return h;
}

}  // namespace

uint64_t VcModel::encoder_fingerprint() const { return fingerprint_group(params_, "enc"); }
uint64_t VcModel::typical_decoder_fingerprint() const {
    return fingerprint_group(params_, "dect");
}

// --- conversion ----------------------------------------------------------------

namespace {

audio::MelSpectrogram convert_impl(const audio::MelSpectrogram& z_s, const SpeakerEmbedding& e,
                                   const VcModel& model, bool atypical) {
    require(z_s.n_mels() == model.config().n_mels, "convert: mel width does not match model");
    require(e.vec.size() == model.config().spk_dim, "convert: embedding dimension mismatch");
    Tensor h = model.encode(Tensor::constant(z_s.frames));
    Tensor cond = Tensor::constant(e.vec);
    Tensor out = atypical ? model.decode_atypical(h, cond) : model.decode_typical(h, cond);
    audio::MelSpectrogram mel;
    mel.frames = out.value();
    mel.frame_hop_ms = z_s.frame_hop_ms;
    return mel;
}

}  // namespace

audio::MelSpectrogram convert_typical(const audio::MelSpectrogram& z_s, const SpeakerEmbedding& e,
                                      const VcModel& model) {
    return convert_impl(z_s, e, model, false);
}

audio::MelSpectrogram convert_atypical(const audio::MelSpectrogram& z_s, const SpeakerEmbedding& e,
                                       const VcModel& model) {
    return convert_impl(z_s, e, model, true);
}

// --- training ------------------------------------------------------------------

double vc_train_step(VcModel& model, const std::vector<VcPair>& batch, nn::Adam& opt) {
    require(!batch.empty(), "vc_train_step: empty batch");
    // Stack all frames; per-item embeddings broadcast row-wise.
    long total = 0;
    for (const auto& p : batch) {
        require(p.source.rows() == p.target.rows(), "vc_train_step: pair frame counts disagree");
        total += p.source.rows();
    }
    Matrix src(total, model.config().n_mels), tgt(total, model.config().n_mels);
    long cursor = 0;
    std::vector<std::pair<long, long>> spans;
    for (const auto& p : batch) {
        src.middleRows(cursor, p.source.rows()) = p.source;
        tgt.middleRows(cursor, p.target.rows()) = p.target;
        spans.emplace_back(cursor, p.source.rows());
        cursor += p.source.rows();
    }
    Tensor hidden = model.encode(Tensor::constant(src));
    // Conditioning rows must match each span's speaker.
    std::vector<Tensor> cond_rows;
    cond_rows.reserve(batch.size());
    for (const auto& p : batch) cond_rows.push_back(model.embedding_row(p.speaker_idx));
    Tensor cond_stack = nn::stack_rows(cond_rows);
    std::vector<int> tile;
    tile.reserve(static_cast<size_t>(total));
    for (size_t b = 0; b < batch.size(); ++b) {
        for (long k = 0; k < spans[b].second; ++k) tile.push_back(static_cast<int>(b));
    }
    Tensor out = model.decode_typical_tiled(hidden, cond_stack, tile);
    Tensor loss = mse(out, Tensor::constant(tgt));
    double value = loss.scalar();
    if (!std::isfinite(value)) {
        throw NumericalFailure("vc_train_step: non-finite loss");
    }
    model.params().zero_grad();
    backward(loss);
    opt.step();
    return value;
}

std::vector<double> finetune_atypical_decoder(
    VcModel& model, const std::vector<std::pair<Matrix, SpeakerEmbedding>>& speaker_data,
    int epochs, int batch_size, double lr, uint64_t seed) {
    require(!speaker_data.empty(), "finetune_atypical_decoder: empty speaker data");
    nn::Adam opt(model.atypical_params(), {.lr = lr});
    Rng rng(seed);
    std::vector<double> epoch_losses;
    std::vector<size_t> order(speaker_data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.derive("shuffle", static_cast<uint64_t>(epoch)).shuffle(order);
        double acc = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
            long total = 0;
            for (size_t k = start; k < end; ++k) {
                total += speaker_data[order[k]].first.rows();
            }
            Matrix src(total, model.config().n_mels);
            long cursor = 0;
            std::vector<Tensor> cond_rows;
            std::vector<int> tile;
            for (size_t k = start; k < end; ++k) {
                const auto& [mel, emb] = speaker_data[order[k]];
                require(emb.vec.size() == model.config().spk_dim,
                        "finetune_atypical_decoder: embedding dimension mismatch");
                src.middleRows(cursor, mel.rows()) = mel;
                cond_rows.push_back(Tensor::constant(emb.vec));
                for (long f = 0; f < mel.rows(); ++f) {
                    tile.push_back(static_cast<int>(cond_rows.size() - 1));
                }
                cursor += mel.rows();
            }
            Tensor hidden = model.encode(Tensor::constant(src));
            Tensor cond_stack = nn::stack_rows(cond_rows);
            Tensor out = model.decode_atypical_tiled(hidden, cond_stack, tile);
            Tensor loss = mse(out, Tensor::constant(src));
            acc += loss.scalar();
            ++batches;
            model.params().zero_grad();
            backward(loss);
            opt.step();
        }
        epoch_losses.push_back(acc / std::max(1, batches));
    }
    return epoch_losses;
}

// --- paired data -----------------------------------------------------------------

TripleGenResult generate_paired_triples(const std::vector<SourceUtterance>& source_corpus,
                                        const SpeakerEmbedding& target, const VcModel& model,
                                        double hours) {
    require(hours >= 0.0, "generate_paired_triples: negative hours");
    TripleGenResult res;
    const double target_s = hours * 3600.0;
    double acc_s = 0.0;
    for (const auto& src : source_corpus) {
        if (acc_s >= target_s) break;
        PairedTriple t;
        t.source_id = src.id;
        t.speaker_id = target.speaker_id;
        t.seed = fnv1a(src.id, fnv1a(target.speaker_id));
        t.triple_id = target.speaker_id + "__" + src.id;
        t.z_s.frames = src.mel;
        t.z_t = convert_typical(t.z_s, target, model);
        t.z_a = convert_atypical(t.z_s, target, model);
        acc_s += src.duration_s;
        res.triples.push_back(std::move(t));
    }
    res.total_hours = acc_s / 3600.0;
    res.exhausted = acc_s < target_s;
    return res;
}

void write_triple_store(const std::filesystem::path& dir,
                        const std::vector<PairedTriple>& triples) {
    std::filesystem::create_directories(dir / "mel");
    std::string manifest;
    for (const auto& t : triples) {
        std::string base = "mel/" + t.triple_id;
        audio::write_mel(dir / (base + ".zs.mel"), t.z_s);
        audio::write_mel(dir / (base + ".zt.mel"), t.z_t);
        audio::write_mel(dir / (base + ".za.mel"), t.z_a);
        nlohmann::json line = {{"triple_id", t.triple_id}, {"source_id", t.source_id},
                               {"speaker_id", t.speaker_id}, {"seed", t.seed},
                               {"z_s", base + ".zs.mel"},   {"z_t", base + ".zt.mel"},
                               {"z_a", base + ".za.mel"}};
        manifest += line.dump() + "\n";
    }
    write_text_file(dir / "provenance.jsonl", manifest);
}

std::vector<PairedTriple> read_triple_store(const std::filesystem::path& dir) {
    std::vector<PairedTriple> triples;
    for (const auto& raw : split(read_text_file(dir / "provenance.jsonl"), '\n')) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        PairedTriple t;
        t.triple_id = j.at("triple_id");
        t.source_id = j.at("source_id");
        t.speaker_id = j.at("speaker_id");
        t.seed = j.at("seed");
        t.z_s = audio::read_mel(dir / j.at("z_s").get<std::string>());
        t.z_t = audio::read_mel(dir / j.at("z_t").get<std::string>());
        t.z_a = audio::read_mel(dir / j.at("z_a").get<std::string>());
        triples.push_back(std::move(t));
    }
    return triples;
}

// --- checkpoints -------------------------------------------------------------------

void save_vc(const std::filesystem::path& path, const VcModel& model) {
    const VcConfig& c = model.config();
    nlohmann::json header = {
        {"kind", "vc"},
        {"arch",
         {{"n_mels", c.n_mels},
          {"enc_hidden", c.enc_hidden},
          {"bottleneck", c.bottleneck},
          {"dec_hidden", c.dec_hidden},
          {"spk_dim", c.spk_dim}}},
        {"speakers", model.speakers()},
    };
    write_checkpoint(path, header, model.params());
}

LoadedVc load_vc(const std::filesystem::path& path) {
    nlohmann::json h = read_checkpoint_header(path);
    require(h.value("kind", "") == "vc", "load_vc: not a vc checkpoint");
    const auto& a = h.at("arch");
    VcConfig c;
    c.n_mels = a.at("n_mels");
    c.enc_hidden = a.at("enc_hidden");
    c.bottleneck = a.at("bottleneck");
    c.dec_hidden = a.at("dec_hidden");
    c.spk_dim = a.at("spk_dim");
    LoadedVc out{VcModel(c, h.at("speakers"), /*seed=*/0)};
    read_checkpoint_params(path, out.model.params());
    return out;
}

}  // namespace aty::vc
