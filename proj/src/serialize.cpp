#include "atytts/serialize.hpp"

#include <fstream>

#include "atytts/nn.hpp"

namespace aty {

namespace {
constexpr char kMagic[4] = {'A', 'T', 'Y', 'C'};
constexpr uint32_t kVersion = 1;
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const nn::ParamStore& params) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "checkpoint: cannot write " + path.string());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    std::string h = header.dump();
    uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(h.data(), static_cast<std::streamsize>(len));
    params.save(out);
    require(out.good(), "checkpoint: write failed for " + path.string());
}

namespace {

std::ifstream open_checkpoint(const std::filesystem::path& path, nlohmann::json* header) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    require(in.good() && std::string(magic, 4) == "ATYC",
            "checkpoint: bad magic in " + path.string());
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require(version == kVersion, "checkpoint: unsupported version");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string h(len, '\0');
    in.read(h.data(), static_cast<std::streamsize>(len));
    require(in.good(), "checkpoint: truncated header");
    *header = nlohmann::json::parse(h);
    return in;
}

}  // namespace

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
    nlohmann::json header;
    open_checkpoint(path, &header);
    return header;
}

void read_checkpoint_params(const std::filesystem::path& path, nn::ParamStore& params) {
    nlohmann::json header;
    std::ifstream in = open_checkpoint(path, &header);
    params.load(in);
}

}  // namespace aty
