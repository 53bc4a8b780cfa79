#include "lcr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace lcr {

namespace {

constexpr char kMagic[8] = {'L', 'C', 'R', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_raw(std::ifstream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ParseError("checkpoint truncated while reading " + what);
    return v;
}

}  // namespace

std::string stage_name(Stage s) {
    return s == Stage::pretrained ? "pretrained" : "rl";
}

Stage parse_stage(const std::string& name) {
    if (name == "pretrained") return Stage::pretrained;
    if (name == "rl") return Stage::rl;
    throw ConfigError("unknown stage '" + name + "' (expected pretrained or rl)");
}

void save_checkpoint(const std::string& path, const model::ModelConfig& cfg, Stage stage,
                     const nn::ParamStore& ps) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof kMagic);
    write_raw(out, kVersion);
    write_raw(out, static_cast<std::uint8_t>(stage == Stage::pretrained ? 0 : 1));
    const std::int32_t dims[] = {
        cfg.d,          cfg.heads,   cfg.encoder_layers,
        cfg.ffn_hidden, cfg.K,       cfg.max_search,
        cfg.max_rec,    cfg.n_users, cfg.n_items,
        cfg.n_words,
    };
    for (std::int32_t v : dims) write_raw(out, v);
    write_raw(out, static_cast<std::uint8_t>(cfg.pre_layernorm ? 1 : 0));
    write_raw(out, static_cast<std::uint8_t>(cfg.learned_agg ? 1 : 0));

    write_raw(out, static_cast<std::uint32_t>(ps.count()));
    for (const auto& [name, entry] : ps.entries()) {
        write_raw(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::int32_t>(entry.value.rows));
        write_raw(out, static_cast<std::int32_t>(entry.value.cols));
        std::vector<float> row(entry.value.v.size());
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = static_cast<float>(entry.value.v[i]);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

CheckpointMeta load_checkpoint(const std::string& path, nn::ParamStore& ps) {
    if (ps.count() != 0) throw StateError("load_checkpoint requires an empty parameter store");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ParseError("'" + path + "' is not a checkpoint file");
    const auto version = read_raw<std::uint32_t>(in, "version");
    if (version != kVersion)
        throw StateError("checkpoint version " + std::to_string(version) +
                         " unsupported (expected " + std::to_string(kVersion) + ")");
    CheckpointMeta meta;
    const auto stage = read_raw<std::uint8_t>(in, "stage");
    if (stage > 1) throw ParseError("invalid stage tag");
    meta.stage = stage == 0 ? Stage::pretrained : Stage::rl;

    std::int32_t dims[10];
    for (std::int32_t& v : dims) v = read_raw<std::int32_t>(in, "dims");
    meta.cfg.d = dims[0];
    meta.cfg.heads = dims[1];
    meta.cfg.encoder_layers = dims[2];
    meta.cfg.ffn_hidden = dims[3];
    meta.cfg.K = dims[4];
    meta.cfg.max_search = dims[5];
    meta.cfg.max_rec = dims[6];
    meta.cfg.n_users = dims[7];
    meta.cfg.n_items = dims[8];
    meta.cfg.n_words = dims[9];
    meta.cfg.pre_layernorm = read_raw<std::uint8_t>(in, "pre_layernorm") != 0;
    meta.cfg.learned_agg = read_raw<std::uint8_t>(in, "learned_agg") != 0;

    // Stage into a scratch store so a malformed file cannot leave the
    // caller's store half filled.
    const auto n_tensors = read_raw<std::uint32_t>(in, "tensor count");
    nn::ParamStore staged;
    Rng dummy(0);
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        const auto name_len = read_raw<std::uint32_t>(in, "name length");
        if (name_len == 0 || name_len > 4096) throw ParseError("implausible tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw ParseError("checkpoint truncated while reading a tensor name");
        const auto rows = read_raw<std::int32_t>(in, "rows of " + name);
        const auto cols = read_raw<std::int32_t>(in, "cols of " + name);
        if (rows < 0 || cols < 0) throw ParseError("negative shape for " + name);
        nn::Tensor2& value = staged.create(name, rows, cols, dummy, 0.0);
        std::vector<float> raw(value.v.size());
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(float)));
        if (!in) throw ParseError("checkpoint truncated while reading " + name);
        for (std::size_t i = 0; i < raw.size(); ++i) value.v[i] = raw[i];
    }
    in.peek();
    if (!in.eof()) throw ParseError("trailing bytes after checkpoint payload");
    ps = std::move(staged);
    return meta;
}

}  // namespace lcr
