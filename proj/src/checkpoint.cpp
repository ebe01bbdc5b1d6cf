#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hail/errors.hpp"
#include "hail/trainer.hpp"
#include "json.hpp"

namespace hail {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are written little-endian");

constexpr char kMagic[8] = {'H', 'A', 'I', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

json config_to_json(const TrainConfig& cfg) {
    return json{{"alpha", cfg.alpha},
                {"beta", cfg.beta},
                {"peers", cfg.peers},
                {"batch_size", cfg.batch_size},
                {"max_len", cfg.max_len},
                {"d", cfg.d},
                {"d_h", cfg.d_h},
                {"layers", cfg.layers},
                {"heads", cfg.heads},
                {"mask_ratio", cfg.mask_ratio},
                {"duplication", cfg.duplication},
                {"epochs", cfg.epochs},
                {"warmup_steps", cfg.warmup_steps},
                {"seed", cfg.seed},
                {"distill_mode", distill_mode_name(cfg.distill_mode)},
                {"min_seq_len", cfg.min_seq_len},
                {"patience", cfg.patience},
                {"layer_norm", cfg.layer_norm},
                {"truncate_all_peers", cfg.truncate_all_peers},
                {"eval_negatives", cfg.eval_negatives},
                {"popularity_sampling", cfg.popularity_sampling},
                {"init_std", cfg.init_std}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.alpha = j.at("alpha").get<real>();
    cfg.beta = j.at("beta").get<real>();
    cfg.peers = j.at("peers").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.d = j.at("d").get<int>();
    cfg.d_h = j.at("d_h").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.mask_ratio = j.at("mask_ratio").get<real>();
    cfg.duplication = j.at("duplication").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.warmup_steps = j.at("warmup_steps").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.distill_mode = parse_distill_mode(j.at("distill_mode").get<std::string>());
    cfg.min_seq_len = j.at("min_seq_len").get<int>();
    cfg.patience = j.at("patience").get<int>();
    cfg.layer_norm = j.at("layer_norm").get<bool>();
    cfg.truncate_all_peers = j.at("truncate_all_peers").get<bool>();
    cfg.eval_negatives = j.at("eval_negatives").get<int>();
    cfg.popularity_sampling = j.at("popularity_sampling").get<bool>();
    cfg.init_std = j.at("init_std").get<real>();
    return cfg;
}

void write_exact(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw DataError("I/O error while writing checkpoint");
}

void read_exact(std::ifstream& in, void* data, std::size_t n,
                const std::string& what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw DataError("truncated checkpoint while reading " + what);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);

    auto params = collect_params(const_cast<DualModel&>(ckpt.model));
    json manifest = json::array();
    for (const auto& p : params)
        manifest.push_back(json{{"name", p.name}, {"size", p.size}});

    json header{{"format_version", kFormatVersion},
                {"dtype", "f64"},
                {"config", config_to_json(ckpt.config)},
                {"config_hash", config_hash(ckpt.config)},
                {"vocab_size", ckpt.vocab_size},
                {"step", ckpt.step},
                {"epoch", ckpt.epoch},
                {"rng_state", ckpt.rng_state},
                {"best_valid", ckpt.best_valid},
                {"epochs_since_improve", ckpt.epochs_since_improve},
                {"adam_size", ckpt.opt.m.size()},
                {"params", manifest}};
    const std::string header_text = header.dump();

    write_exact(out, kMagic, sizeof kMagic);
    const std::uint32_t version = kFormatVersion;
    write_exact(out, &version, sizeof version);
    const std::uint64_t header_len = header_text.size();
    write_exact(out, &header_len, sizeof header_len);
    write_exact(out, header_text.data(), header_text.size());

    for (const auto& p : params) write_exact(out, p.data, p.size * sizeof(real));
    write_exact(out, ckpt.opt.m.data(), ckpt.opt.m.size() * sizeof(real));
    write_exact(out, ckpt.opt.v.data(), ckpt.opt.v.size() * sizeof(real));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint not found: " + path);

    char magic[8];
    read_exact(in, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError("not a checkpoint file: " + path);
    std::uint32_t version = 0;
    read_exact(in, &version, sizeof version, "version");
    if (version != kFormatVersion)
        throw DataError("checkpoint format version " + std::to_string(version) +
                        " is incompatible with version " +
                        std::to_string(kFormatVersion));
    std::uint64_t header_len = 0;
    read_exact(in, &header_len, sizeof header_len, "header length");
    if (header_len > (1ULL << 30)) throw DataError("corrupt checkpoint header length");
    std::string header_text(header_len, '\0');
    read_exact(in, header_text.data(), header_len, "header");

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt checkpoint header: ") + e.what());
    }
    if (header.at("dtype").get<std::string>() != "f64")
        throw DataError("unsupported checkpoint dtype");

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    if (header.at("config_hash").get<std::uint64_t>() != config_hash(ckpt.config))
        throw DataError("checkpoint config hash does not match its config block");
    ckpt.vocab_size = header.at("vocab_size").get<int>();
    ckpt.step = header.at("step").get<long long>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.best_valid = header.at("best_valid").get<real>();
    ckpt.epochs_since_improve = header.at("epochs_since_improve").get<int>();

    ckpt.model = make_model(ckpt.config.encoder(), ckpt.vocab_size + 2,
                            ckpt.config.peers, ckpt.config.seed, 0.0);
    auto params = collect_params(ckpt.model);
    const auto& manifest = header.at("params");
    if (manifest.size() != params.size())
        throw DataError("checkpoint parameter manifest does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = manifest[i];
        if (entry.at("name").get<std::string>() != params[i].name ||
            entry.at("size").get<std::size_t>() != params[i].size)
            throw DataError("checkpoint block '" +
                            entry.at("name").get<std::string>() +
                            "' does not match the expected layout");
        read_exact(in, params[i].data, params[i].size * sizeof(real), params[i].name);
    }

    const auto adam_size = header.at("adam_size").get<std::size_t>();
    ckpt.opt.m.resize(adam_size);
    ckpt.opt.v.resize(adam_size);
    read_exact(in, ckpt.opt.m.data(), adam_size * sizeof(real), "adam m");
    read_exact(in, ckpt.opt.v.data(), adam_size * sizeof(real), "adam v");
    ckpt.opt.step = ckpt.step;
    return ckpt;
}

}  // namespace hail
