#include "hail/config.hpp"

#include <cstdio>

#include "hail/errors.hpp"

namespace hail {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

std::string fmt_real(real x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
    require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "alpha must lie in [0, 1]");
    require(cfg.beta >= 0.0 && cfg.beta < 1.0, "beta must lie in [0, 1)");
    require(cfg.peers >= 2, "peers must be >= 2");
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.max_len >= 3, "max_len must be >= 3");
    require(cfg.d >= 1, "d must be >= 1");
    require(cfg.d_h >= 1, "d_h must be >= 1");
    require(cfg.layers >= 1, "layers must be >= 1");
    require(cfg.heads >= 1 && cfg.d % cfg.heads == 0,
            "heads must be >= 1 and divide d");
    require(cfg.mask_ratio > 0.0 && cfg.mask_ratio < 1.0,
            "mask_ratio must lie in (0, 1)");
    require(cfg.duplication >= 1, "duplication must be >= 1");
    require(cfg.epochs >= 0, "epochs must be >= 0");
    require(cfg.warmup_steps >= 1, "warmup_steps must be >= 1");
    require(cfg.min_seq_len >= 1, "min_seq_len must be >= 1");
    require(cfg.patience >= 0, "patience must be >= 0");
    require(cfg.eval_negatives >= 1, "eval_negatives must be >= 1");
    require(cfg.init_std >= 0.0, "init_std must be >= 0");
}

std::string distill_mode_name(DistillMode mode) {
    switch (mode) {
        case DistillMode::med: return "med";
        case DistillMode::mimic: return "mimic";
        case DistillMode::none: return "none";
    }
    return "med";
}

DistillMode parse_distill_mode(const std::string& name) {
    if (name == "med") return DistillMode::med;
    if (name == "mimic") return DistillMode::mimic;
    if (name == "none") return DistillMode::none;
    throw ConfigError("distill_mode must be one of {med, mimic, none}, got '" +
                      name + "'");
}

std::string canonical_config_string(const TrainConfig& cfg) {
    std::string s;
    s += "alpha=" + fmt_real(cfg.alpha);
    s += ";beta=" + fmt_real(cfg.beta);
    s += ";peers=" + std::to_string(cfg.peers);
    s += ";batch_size=" + std::to_string(cfg.batch_size);
    s += ";max_len=" + std::to_string(cfg.max_len);
    s += ";d=" + std::to_string(cfg.d);
    s += ";d_h=" + std::to_string(cfg.d_h);
    s += ";layers=" + std::to_string(cfg.layers);
    s += ";heads=" + std::to_string(cfg.heads);
    s += ";mask_ratio=" + fmt_real(cfg.mask_ratio);
    s += ";duplication=" + std::to_string(cfg.duplication);
    s += ";epochs=" + std::to_string(cfg.epochs);
    s += ";warmup_steps=" + std::to_string(cfg.warmup_steps);
    s += ";seed=" + std::to_string(cfg.seed);
    s += ";distill_mode=" + distill_mode_name(cfg.distill_mode);
    s += ";min_seq_len=" + std::to_string(cfg.min_seq_len);
    s += ";patience=" + std::to_string(cfg.patience);
    s += ";layer_norm=" + std::to_string(cfg.layer_norm ? 1 : 0);
    s += ";truncate_all_peers=" + std::to_string(cfg.truncate_all_peers ? 1 : 0);
    s += ";eval_negatives=" + std::to_string(cfg.eval_negatives);
    s += ";popularity_sampling=" + std::to_string(cfg.popularity_sampling ? 1 : 0);
    s += ";init_std=" + fmt_real(cfg.init_std);
    return s;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    // FNV-1a over the canonical rendering
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canonical_config_string(cfg)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace hail
