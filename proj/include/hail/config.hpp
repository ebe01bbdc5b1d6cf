#pragma once

#include <cstdint>
#include <string>

#include "hail/encoder.hpp"
#include "hail/losses.hpp"

namespace hail {

// Hyperparameters with their published defaults: batch 256, L = 2, R = 2,
// d = 64, intermediate size 256, max sequence length 200. Everything is
// overridable from the config file or flags.
struct TrainConfig {
    real alpha = 0.5;
    real beta = 0.0;
    int peers = 2;
    int batch_size = 256;
    int max_len = 200;
    int d = 64;
    int d_h = 256;
    int layers = 2;
    int heads = 2;
    real mask_ratio = 0.2;
    int duplication = 10;
    int epochs = 20;
    int warmup_steps = 4000;
    std::uint64_t seed = 42;
    DistillMode distill_mode = DistillMode::med;
    int min_seq_len = 5;
    int patience = 5;  // early stopping on valid HR@1; 0 disables
    bool layer_norm = false;
    bool truncate_all_peers = false;  // AND-mode reading of the joint condition
    int eval_negatives = 99;
    bool popularity_sampling = false;
    real init_std = 0.02;

    EncoderConfig encoder() const {
        return EncoderConfig{d, d_h, layers, heads, max_len, layer_norm};
    }
};

// Throws ConfigError naming the key and its legal range.
void validate_config(const TrainConfig& cfg);

std::string distill_mode_name(DistillMode mode);
DistillMode parse_distill_mode(const std::string& name);

// Fixed-order key=value rendering; the checkpoint hash and the effective
// config log both derive from it.
std::string canonical_config_string(const TrainConfig& cfg);
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace hail
