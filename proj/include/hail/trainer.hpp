#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hail/config.hpp"
#include "hail/corpus.hpp"
#include "hail/encoder.hpp"
#include "hail/losses.hpp"
#include "hail/masking.hpp"

namespace hail {

// lr = d^(-1/2) * min(step^(-1/2), step * warmup^(-3/2))
real noam_learning_rate(long long step, int d, int warmup);

struct AdamState {
    std::vector<real> m, v;
    long long step = 0;
};

// One optimizer step on the summed objective: forward every peer, exchange
// distillation weights (treated as constants), backprop, single Adam update
// over all parameters with shared-table gradients accumulated across peers.
LossBreakdown train_step(DualModel& model, const MaskedBatch& batch,
                         const TrainConfig& cfg, AdamState& opt);

struct EpochLog {
    int epoch = 0;
    long long step = 0;
    real lr = 0.0;
    std::vector<real> sk, med_pos, med_neg;  // per peer, epoch means
    real total = 0.0;
    int truncated = 0;
    real valid_hr1 = -1.0;  // -1 when no validation split

    std::string to_json() const;
};

struct Checkpoint {
    TrainConfig config;
    int vocab_size = 0;  // |E|; table rows are vocab_size + 2
    long long step = 0;
    int epoch = 0;  // completed epochs
    std::string rng_state;
    real best_valid = -1.0;
    int epochs_since_improve = 0;
    DualModel model;
    AdamState opt;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

// Runs epochs x batches of train_step with per-epoch validation on peer 0.
// Masked copies are fixed up front from a dedicated seed stream, so a resumed
// run regenerates them identically.
TrainResult train(const TrainConfig& cfg, const SplitSet& splits, int vocab_size,
                  std::ostream* metric_stream = nullptr,
                  const Checkpoint* resume = nullptr);

// Binary checkpoint: magic + version + JSON header (config, step, rng state,
// parameter manifest) followed by raw little-endian float64 blocks in
// collect_params order, then the Adam moment buffers.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hail
