#include "hail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "hail/errors.hpp"
#include "hail/eval.hpp"
#include "hail/rng.hpp"

namespace hail {

namespace {

constexpr std::uint64_t kMaskStream = 1000;
constexpr std::uint64_t kShuffleStream = 1001;
constexpr real kAdamBeta1 = 0.9;
constexpr real kAdamBeta2 = 0.999;
constexpr real kAdamEps = 1e-8;

void adam_update(DualModel& model, DualModel& grads, AdamState& opt,
                 const TrainConfig& cfg) {
    auto params = collect_params(model);
    auto gparams = collect_params(grads);
    std::size_t total = 0;
    for (const auto& p : params) total += p.size;
    if (opt.m.empty()) {
        opt.m.assign(total, 0.0);
        opt.v.assign(total, 0.0);
    } else if (opt.m.size() != total || opt.v.size() != total) {
        throw ContractError("optimizer state does not match the parameter count");
    }

    ++opt.step;
    const real lr = noam_learning_rate(opt.step, cfg.d, cfg.warmup_steps);
    const real bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<real>(opt.step));
    const real bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<real>(opt.step));

    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        real* theta = params[i].data;
        const real* g = gparams[i].data;
        real* m = opt.m.data() + offset;
        real* v = opt.v.data() + offset;
        for (std::size_t j = 0; j < params[i].size; ++j) {
            m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
            v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
            theta[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kAdamEps);
        }
        offset += params[i].size;
    }
}

std::string nonfinite_diagnostic(const MaskedBatch& batch,
                                 const std::vector<SelfKnowledgeLoss>& sk) {
    std::string msg = "non-finite loss; offending coordinates:";
    int shown = 0;
    for (std::size_t i = 0; i < batch.mask_index.size() && shown < 5; ++i) {
        for (std::size_t t = 0; t < sk.size(); ++t) {
            if (!std::isfinite(sk[t].per_coordinate[i])) {
                const auto [row, col] = batch.mask_index[i];
                msg += " peer" + std::to_string(t) + "@(" + std::to_string(row) + "," +
                       std::to_string(col) + ")";
                ++shown;
                break;
            }
        }
    }
    if (shown == 0) msg += " (none isolated; distillation term overflow)";
    return msg;
}

}  // namespace

real noam_learning_rate(long long step, int d, int warmup) {
    if (step < 1) throw ContractError("step must be >= 1");
    if (warmup < 1) throw ContractError("warmup must be >= 1");
    const real s = static_cast<real>(step);
    const real w = static_cast<real>(warmup);
    return std::pow(static_cast<real>(d), -0.5) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

LossBreakdown train_step(DualModel& model, const MaskedBatch& batch,
                         const TrainConfig& cfg, AdamState& opt) {
    const int t = model.peer_count();
    const int element_count = model.vocab_rows - 2;
    if (batch.coordinate_count() == 0)
        throw ContractError("batch carries no masked coordinates");

    std::vector<ForwardCache> caches(static_cast<std::size_t>(t));
    std::vector<const Mat*> probs(static_cast<std::size_t>(t));
    for (int j = 0; j < t; ++j)
        probs[static_cast<std::size_t>(j)] =
            &forward_peer(model, j, batch, caches[static_cast<std::size_t>(j)]);

    std::vector<SelfKnowledgeLoss> sk(static_cast<std::size_t>(t));
    std::vector<std::vector<real>> per_peer_sk(static_cast<std::size_t>(t));
    for (int j = 0; j < t; ++j) {
        sk[static_cast<std::size_t>(j)] =
            loss_self_knowledge(*probs[static_cast<std::size_t>(j)], batch.labels);
        per_peer_sk[static_cast<std::size_t>(j)] =
            sk[static_cast<std::size_t>(j)].per_coordinate;
    }
    const TruncationFlags flags =
        denoise_truncation(per_peer_sk, cfg.beta, cfg.truncate_all_peers);

    std::vector<PeerLossTerms> terms(static_cast<std::size_t>(t));
    for (int j = 0; j < t; ++j) {
        PeerLossTerms& term = terms[static_cast<std::size_t>(j)];
        term.sk = sk[static_cast<std::size_t>(j)].mean;
        term.truncated_count = flags.dropped_count();
        if (cfg.distill_mode == DistillMode::med) {
            auto [pos, neg] =
                med_multi_peer(probs, batch.labels, flags, j, element_count);
            term.med_pos = pos;
            term.med_neg = neg;
        } else if (cfg.distill_mode == DistillMode::mimic) {
            real pos = 0.0, neg = 0.0;
            for (int c = 0; c < t; ++c) {
                if (c == j) continue;
                auto [p, n] = loss_mimic(*probs[static_cast<std::size_t>(j)],
                                         *probs[static_cast<std::size_t>(c)],
                                         batch.labels, flags, element_count);
                pos += p;
                neg += n;
            }
            term.med_pos = pos / (t - 1);
            term.med_neg = neg / (t - 1);
        }
    }

    LossBreakdown breakdown;
    if (cfg.distill_mode == DistillMode::none) {
        breakdown.peers = std::move(terms);
        for (auto& term : breakdown.peers) {
            term.total = term.sk;
            breakdown.grand_total += term.total;
        }
    } else {
        breakdown = combine_total(std::move(terms), cfg.alpha);
    }
    if (!std::isfinite(breakdown.grand_total))
        throw NumericError(nonfinite_diagnostic(batch, sk));

    DualModel grads = make_zero_like(model);
    Mat dlogits;
    for (int j = 0; j < t; ++j) {
        loss_logit_gradient(probs, j, batch.labels, flags, cfg.alpha,
                            cfg.distill_mode, element_count, dlogits);
        backward(model, j, batch, caches[static_cast<std::size_t>(j)], dlogits, grads);
    }
    adam_update(model, grads, opt, cfg);
    return breakdown;
}

std::string EpochLog::to_json() const {
    std::string s = "{\"epoch\": " + std::to_string(epoch) +
                    ", \"step\": " + std::to_string(step);
    char buf[64];
    std::snprintf(buf, sizeof buf, ", \"lr\": %.8g", lr);
    s += buf;
    auto append_array = [&s](const char* key, const std::vector<real>& values) {
        s += std::string(", \"") + key + "\": [";
        for (std::size_t i = 0; i < values.size(); ++i) {
            char b[40];
            std::snprintf(b, sizeof b, "%s%.8g", i ? ", " : "", values[i]);
            s += b;
        }
        s += "]";
    };
    append_array("sk", sk);
    append_array("med_pos", med_pos);
    append_array("med_neg", med_neg);
    std::snprintf(buf, sizeof buf, ", \"total\": %.8g", total);
    s += buf;
    s += ", \"truncated\": " + std::to_string(truncated);
    if (valid_hr1 >= 0.0) {
        std::snprintf(buf, sizeof buf, ", \"valid_hr1\": %.6f", valid_hr1);
        s += buf;
    }
    s += "}";
    return s;
}

TrainResult train(const TrainConfig& cfg, const SplitSet& splits, int vocab_size,
                  std::ostream* metric_stream, const Checkpoint* resume) {
    validate_config(cfg);
    if (splits.train.empty()) throw DataError("empty train split");

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;

    if (resume) {
        if (config_hash(resume->config) != config_hash(cfg))
            throw ConfigError("checkpoint config hash does not match; refusing to resume");
        if (resume->vocab_size != vocab_size)
            throw DataError("checkpoint vocabulary size " +
                            std::to_string(resume->vocab_size) +
                            " does not match the corpus (" +
                            std::to_string(vocab_size) + ")");
        ckpt = *resume;
    } else {
        ckpt.config = cfg;
        ckpt.vocab_size = vocab_size;
        ckpt.model = make_model(cfg.encoder(), vocab_size + 2, cfg.peers, cfg.seed,
                                cfg.init_std);
        Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream));
        ckpt.rng_state = shuffle_rng.serialize();
    }

    // masked copies are fixed once, from their own stream
    const int mask_id = vocab_size + 1;
    Rng mask_rng(mix_seed(cfg.seed, kMaskStream));
    std::vector<MaskedSample> samples;
    int skipped = 0;
    for (const auto& seq : splits.train) {
        auto s = mask_for_training(seq, cfg.mask_ratio, cfg.duplication, mask_id,
                                   mask_rng);
        if (s.empty()) {
            ++skipped;
            continue;
        }
        samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                       std::make_move_iterator(s.end()));
    }
    if (skipped > 0)
        std::fprintf(stderr, "warning: %d train sequences shorter than 2 skipped\n",
                     skipped);
    if (samples.empty()) throw DataError("no trainable samples after masking");

    Rng shuffle_rng;
    shuffle_rng.deserialize(ckpt.rng_state);

    for (int epoch = ckpt.epoch; epoch < cfg.epochs; ++epoch) {
        auto batches =
            make_batches(samples, cfg.batch_size, cfg.max_len, 0, shuffle_rng);

        EpochLog log;
        log.epoch = epoch;
        log.sk.assign(static_cast<std::size_t>(cfg.peers), 0.0);
        log.med_pos.assign(static_cast<std::size_t>(cfg.peers), 0.0);
        log.med_neg.assign(static_cast<std::size_t>(cfg.peers), 0.0);
        for (const auto& batch : batches) {
            LossBreakdown b = train_step(ckpt.model, batch, cfg, ckpt.opt);
            for (int j = 0; j < cfg.peers; ++j) {
                log.sk[static_cast<std::size_t>(j)] +=
                    b.peers[static_cast<std::size_t>(j)].sk;
                log.med_pos[static_cast<std::size_t>(j)] +=
                    b.peers[static_cast<std::size_t>(j)].med_pos;
                log.med_neg[static_cast<std::size_t>(j)] +=
                    b.peers[static_cast<std::size_t>(j)].med_neg;
            }
            log.truncated += b.peers.front().truncated_count;
            log.total += b.grand_total;
        }
        const auto steps_this_epoch = static_cast<real>(batches.size());
        for (int j = 0; j < cfg.peers; ++j) {
            log.sk[static_cast<std::size_t>(j)] /= steps_this_epoch;
            log.med_pos[static_cast<std::size_t>(j)] /= steps_this_epoch;
            log.med_neg[static_cast<std::size_t>(j)] /= steps_this_epoch;
        }
        log.total /= steps_this_epoch;
        log.step = ckpt.opt.step;
        log.lr = noam_learning_rate(std::max<long long>(1, ckpt.opt.step), cfg.d,
                                    cfg.warmup_steps);

        if (!splits.valid_targets.empty()) {
            EvalReport valid =
                evaluate_split(ckpt.model, 0, splits, SplitKind::valid, cfg);
            log.valid_hr1 = valid.hr.at(1);
        }

        ckpt.epoch = epoch + 1;
        ckpt.step = ckpt.opt.step;
        ckpt.rng_state = shuffle_rng.serialize();
        if (metric_stream) *metric_stream << log.to_json() << '\n';
        result.log.push_back(log);

        if (cfg.patience > 0 && log.valid_hr1 >= 0.0) {
            if (log.valid_hr1 > ckpt.best_valid) {
                ckpt.best_valid = log.valid_hr1;
                ckpt.epochs_since_improve = 0;
            } else if (++ckpt.epochs_since_improve >= cfg.patience) {
                break;
            }
        }
    }

    ckpt.step = ckpt.opt.step;
    return result;
}

}  // namespace hail
