#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hail/config.hpp"
#include "hail/corpus.hpp"
#include "hail/encoder.hpp"
#include "hail/rng.hpp"

namespace hail {

struct RankedCase {
    int generator = 0;
    int target = 0;
    std::vector<int> candidates;  // target plus sampled negatives
    int target_rank = 0;          // 1..|candidates|, target placed after ties
};

struct EvalReport {
    std::map<int, real> hr;    // k in {1, 5, 10}
    std::map<int, real> ndcg;  // k in {5, 10}
    real mrr = 0.0;
    int n_cases = 0;
    std::vector<int> ranks;  // per-sample ranks, case order
    int sampler_fallbacks = 0;

    std::string to_json() const;  // flat object, aggregates only
};

enum class SplitKind { valid, test };

// n distinct elements drawn uniformly from E minus the generator's history.
// When too few remain, falls back to E minus {target} and reports it through
// the fallback flag.
std::vector<int> sample_eval_negatives(const std::vector<std::uint8_t>& in_history,
                                       int element_count, int target, int n, Rng& rng,
                                       bool* fell_back = nullptr,
                                       const std::vector<real>* popularity = nullptr);

// rank = 1 + #(score > target's) + #(equal score with smaller id).
RankedCase score_ranking(const std::vector<real>& scores, int generator, int target,
                         std::vector<int> candidates);

real hr_at(const RankedCase& c, int k);
real ndcg_at(const RankedCase& c, int k);

// Last-masked forward of one peer per generator, ranked against sampled
// negatives, averaged over generators.
EvalReport evaluate_split(const DualModel& model, int peer_index,
                          const SplitSet& splits, SplitKind kind,
                          const TrainConfig& cfg);

// Frequency-as-score baseline; indexable by element id, pad/mask rows zero.
std::vector<real> pop_baseline(const std::vector<InteractionSequence>& train,
                               int element_count);

EvalReport evaluate_pop_baseline(const SplitSet& splits, SplitKind kind,
                                 const TrainConfig& cfg, int element_count);

struct ConsistencyReport {
    real inconsistent_fraction = 0.0;
    int n_cases = 0;
    std::vector<int> case_generator;
    Mat nll;  // cases x peers, negative log-likelihood of the target
};

// A case is inconsistent when the peers disagree on whether the target wins
// the candidate ranking.
ConsistencyReport response_consistency_report(const DualModel& model,
                                              const SplitSet& splits, SplitKind kind,
                                              const TrainConfig& cfg);

void write_consistency_csv(const ConsistencyReport& report, const std::string& path);

}  // namespace hail
