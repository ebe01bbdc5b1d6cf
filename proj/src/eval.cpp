#include "hail/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "hail/errors.hpp"
#include "hail/losses.hpp"

namespace hail {

namespace {

constexpr std::uint64_t kEvalStream = 2000;

struct EvalCase {
    int generator = 0;
    int target = 0;
    std::vector<int> input;                // context with the target position masked
    std::vector<std::uint8_t> in_history;  // bitmask over element ids
};

// Context for the valid target is everything before it (the train windows);
// the test context additionally appends the valid element.
std::vector<EvalCase> build_cases(const SplitSet& splits, SplitKind kind,
                                  int element_count, int max_len, int mask_id) {
    const auto& targets =
        kind == SplitKind::valid ? splits.valid_targets : splits.test_targets;
    if (targets.empty()) throw ContractError("evaluation split is empty");

    std::map<int, std::vector<int>> context;
    for (const auto& seq : splits.train) {
        auto& ctx = context[seq.generator];
        ctx.insert(ctx.end(), seq.elements.begin(), seq.elements.end());
    }

    std::vector<EvalCase> cases;
    cases.reserve(targets.size());
    for (const auto& [generator, target] : targets) {
        EvalCase c;
        c.generator = generator;
        c.target = target;
        std::vector<int> ctx = context[generator];
        auto valid_it = splits.valid_targets.find(generator);
        if (kind == SplitKind::test && valid_it != splits.valid_targets.end())
            ctx.push_back(valid_it->second);

        c.in_history.assign(static_cast<std::size_t>(element_count) + 2, 0);
        for (int e : ctx) c.in_history[static_cast<std::size_t>(e)] = 1;
        c.in_history[static_cast<std::size_t>(target)] = 1;
        auto test_it = splits.test_targets.find(generator);
        if (test_it != splits.test_targets.end())
            c.in_history[static_cast<std::size_t>(test_it->second)] = 1;
        if (valid_it != splits.valid_targets.end())
            c.in_history[static_cast<std::size_t>(valid_it->second)] = 1;

        const int keep = std::min<int>(static_cast<int>(ctx.size()), max_len - 1);
        c.input.assign(ctx.end() - keep, ctx.end());
        c.input.push_back(mask_id);
        cases.push_back(std::move(c));
    }
    return cases;
}

MaskedBatch single_row_batch(const EvalCase& c, int pad_id) {
    MaskedBatch batch;
    const int len = static_cast<int>(c.input.size());
    batch.rows = 1;
    batch.max_len = len;
    batch.tokens = c.input;
    batch.positions.resize(static_cast<std::size_t>(len));
    std::iota(batch.positions.begin(), batch.positions.end(), 0);
    batch.lengths = {len};
    batch.mask_index.emplace_back(0, len - 1);
    batch.labels.push_back(c.target);
    (void)pad_id;
    return batch;
}

Rng case_rng(const TrainConfig& cfg, int generator) {
    return Rng(mix_seed(mix_seed(cfg.seed, kEvalStream),
                        static_cast<std::uint64_t>(generator)));
}

void accumulate(EvalReport& report, const RankedCase& c) {
    for (int k : {1, 5, 10}) report.hr[k] += hr_at(c, k);
    for (int k : {5, 10}) report.ndcg[k] += ndcg_at(c, k);
    report.mrr += 1.0 / c.target_rank;
    report.ranks.push_back(c.target_rank);
    ++report.n_cases;
}

void finalize(EvalReport& report) {
    if (report.n_cases == 0) return;
    for (auto& [k, v] : report.hr) v /= report.n_cases;
    for (auto& [k, v] : report.ndcg) v /= report.n_cases;
    report.mrr /= report.n_cases;
}

}  // namespace

std::string EvalReport::to_json() const {
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "{\"hr@1\": %.6f, \"hr@5\": %.6f, \"hr@10\": %.6f, "
                  "\"ndcg@5\": %.6f, \"ndcg@10\": %.6f, \"mrr\": %.6f, "
                  "\"n_cases\": %d}",
                  hr.count(1) ? hr.at(1) : 0.0, hr.count(5) ? hr.at(5) : 0.0,
                  hr.count(10) ? hr.at(10) : 0.0, ndcg.count(5) ? ndcg.at(5) : 0.0,
                  ndcg.count(10) ? ndcg.at(10) : 0.0, mrr, n_cases);
    return buf;
}

std::vector<int> sample_eval_negatives(const std::vector<std::uint8_t>& in_history,
                                       int element_count, int target, int n, Rng& rng,
                                       bool* fell_back,
                                       const std::vector<real>* popularity) {
    if (fell_back) *fell_back = false;
    std::vector<int> pool;
    pool.reserve(static_cast<std::size_t>(element_count));
    for (int e = 1; e <= element_count; ++e)
        if (!in_history[static_cast<std::size_t>(e)]) pool.push_back(e);

    if (static_cast<int>(pool.size()) < n) {
        // not enough non-interacted elements; exclude only the target
        if (fell_back) *fell_back = true;
        pool.clear();
        for (int e = 1; e <= element_count; ++e)
            if (e != target) pool.push_back(e);
        if (static_cast<int>(pool.size()) < n)
            throw ContractError("fewer than n candidate elements exist");
    }

    if (popularity) {
        // weighted draw without replacement over the pool
        std::vector<real> weight(pool.size());
        real total = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            weight[i] = 1.0 + (*popularity)[static_cast<std::size_t>(pool[i])];
            total += weight[i];
        }
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int picked = 0; picked < n; ++picked) {
            real u = rng.uniform() * total;
            std::size_t chosen = pool.size() - 1;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (weight[i] <= 0.0) continue;
                if (u < weight[i]) {
                    chosen = i;
                    break;
                }
                u -= weight[i];
            }
            out.push_back(pool[chosen]);
            total -= weight[chosen];
            weight[chosen] = 0.0;
        }
        return out;
    }

    // partial Fisher-Yates: first n entries are a uniform sample
    for (int i = 0; i < n; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(n));
    return pool;
}

RankedCase score_ranking(const std::vector<real>& scores, int generator, int target,
                         std::vector<int> candidates) {
    if (std::find(candidates.begin(), candidates.end(), target) == candidates.end())
        throw ContractError("target missing from candidate set");
    RankedCase out;
    out.generator = generator;
    out.target = target;
    const real target_score = scores[static_cast<std::size_t>(target)];
    int rank = 1;
    for (int c : candidates) {
        if (c == target) continue;
        const real s = scores[static_cast<std::size_t>(c)];
        if (s > target_score || (s == target_score && c < target)) ++rank;
    }
    out.target_rank = rank;
    out.candidates = std::move(candidates);
    return out;
}

real hr_at(const RankedCase& c, int k) { return c.target_rank <= k ? 1.0 : 0.0; }

real ndcg_at(const RankedCase& c, int k) {
    if (c.target_rank > k) return 0.0;
    return 1.0 / std::log2(1.0 + c.target_rank);
}

EvalReport evaluate_split(const DualModel& model, int peer_index,
                          const SplitSet& splits, SplitKind kind,
                          const TrainConfig& cfg) {
    const int element_count = model.vocab_rows - 2;
    const int mask_id = element_count + 1;
    auto cases = build_cases(splits, kind, element_count, cfg.max_len, mask_id);

    std::vector<real> popularity;
    if (cfg.popularity_sampling)
        popularity = pop_baseline(splits.train, element_count);

    EvalReport report;
    ForwardCache cache;
    for (const auto& c : cases) {
        MaskedBatch batch = single_row_batch(c, 0);
        const Mat& probs = forward_peer(model, peer_index, batch, cache);
        std::vector<real> scores(probs.row(0), probs.row(0) + probs.cols);

        Rng rng = case_rng(cfg, c.generator);
        bool fell_back = false;
        auto candidates = sample_eval_negatives(
            c.in_history, element_count, c.target, cfg.eval_negatives, rng, &fell_back,
            cfg.popularity_sampling ? &popularity : nullptr);
        if (fell_back) ++report.sampler_fallbacks;
        candidates.push_back(c.target);
        accumulate(report, score_ranking(scores, c.generator, c.target,
                                         std::move(candidates)));
    }
    if (report.sampler_fallbacks > 0)
        std::fprintf(stderr,
                     "warning: negative sampler fell back to target-only "
                     "exclusion for %d of %d cases\n",
                     report.sampler_fallbacks, report.n_cases);
    finalize(report);
    return report;
}

std::vector<real> pop_baseline(const std::vector<InteractionSequence>& train,
                               int element_count) {
    if (train.empty()) throw ContractError("train split is empty");
    std::vector<real> counts(static_cast<std::size_t>(element_count) + 2, 0.0);
    for (const auto& seq : train)
        for (int e : seq.elements) counts[static_cast<std::size_t>(e)] += 1.0;
    counts[0] = 0.0;
    counts[static_cast<std::size_t>(element_count) + 1] = 0.0;
    return counts;
}

EvalReport evaluate_pop_baseline(const SplitSet& splits, SplitKind kind,
                                 const TrainConfig& cfg, int element_count) {
    const int mask_id = element_count + 1;
    auto cases = build_cases(splits, kind, element_count, cfg.max_len, mask_id);
    const auto scores = pop_baseline(splits.train, element_count);

    EvalReport report;
    for (const auto& c : cases) {
        Rng rng = case_rng(cfg, c.generator);
        bool fell_back = false;
        auto candidates = sample_eval_negatives(c.in_history, element_count, c.target,
                                                cfg.eval_negatives, rng, &fell_back);
        if (fell_back) ++report.sampler_fallbacks;
        candidates.push_back(c.target);
        accumulate(report, score_ranking(scores, c.generator, c.target,
                                         std::move(candidates)));
    }
    finalize(report);
    return report;
}

ConsistencyReport response_consistency_report(const DualModel& model,
                                              const SplitSet& splits, SplitKind kind,
                                              const TrainConfig& cfg) {
    if (model.peer_count() < 2)
        throw ContractError("consistency diagnostic needs at least two peers");
    const int element_count = model.vocab_rows - 2;
    const int mask_id = element_count + 1;
    auto cases = build_cases(splits, kind, element_count, cfg.max_len, mask_id);
    const int t = model.peer_count();

    ConsistencyReport report;
    report.n_cases = static_cast<int>(cases.size());
    report.nll.resize(report.n_cases, t);
    report.case_generator.reserve(cases.size());

    int inconsistent = 0;
    ForwardCache cache;
    std::vector<std::uint8_t> correct(static_cast<std::size_t>(t));
    for (std::size_t idx = 0; idx < cases.size(); ++idx) {
        const auto& c = cases[idx];
        report.case_generator.push_back(c.generator);

        Rng rng = case_rng(cfg, c.generator);
        auto candidates =
            sample_eval_negatives(c.in_history, element_count, c.target,
                                  cfg.eval_negatives, rng);
        candidates.push_back(c.target);

        MaskedBatch batch = single_row_batch(c, 0);
        for (int peer = 0; peer < t; ++peer) {
            const Mat& probs = forward_peer(model, peer, batch, cache);
            std::vector<real> scores(probs.row(0), probs.row(0) + probs.cols);
            auto ranked = score_ranking(scores, c.generator, c.target, candidates);
            correct[static_cast<std::size_t>(peer)] = ranked.target_rank == 1;
            report.nll.at(static_cast<int>(idx), peer) =
                -std::log(std::max(scores[static_cast<std::size_t>(c.target)],
                                   kProbFloor));
        }
        const bool all_same =
            std::all_of(correct.begin(), correct.end(),
                        [&](std::uint8_t v) { return v == correct.front(); });
        if (!all_same) ++inconsistent;
    }
    report.inconsistent_fraction =
        report.n_cases > 0 ? static_cast<real>(inconsistent) / report.n_cases : 0.0;
    return report;
}

void write_consistency_csv(const ConsistencyReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write consistency report: " + path);
    out << "generator";
    for (int p = 0; p < report.nll.cols; ++p) out << ",peer" << p;
    out << '\n';
    for (int i = 0; i < report.nll.rows; ++i) {
        out << report.case_generator[static_cast<std::size_t>(i)];
        for (int p = 0; p < report.nll.cols; ++p) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9g", report.nll.at(i, p));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("I/O error while writing " + path);
}

}  // namespace hail
