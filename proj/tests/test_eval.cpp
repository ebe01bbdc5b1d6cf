#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "hail/errors.hpp"
#include "hail/eval.hpp"
#include "hail/rng.hpp"
#include "helpers.hpp"
#include "synthetic.hpp"

using namespace hail;

namespace {

std::vector<std::uint8_t> history_mask(int element_count,
                                       const std::vector<int>& history) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(element_count) + 2, 0);
    for (int e : history) mask[static_cast<std::size_t>(e)] = 1;
    return mask;
}

// exhaustive oracle: sort candidates by (score desc, id asc), find the target
int brute_force_rank(const std::vector<real>& scores, int target,
                     std::vector<int> candidates) {
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const real sa = scores[static_cast<std::size_t>(a)];
        const real sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i] == target) return static_cast<int>(i) + 1;
    return -1;
}

// generic DCG/IDCG with one relevant item
real generic_ndcg(int rank, int k) {
    real dcg = 0.0;
    for (int pos = 1; pos <= k; ++pos)
        if (pos == rank) dcg += 1.0 / std::log2(pos + 1.0);
    const real idcg = 1.0 / std::log2(2.0);
    return dcg / idcg;
}

}  // namespace

TEST_CASE("negative sampling draws the forced set when only 99 remain") {
    const int element_count = 100;
    auto mask = history_mask(element_count, {42});
    Rng rng(5);
    auto negatives = sample_eval_negatives(mask, element_count, 42, 99, rng);
    REQUIRE(negatives.size() == 99);
    std::set<int> unique(negatives.begin(), negatives.end());
    CHECK(unique.size() == 99);
    CHECK(unique.count(42) == 0);
}

TEST_CASE("negative sampling is deterministic per seed") {
    const int element_count = 500;
    auto mask = history_mask(element_count, {1, 2, 3});
    Rng r1(9), r2(9), r3(10);
    auto a = sample_eval_negatives(mask, element_count, 1, 99, r1);
    auto b = sample_eval_negatives(mask, element_count, 1, 99, r2);
    auto c = sample_eval_negatives(mask, element_count, 1, 99, r3);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("negative sampling avoids the full history") {
    const int element_count = 200;
    Rng hist_rng(3);
    std::vector<int> history;
    for (int i = 0; i < 50; ++i)
        history.push_back(1 + static_cast<int>(hist_rng.uniform_int(200)));
    auto mask = history_mask(element_count, history);
    Rng rng(12);
    auto negatives = sample_eval_negatives(mask, element_count, history[0], 99, rng);
    REQUIRE(negatives.size() == 99);
    std::set<int> unique(negatives.begin(), negatives.end());
    CHECK(unique.size() == 99);
    for (int e : negatives) {
        CHECK(e >= 1);
        CHECK(e <= element_count);
        CHECK(mask[static_cast<std::size_t>(e)] == 0);
    }
}

TEST_CASE("negative sampling falls back when history blankets the elements") {
    const int element_count = 60;
    std::vector<int> all;
    for (int e = 1; e <= element_count; ++e) all.push_back(e);
    auto mask = history_mask(element_count, all);
    Rng rng(4);
    bool fell_back = false;
    auto negatives =
        sample_eval_negatives(mask, element_count, 7, 50, rng, &fell_back);
    CHECK(fell_back);
    REQUIRE(negatives.size() == 50);
    for (int e : negatives) CHECK(e != 7);
}

TEST_CASE("score_ranking frozen cases") {
    std::vector<real> scores(12, 0.0);
    std::vector<int> candidates{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};

    SUBCASE("target on top") {
        scores[3] = 1.0;
        auto c = score_ranking(scores, 0, 3, candidates);
        CHECK(c.target_rank == 1);
        CHECK(hr_at(c, 1) == 1.0);
        CHECK(ndcg_at(c, 5) == 1.0);
        CHECK(1.0 / c.target_rank == 1.0);
    }
    SUBCASE("rank three") {
        scores[3] = 0.5;
        scores[1] = 0.9;
        scores[2] = 0.8;
        auto c = score_ranking(scores, 0, 3, candidates);
        CHECK(c.target_rank == 3);
        CHECK(hr_at(c, 1) == 0.0);
        CHECK(hr_at(c, 5) == 1.0);
        CHECK(ndcg_at(c, 5) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(1.0 / c.target_rank == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("rank eleven is beyond every cutoff") {
        for (int e = 1; e <= 11; ++e) scores[static_cast<std::size_t>(e)] = 1.0 * e;
        auto c = score_ranking(scores, 0, 1, candidates);
        CHECK(c.target_rank == 11);
        CHECK(hr_at(c, 10) == 0.0);
        CHECK(ndcg_at(c, 10) == 0.0);
        CHECK(1.0 / c.target_rank == doctest::Approx(1.0 / 11.0));
    }
    SUBCASE("missing target is a contract error") {
        CHECK_THROWS_AS(score_ranking(scores, 0, 99, candidates), ContractError);
    }
}

TEST_CASE("score_ranking agrees with the brute-force sort oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const int element_count = 20 + static_cast<int>(rng.uniform_int(80));
        std::vector<real> scores(static_cast<std::size_t>(element_count) + 2);
        // coarse quantization forces plenty of score ties
        for (real& s : scores)
            s = static_cast<real>(rng.uniform_int(8)) / 8.0;
        std::vector<int> pool;
        for (int e = 1; e <= element_count; ++e) pool.push_back(e);
        rng.shuffle(pool);
        const int n_cand = 5 + static_cast<int>(rng.uniform_int(20));
        std::vector<int> candidates(pool.begin(), pool.begin() + n_cand);
        const int target = candidates[static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::uint64_t>(n_cand)))];

        auto ranked = score_ranking(scores, 0, target, candidates);
        CHECK(ranked.target_rank == brute_force_rank(scores, target, candidates));
    }
}

TEST_CASE("metrics are invariant under monotone score transforms") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<real> scores(52);
        for (real& s : scores) s = rng.uniform();
        std::vector<int> candidates;
        for (int e = 1; e <= 30; ++e) candidates.push_back(e);
        const int target = 1 + static_cast<int>(rng.uniform_int(30));

        auto base = score_ranking(scores, 0, target, candidates);
        std::vector<real> warped(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i)
            warped[i] = std::exp(3.0 * scores[i]) + 7.0;
        auto transformed = score_ranking(warped, 0, target, candidates);
        CHECK(base.target_rank == transformed.target_rank);
    }
}

TEST_CASE("closed-form NDCG matches a generic DCG/IDCG implementation") {
    std::vector<real> scores(30);
    std::vector<int> candidates;
    for (int e = 1; e <= 20; ++e) candidates.push_back(e);
    for (int rank = 1; rank <= 20; ++rank) {
        for (int e = 1; e <= 20; ++e)
            scores[static_cast<std::size_t>(e)] = e == 1 ? 21.0 - rank : 21.0 - e;
        // move element 1 around by adjusting its score; recompute its rank
        auto c = score_ranking(scores, 0, 1, candidates);
        for (int k : {5, 10})
            CHECK(ndcg_at(c, k) ==
                  doctest::Approx(generic_ndcg(c.target_rank, k)).epsilon(1e-12));
    }
}

TEST_CASE("hr ordering invariant: hr@1 <= hr@5 <= hr@10, mrr >= hr@1") {
    auto corpus = test::make_markov_corpus(40, 60, 10, 3);
    TrainConfig cfg;
    cfg.d = 8;
    cfg.d_h = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 12;
    cfg.eval_negatives = 30;
    cfg.init_std = 0.1;
    DualModel model = make_model(cfg.encoder(), corpus.element_count + 2, 2, 5,
                                 cfg.init_std);
    EvalReport report = evaluate_split(model, 0, corpus.splits, SplitKind::test, cfg);
    CHECK(report.n_cases == 40);
    CHECK(report.hr.at(1) <= report.hr.at(5));
    CHECK(report.hr.at(5) <= report.hr.at(10));
    CHECK(report.mrr >= report.hr.at(1));
    CHECK(report.ndcg.at(5) <= report.hr.at(5));
    CHECK(static_cast<int>(report.ranks.size()) == report.n_cases);
}

TEST_CASE("uniform scorer hits HR@10 near one tenth") {
    // zero model -> identical logits -> ranking decided by candidate ids;
    // with uniformly drawn negatives the target lands uniformly
    auto corpus = test::make_markov_corpus(1000, 400, 8, 7);
    TrainConfig cfg;
    cfg.d = 4;
    cfg.d_h = 4;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 10;
    cfg.init_std = 0.0;
    DualModel model = make_model(cfg.encoder(), corpus.element_count + 2, 2, 5, 0.0);
    EvalReport report = evaluate_split(model, 0, corpus.splits, SplitKind::test, cfg);
    CHECK(report.hr.at(10) > 0.07);
    CHECK(report.hr.at(10) < 0.13);
}

TEST_CASE("empty split is an error") {
    SplitSet empty;
    empty.train.push_back({0, {1, 2, 3}});
    TrainConfig cfg;
    DualModel model = make_model(cfg.encoder(), 10, 2, 5, 0.1);
    CHECK_THROWS_AS(evaluate_split(model, 0, empty, SplitKind::valid, cfg),
                    ContractError);
}

TEST_CASE("pop baseline orders by frequency and test protocol works") {
    std::vector<InteractionSequence> train{{0, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2}}};
    auto scores = pop_baseline(train, 4);
    CHECK(scores[1] == 10.0);
    CHECK(scores[2] == 3.0);
    CHECK(scores[3] == 0.0);  // unseen scores zero, behind any seen candidate
    auto ranked = score_ranking(scores, 0, 1, {1, 2, 3});
    CHECK(ranked.target_rank == 1);
    auto ranked3 = score_ranking(scores, 0, 3, {1, 2, 3});
    CHECK(ranked3.target_rank == 3);

    // uniform random sequences carry no popularity signal
    Rng rng(9);
    const int element_count = 300;
    std::vector<InteractionSequence> seqs;
    for (int g = 0; g < 800; ++g) {
        InteractionSequence s;
        s.generator = g;
        for (int i = 0; i < 8; ++i)
            s.elements.push_back(1 + static_cast<int>(rng.uniform_int(300)));
        seqs.push_back(std::move(s));
    }
    SplitSet uniform_splits = split_leave_one_out(seqs);
    TrainConfig cfg;
    cfg.max_len = 10;
    EvalReport report = evaluate_pop_baseline(uniform_splits, SplitKind::test, cfg,
                                              element_count);
    CHECK(report.hr.at(10) > 0.06);
    CHECK(report.hr.at(10) < 0.14);
}

TEST_CASE("identical peers are perfectly consistent") {
    auto corpus = test::make_markov_corpus(30, 40, 8, 3);
    TrainConfig cfg;
    cfg.d = 8;
    cfg.d_h = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 10;
    cfg.eval_negatives = 20;
    DualModel model = make_model(cfg.encoder(), corpus.element_count + 2, 2, 5, 0.1);
    model.peers[1] = model.peers[0];  // clone the stack
    ConsistencyReport report =
        response_consistency_report(model, corpus.splits, SplitKind::test, cfg);
    CHECK(report.inconsistent_fraction == 0.0);
    CHECK(report.n_cases == 30);
    CHECK(report.nll.rows == 30);
    CHECK(report.nll.cols == 2);
    for (int i = 0; i < report.nll.rows; ++i)
        CHECK(report.nll.at(i, 0) == report.nll.at(i, 1));
}

TEST_CASE("disjoint correct sets give inconsistency one") {
    // two fabricated score tables: peer 0 nails even cases, peer 1 odd ones;
    // realized through the shared-table path by swapping output biases is
    // impractical here, so the check runs on the ranking layer directly
    const int element_count = 10;
    std::vector<real> right(12, 0.0), wrong(12, 0.0);
    std::vector<int> candidates{1, 2, 3};
    right[1] = 1.0;   // target 1 wins
    wrong[2] = 1.0;   // target 1 loses
    int inconsistent = 0;
    for (int i = 0; i < 6; ++i) {
        const bool peer0_correct =
            score_ranking(i % 2 == 0 ? right : wrong, 0, 1, candidates).target_rank == 1;
        const bool peer1_correct =
            score_ranking(i % 2 == 0 ? wrong : right, 0, 1, candidates).target_rank == 1;
        if (peer0_correct != peer1_correct) ++inconsistent;
    }
    CHECK(inconsistent == 6);
    (void)element_count;
}

TEST_CASE("eval report serializes as a flat json object") {
    EvalReport r;
    r.hr[1] = 0.25;
    r.hr[5] = 0.5;
    r.hr[10] = 0.75;
    r.ndcg[5] = 0.4;
    r.ndcg[10] = 0.45;
    r.mrr = 0.37;
    r.n_cases = 123;
    const std::string json = r.to_json();
    CHECK(json.find("\"hr@1\": 0.25") != std::string::npos);
    CHECK(json.find("\"n_cases\": 123") != std::string::npos);
    CHECK(json.find('[') == std::string::npos);  // flat: aggregates only
}
