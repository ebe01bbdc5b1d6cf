#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hail/encoder.hpp"
#include "hail/errors.hpp"
#include "hail/gradcheck.hpp"
#include "hail/losses.hpp"
#include "hail/rng.hpp"
#include "helpers.hpp"

using namespace hail;

namespace {

EncoderConfig tiny_cfg(int n = 3) {
    EncoderConfig cfg;
    cfg.d = 4;
    cfg.d_h = 6;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = n;
    return cfg;
}

}  // namespace

TEST_CASE("embed adds element and positional rows") {
    EncoderConfig cfg = tiny_cfg(4);
    DualModel model = make_model(cfg, 6, 1, 13, 0.3);
    // token 2 at positions 0 and 1
    MaskedBatch batch = test::make_batch({{2, 2, 3, 1}}, 4, 5, {{2}});
    Mat h0;
    embed(batch, model.shared, h0);
    REQUIRE(h0.rows == 4);
    REQUIRE(h0.cols == 4);
    for (int c = 0; c < 4; ++c) {
        const real diff = h0.at(0, c) - h0.at(1, c);
        const real s_diff = model.shared.positional_table.at(0, c) -
                            model.shared.positional_table.at(1, c);
        CHECK(diff == doctest::Approx(s_diff).epsilon(1e-12));
    }
}

TEST_CASE("embed of zero tables is zero") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 5, 1, 1, 0.0);
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 4, {{1}});
    Mat h0;
    embed(batch, model.shared, h0);
    for (real x : h0.a) CHECK(x == 0.0);
}

TEST_CASE("embed shape contract and range errors") {
    EncoderConfig cfg;
    cfg.d = 8;
    cfg.d_h = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 4;
    DualModel model = make_model(cfg, 10, 1, 3, 0.1);
    MaskedBatch batch = test::make_batch({{1, 2, 3, 4}, {5, 6, 7, 8}}, 4, 9, {{0}, {1}});
    Mat h0;
    embed(batch, model.shared, h0);
    CHECK(h0.rows == 2 * 4);
    CHECK(h0.cols == 8);

    MaskedBatch bad = batch;
    bad.tokens[0] = 42;
    CHECK_THROWS_AS(embed(bad, model.shared, h0), ContractError);
}

TEST_CASE("single-position attention reduces to V W_O plus residual") {
    EncoderConfig cfg = tiny_cfg(1);
    DualModel model = make_model(cfg, 6, 1, 17, 0.4);
    MaskedBatch batch = test::make_batch({{3}}, 1, 5, {{0}});
    Mat h0;
    embed(batch, model.shared, h0);
    const auto& layer = model.peers[0].layers[0];

    LayerCache cache;
    Mat a0;
    attention_sublayer(h0, layer, batch, cfg, cache, a0);

    // softmax over one key is 1, so the context is V itself
    const int d_r = cfg.d / cfg.heads;
    Mat concat(1, cfg.d);
    for (int r = 0; r < cfg.heads; ++r)
        for (int c = 0; c < d_r; ++c) {
            real v = 0;
            for (int e = 0; e < cfg.d; ++e)
                v += h0.at(0, e) * layer.w_v[static_cast<std::size_t>(r)].at(e, c);
            concat.at(0, r * d_r + c) = v;
        }
    for (int c = 0; c < cfg.d; ++c) {
        real expect = h0.at(0, c);
        for (int e = 0; e < cfg.d; ++e) expect += concat.at(0, e) * layer.w_o.at(e, c);
        CHECK(a0.at(0, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("zero output projection leaves the residual") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 6, 1, 19, 0.4);
    auto& layer = model.peers[0].layers[0];
    layer.w_o.zero();
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 5, {{1}});
    Mat h0;
    embed(batch, model.shared, h0);
    LayerCache cache;
    Mat a0;
    attention_sublayer(h0, layer, batch, cfg, cache, a0);
    for (std::size_t i = 0; i < h0.a.size(); ++i) CHECK(a0.a[i] == h0.a[i]);
}

TEST_CASE("attention matches the naive loop oracle") {
    EncoderConfig cfg = tiny_cfg(5);
    DualModel model = make_model(cfg, 10, 1, 21, 0.5);
    MaskedBatch batch =
        test::make_batch({{1, 2, 3, 4, 5}, {6, 7, 8, 0, 0}}, 5, 9, {{0}, {1}});
    batch.lengths = {5, 3};
    Mat h0;
    embed(batch, model.shared, h0);
    const auto& layer = model.peers[0].layers[0];

    LayerCache cache;
    Mat a0;
    attention_sublayer(h0, layer, batch, cfg, cache, a0);
    Mat oracle = test::naive_attention(h0, layer, batch.lengths, 5, cfg.d, cfg.heads);
    REQUIRE(oracle.a.size() == a0.a.size());
    for (std::size_t i = 0; i < a0.a.size(); ++i)
        CHECK(a0.a[i] == doctest::Approx(oracle.a[i]).epsilon(1e-10));
}

TEST_CASE("ffn residual identity and GELU fixed point") {
    CHECK(gelu(0.0) == 0.0);
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 6, 1, 23, 0.4);
    auto& layer = model.peers[0].layers[0];
    layer.w_2.zero();
    std::fill(layer.b_2.begin(), layer.b_2.end(), 0.0);
    Mat a0(3, cfg.d);
    Rng rng(3);
    for (real& x : a0.a) x = rng.normal(0, 1);
    LayerCache cache;
    Mat h;
    ffn_sublayer(a0, layer, cfg, cache, h);
    for (std::size_t i = 0; i < a0.a.size(); ++i) CHECK(h.a[i] == a0.a[i]);
}

TEST_CASE("ffn matches the scalar loop oracle") {
    EncoderConfig cfg;
    cfg.d = 4;
    cfg.d_h = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 3;
    DualModel model = make_model(cfg, 6, 1, 29, 0.5);
    const auto& layer = model.peers[0].layers[0];
    Mat a0(6, cfg.d);
    Rng rng(5);
    for (real& x : a0.a) x = rng.normal(0, 1);
    LayerCache cache;
    Mat h;
    ffn_sublayer(a0, layer, cfg, cache, h);
    Mat oracle = test::naive_ffn(a0, layer, cfg.d, cfg.d_h);
    for (std::size_t i = 0; i < h.a.size(); ++i)
        CHECK(h.a[i] == doctest::Approx(oracle.a[i]).epsilon(1e-10));
}

TEST_CASE("zero model predicts the uniform distribution") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 5, 2, 31, 0.0);  // |E| = 3 -> 5 rows
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 4, {{0, 2}});
    ForwardCache cache;
    const Mat& probs = forward_peer(model, 0, batch, cache);
    REQUIRE(probs.rows == 2);
    REQUIRE(probs.cols == 5);
    for (const real p : probs.a) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("peer determinism and divergence") {
    EncoderConfig cfg = tiny_cfg();
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 8, {{0, 1}});

    DualModel m1 = make_model(cfg, 9, 2, 37, 0.3);
    DualModel m2 = make_model(cfg, 9, 2, 37, 0.3);
    ForwardCache c1, c2;
    const Mat& p1 = forward_peer(m1, 0, batch, c1);
    const Mat& p2 = forward_peer(m2, 0, batch, c2);
    CHECK(p1.a == p2.a);  // bit-identical across identical constructions

    // different peers share tables but differ in stack seeds
    ForwardCache c3;
    const Mat& q = forward_peer(m1, 1, batch, c3);
    bool differs = false;
    for (std::size_t i = 0; i < q.a.size(); ++i) differs |= q.a[i] != p1.a[i];
    CHECK(differs);
}

TEST_CASE("softmax rows of attention and prediction sum to one") {
    EncoderConfig cfg = tiny_cfg(4);
    cfg.layers = 2;
    DualModel model = make_model(cfg, 11, 2, 41, 0.4);
    MaskedBatch batch =
        test::make_batch({{1, 2, 3, 4}, {5, 6, 7, 0}}, 4, 10, {{0, 3}, {2}});
    batch.lengths = {4, 3};
    ForwardCache cache;
    const Mat& probs = forward_peer(model, 0, batch, cache);
    for (int i = 0; i < probs.rows; ++i) {
        real sum = 0;
        for (int c = 0; c < probs.cols; ++c) sum += probs.at(i, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (const auto& layer : cache.layers)
        for (const auto& attn : layer.attn)
            for (int i = 0; i < attn.rows; ++i) {
                real sum = 0;
                for (int c = 0; c < attn.cols; ++c) sum += attn.at(i, c);
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
}

TEST_CASE("pad embeddings never reach non-pad outputs") {
    EncoderConfig cfg = tiny_cfg(4);
    cfg.layers = 2;
    DualModel model = make_model(cfg, 8, 1, 43, 0.4);
    MaskedBatch batch = test::make_batch({{1, 2, 3, 0}}, 4, 7, {{1}});
    batch.lengths = {3};

    ForwardCache before;
    Mat p_before = forward_peer(model, 0, batch, before);

    // positional row 3 feeds only the pad cell; the full output is untouched
    for (int c = 0; c < cfg.d; ++c) model.shared.positional_table.at(3, c) += 3.7;
    ForwardCache after;
    Mat p_after = forward_peer(model, 0, batch, after);
    CHECK(p_before.a == p_after.a);

    // the pad row of U also feeds only the pad cell on the input side; the
    // encoder representations stay fixed (the tied decoder's pad logit is the
    // one legitimate consumer of that row)
    for (int c = 0; c < cfg.d; ++c) model.shared.element_table.at(0, c) += 3.7;
    ForwardCache after2;
    forward_peer(model, 0, batch, after2);
    CHECK(after.gathered.a == after2.gathered.a);
    const Mat& h1 = after.layers.back().h_out;
    const Mat& h2 = after2.layers.back().h_out;
    for (int i = 0; i < 3; ++i)  // non-pad rows; the pad cell's own row may move
        for (int c = 0; c < cfg.d; ++c) CHECK(h1.at(i, c) == h2.at(i, c));
}

TEST_CASE("backward with zero upstream yields zero gradients") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 7, 2, 47, 0.4);
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 6, {{0, 1}});
    ForwardCache cache;
    forward_peer(model, 0, batch, cache);
    DualModel grads = make_zero_like(model);
    Mat dlogits(2, 7);
    backward(model, 0, batch, cache, dlogits, grads);
    for (const auto& ref : collect_params(grads))
        for (std::size_t i = 0; i < ref.size; ++i) CHECK(ref.data[i] == 0.0);
}

TEST_CASE("backward without a forward cache is a contract error") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 7, 2, 47, 0.4);
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 6, {{0}});
    ForwardCache cache;
    DualModel grads = make_zero_like(model);
    Mat dlogits(1, 7);
    CHECK_THROWS_AS(backward(model, 0, batch, cache, dlogits, grads), ContractError);
}

TEST_CASE("shared-table gradients accumulate across peers") {
    EncoderConfig cfg = tiny_cfg();
    DualModel model = make_model(cfg, 7, 2, 53, 0.4);
    MaskedBatch batch = test::make_batch({{1, 2, 3}}, 3, 6, {{0, 2}});

    ForwardCache c0, c1;
    const Mat& p0 = forward_peer(model, 0, batch, c0);
    const Mat& p1 = forward_peer(model, 1, batch, c1);

    Mat d0(p0.rows, p0.cols), d1(p1.rows, p1.cols);
    Rng rng(8);
    for (real& x : d0.a) x = rng.normal(0, 1);
    for (real& x : d1.a) x = rng.normal(0, 1);

    DualModel both = make_zero_like(model);
    backward(model, 0, batch, c0, d0, both);
    backward(model, 1, batch, c1, d1, both);

    DualModel only0 = make_zero_like(model);
    backward(model, 0, batch, c0, d0, only0);
    DualModel only1 = make_zero_like(model);
    backward(model, 1, batch, c1, d1, only1);

    const auto& u_both = both.shared.element_table.a;
    const auto& u_0 = only0.shared.element_table.a;
    const auto& u_1 = only1.shared.element_table.a;
    for (std::size_t i = 0; i < u_both.size(); ++i)
        CHECK(u_both[i] == doctest::Approx(u_0[i] + u_1[i]).epsilon(1e-12));
}

TEST_CASE("finite differences hold through a two-layer stack") {
    TrainConfig cfg;
    cfg.alpha = 0.6;
    cfg.beta = 0.0;
    cfg.d = 4;
    cfg.d_h = 6;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.max_len = 4;
    cfg.peers = 2;
    DualModel model = make_model(cfg.encoder(), 9, 2, 11, 0.4);
    MaskedBatch batch =
        test::make_batch({{1, 2, 3, 4}, {5, 6, 7, 0}}, 4, 8, {{0, 3}, {1}});
    batch.lengths = {4, 3};

    std::vector<Mat> frozen;
    TruncationFlags flags;
    flags.keep.assign(3, 1);
    DualModel grads = make_zero_like(model);
    {
        std::vector<ForwardCache> caches(2);
        std::vector<const Mat*> probs(2);
        for (int j = 0; j < 2; ++j) {
            probs[static_cast<std::size_t>(j)] =
                &forward_peer(model, j, batch, caches[static_cast<std::size_t>(j)]);
            frozen.push_back(*probs[static_cast<std::size_t>(j)]);
        }
        Mat dlogits;
        for (int j = 0; j < 2; ++j) {
            loss_logit_gradient(probs, j, batch.labels, flags, cfg.alpha,
                                DistillMode::med, 7, dlogits);
            backward(model, j, batch, caches[static_cast<std::size_t>(j)], dlogits,
                     grads);
        }
    }
    auto params = collect_params(model);
    auto gparams = collect_params(grads);
    const real eps = 1e-4;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].size; j += 2) {
            const real saved = params[i].data[j];
            params[i].data[j] = saved + eps;
            const real up = training_objective(model, batch, cfg, &frozen, &flags);
            params[i].data[j] = saved - eps;
            const real down = training_objective(model, batch, cfg, &frozen, &flags);
            params[i].data[j] = saved;
            const real fd = (up - down) / (2 * eps);
            const real got = gparams[i].data[j];
            CHECK(std::fabs(fd - got) <=
                  1e-4 * std::max({std::fabs(fd), std::fabs(got), 1e-3}));
        }
    }
}

TEST_CASE("gradcheck suite passes, layer norm variant included") {
    GradCheckReport report = run_gradcheck(nullptr, 50);
    CHECK(report.passed);
    for (const auto& c : report.classes) CHECK(c.max_rel_error <= 1e-4);

    // layer-norm flag on: finite differences against the same objective
    TrainConfig cfg;
    cfg.alpha = 0.4;
    cfg.beta = 0.0;
    cfg.d = 4;
    cfg.d_h = 6;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_len = 3;
    cfg.peers = 2;
    cfg.layer_norm = true;
    DualModel model = make_model(cfg.encoder(), 8, 2, 5, 0.4);
    MaskedBatch batch = test::make_batch({{1, 2, 3}, {4, 5, 6}}, 3, 7, {{0, 2}, {1}});

    std::vector<Mat> frozen;
    TruncationFlags flags;
    flags.keep.assign(3, 1);
    DualModel grads = make_zero_like(model);
    {
        std::vector<ForwardCache> caches(2);
        std::vector<const Mat*> probs(2);
        for (int j = 0; j < 2; ++j) {
            probs[static_cast<std::size_t>(j)] =
                &forward_peer(model, j, batch, caches[static_cast<std::size_t>(j)]);
            frozen.push_back(*probs[static_cast<std::size_t>(j)]);
        }
        Mat dlogits;
        for (int j = 0; j < 2; ++j) {
            loss_logit_gradient(probs, j, batch.labels, flags, cfg.alpha,
                                DistillMode::med, 6, dlogits);
            backward(model, j, batch, caches[static_cast<std::size_t>(j)], dlogits,
                     grads);
        }
    }
    auto params = collect_params(model);
    auto gparams = collect_params(grads);
    const real eps = 1e-4;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].size; j += 3) {  // sampled sweep
            const real saved = params[i].data[j];
            params[i].data[j] = saved + eps;
            const real up = training_objective(model, batch, cfg, &frozen, &flags);
            params[i].data[j] = saved - eps;
            const real down = training_objective(model, batch, cfg, &frozen, &flags);
            params[i].data[j] = saved;
            const real fd = (up - down) / (2 * eps);
            const real got = gparams[i].data[j];
            CHECK(std::fabs(fd - got) <=
                  1e-4 * std::max({std::fabs(fd), std::fabs(got), 1e-3}));
        }
    }
}
