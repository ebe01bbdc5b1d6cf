#include "hail/encoder.hpp"

#include <cmath>
#include <cstring>

#include "hail/errors.hpp"
#include "hail/rng.hpp"

namespace hail {

namespace {

constexpr real kPadScore = -1e9;

void init_mat(Mat& m, Rng& rng, real std) {
    for (real& x : m.a) x = rng.truncated_normal(std);
}

void add_rows(Mat& dst, const Mat& src) {
    for (std::size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += src.a[i];
}

void add_bias(Mat& m, const std::vector<real>& bias) {
    for (int r = 0; r < m.rows; ++r) {
        real* row = m.row(r);
        for (int c = 0; c < m.cols; ++c) row[c] += bias[static_cast<std::size_t>(c)];
    }
}

void accumulate_column_sums(const Mat& m, std::vector<real>& out) {
    for (int r = 0; r < m.rows; ++r) {
        const real* row = m.row(r);
        for (int c = 0; c < m.cols; ++c) out[static_cast<std::size_t>(c)] += row[c];
    }
}

void layer_norm_forward(const Mat& x, const LayerNormParams& p, Mat& y,
                        std::vector<real>& mean, std::vector<real>& rstd) {
    const int n = x.cols;
    mean.resize(static_cast<std::size_t>(x.rows));
    rstd.resize(static_cast<std::size_t>(x.rows));
    y.resize(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
        const real* xr = x.row(r);
        real mu = 0.0;
        for (int c = 0; c < n; ++c) mu += xr[c];
        mu /= n;
        real var = 0.0;
        for (int c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= n;
        const real rs = 1.0 / std::sqrt(var + 1e-12);
        mean[static_cast<std::size_t>(r)] = mu;
        rstd[static_cast<std::size_t>(r)] = rs;
        real* yr = y.row(r);
        for (int c = 0; c < n; ++c)
            yr[c] = p.gain[static_cast<std::size_t>(c)] * (xr[c] - mu) * rs +
                    p.bias[static_cast<std::size_t>(c)];
    }
}

void layer_norm_backward(const Mat& x_pre, const LayerNormParams& p,
                         const std::vector<real>& mean,
                         const std::vector<real>& rstd, const Mat& dy, Mat& dx,
                         LayerNormParams& grad) {
    const int n = x_pre.cols;
    dx.resize(x_pre.rows, x_pre.cols);
    for (int r = 0; r < x_pre.rows; ++r) {
        const real* xr = x_pre.row(r);
        const real* dyr = dy.row(r);
        real* dxr = dx.row(r);
        const real mu = mean[static_cast<std::size_t>(r)];
        const real rs = rstd[static_cast<std::size_t>(r)];
        real sum_g = 0.0, sum_gx = 0.0;
        for (int c = 0; c < n; ++c) {
            const real xhat = (xr[c] - mu) * rs;
            const real gdy = dyr[c] * p.gain[static_cast<std::size_t>(c)];
            grad.gain[static_cast<std::size_t>(c)] += dyr[c] * xhat;
            grad.bias[static_cast<std::size_t>(c)] += dyr[c];
            sum_g += gdy;
            sum_gx += gdy * xhat;
        }
        for (int c = 0; c < n; ++c) {
            const real xhat = (xr[c] - mu) * rs;
            const real gdy = dyr[c] * p.gain[static_cast<std::size_t>(c)];
            dxr[c] = rs * (gdy - sum_g / n - xhat * sum_gx / n);
        }
    }
}

}  // namespace

DualModel make_model(const EncoderConfig& cfg, int vocab_rows, int peer_count,
                     std::uint64_t seed, real init_std) {
    if (cfg.d % cfg.heads != 0)
        throw ContractError("head count must divide the hidden size");
    if (peer_count < 1) throw ContractError("need at least one peer");

    DualModel model;
    model.cfg = cfg;
    model.vocab_rows = vocab_rows;
    const int d_r = cfg.d / cfg.heads;

    Rng shared_rng(mix_seed(seed, 0));
    model.shared.element_table.resize(vocab_rows, cfg.d);
    model.shared.positional_table.resize(cfg.max_len, cfg.d);
    model.shared.prediction_weight.resize(cfg.d, cfg.d);
    model.shared.prediction_bias.assign(static_cast<std::size_t>(cfg.d), 0.0);
    model.shared.output_bias.assign(static_cast<std::size_t>(vocab_rows), 0.0);
    init_mat(model.shared.element_table, shared_rng, init_std);
    init_mat(model.shared.positional_table, shared_rng, init_std);
    init_mat(model.shared.prediction_weight, shared_rng, init_std);

    model.peers.resize(static_cast<std::size_t>(peer_count));
    for (int t = 0; t < peer_count; ++t) {
        Rng peer_rng(mix_seed(seed, 1 + static_cast<std::uint64_t>(t)));
        PeerStack& stack = model.peers[static_cast<std::size_t>(t)];
        stack.layers.resize(static_cast<std::size_t>(cfg.layers));
        for (auto& layer : stack.layers) {
            layer.w_q.resize(static_cast<std::size_t>(cfg.heads));
            layer.w_k.resize(static_cast<std::size_t>(cfg.heads));
            layer.w_v.resize(static_cast<std::size_t>(cfg.heads));
            for (int r = 0; r < cfg.heads; ++r) {
                layer.w_q[static_cast<std::size_t>(r)].resize(cfg.d, d_r);
                layer.w_k[static_cast<std::size_t>(r)].resize(cfg.d, d_r);
                layer.w_v[static_cast<std::size_t>(r)].resize(cfg.d, d_r);
                init_mat(layer.w_q[static_cast<std::size_t>(r)], peer_rng, init_std);
                init_mat(layer.w_k[static_cast<std::size_t>(r)], peer_rng, init_std);
                init_mat(layer.w_v[static_cast<std::size_t>(r)], peer_rng, init_std);
            }
            layer.w_o.resize(cfg.d, cfg.d);
            layer.w_1.resize(cfg.d, cfg.d_h);
            layer.b_1.assign(static_cast<std::size_t>(cfg.d_h), 0.0);
            layer.w_2.resize(cfg.d_h, cfg.d);
            layer.b_2.assign(static_cast<std::size_t>(cfg.d), 0.0);
            init_mat(layer.w_o, peer_rng, init_std);
            init_mat(layer.w_1, peer_rng, init_std);
            init_mat(layer.w_2, peer_rng, init_std);
            if (cfg.layer_norm) {
                layer.ln_attn.gain.assign(static_cast<std::size_t>(cfg.d), 1.0);
                layer.ln_attn.bias.assign(static_cast<std::size_t>(cfg.d), 0.0);
                layer.ln_ffn.gain.assign(static_cast<std::size_t>(cfg.d), 1.0);
                layer.ln_ffn.bias.assign(static_cast<std::size_t>(cfg.d), 0.0);
            }
        }
    }
    return model;
}

DualModel make_zero_like(const DualModel& model) {
    DualModel z = model;
    for (auto& ref : collect_params(z)) std::memset(ref.data, 0, ref.size * sizeof(real));
    return z;
}

std::vector<ParamRef> collect_params(DualModel& model) {
    std::vector<ParamRef> refs;
    auto push_mat = [&](const std::string& name, Mat& m) {
        refs.push_back({name, m.a.data(), m.a.size()});
    };
    auto push_vec = [&](const std::string& name, std::vector<real>& v) {
        refs.push_back({name, v.data(), v.size()});
    };

    push_mat("shared/element_table", model.shared.element_table);
    push_mat("shared/positional_table", model.shared.positional_table);
    push_mat("shared/prediction_weight", model.shared.prediction_weight);
    push_vec("shared/prediction_bias", model.shared.prediction_bias);
    push_vec("shared/output_bias", model.shared.output_bias);

    for (int t = 0; t < model.peer_count(); ++t) {
        PeerStack& stack = model.peers[static_cast<std::size_t>(t)];
        for (std::size_t l = 0; l < stack.layers.size(); ++l) {
            EncoderLayerParams& layer = stack.layers[l];
            const std::string prefix =
                "peer" + std::to_string(t) + "/layer" + std::to_string(l) + "/";
            for (std::size_t r = 0; r < layer.w_q.size(); ++r) {
                const std::string head = "head" + std::to_string(r) + "/";
                push_mat(prefix + head + "w_q", layer.w_q[r]);
                push_mat(prefix + head + "w_k", layer.w_k[r]);
                push_mat(prefix + head + "w_v", layer.w_v[r]);
            }
            push_mat(prefix + "w_o", layer.w_o);
            push_mat(prefix + "w_1", layer.w_1);
            push_vec(prefix + "b_1", layer.b_1);
            push_mat(prefix + "w_2", layer.w_2);
            push_vec(prefix + "b_2", layer.b_2);
            if (model.cfg.layer_norm) {
                push_vec(prefix + "ln_attn_gain", layer.ln_attn.gain);
                push_vec(prefix + "ln_attn_bias", layer.ln_attn.bias);
                push_vec(prefix + "ln_ffn_gain", layer.ln_ffn.gain);
                push_vec(prefix + "ln_ffn_bias", layer.ln_ffn.bias);
            }
        }
    }
    return refs;
}

std::size_t total_param_count(const DualModel& model) {
    std::size_t n = 0;
    for (const auto& ref : collect_params(const_cast<DualModel&>(model))) n += ref.size;
    return n;
}

void embed(const MaskedBatch& batch, const SharedTables& shared, Mat& h0) {
    const int d = shared.element_table.cols;
    const int cells = batch.rows * batch.max_len;
    h0.resize(cells, d);
    for (int i = 0; i < cells; ++i) {
        const int token = batch.tokens[static_cast<std::size_t>(i)];
        const int pos = batch.positions[static_cast<std::size_t>(i)];
        if (token < 0 || token >= shared.vocab_rows())
            throw ContractError("token id " + std::to_string(token) +
                                " outside the embedding table");
        if (pos < 0 || pos >= shared.positional_table.rows)
            throw ContractError("position index " + std::to_string(pos) +
                                " outside the positional table");
        const real* u = shared.element_table.row(token);
        const real* s = shared.positional_table.row(pos);
        real* h = h0.row(i);
        for (int c = 0; c < d; ++c) h[c] = u[c] + s[c];
    }
}

void attention_sublayer(const Mat& h_prev, const EncoderLayerParams& params,
                        const MaskedBatch& batch, const EncoderConfig& cfg,
                        LayerCache& cache, Mat& a0) {
    const int d = cfg.d;
    const int heads = cfg.heads;
    const int d_r = d / heads;
    const int n = batch.max_len;
    const int bn = h_prev.rows;
    const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(d_r));

    cache.q.assign(static_cast<std::size_t>(heads), Mat());
    cache.k.assign(static_cast<std::size_t>(heads), Mat());
    cache.v.assign(static_cast<std::size_t>(heads), Mat());
    cache.attn.assign(static_cast<std::size_t>(heads), Mat());
    cache.concat.resize(bn, d);

    std::vector<real> ctx(static_cast<std::size_t>(n) * d_r);
    for (int r = 0; r < heads; ++r) {
        Mat& q = cache.q[static_cast<std::size_t>(r)];
        Mat& k = cache.k[static_cast<std::size_t>(r)];
        Mat& v = cache.v[static_cast<std::size_t>(r)];
        Mat& attn = cache.attn[static_cast<std::size_t>(r)];
        q.resize(bn, d_r);
        k.resize(bn, d_r);
        v.resize(bn, d_r);
        attn.resize(bn, n);
        mm_nn(h_prev.a.data(), bn, d, params.w_q[static_cast<std::size_t>(r)].a.data(), d_r,
              q.a.data(), false);
        mm_nn(h_prev.a.data(), bn, d, params.w_k[static_cast<std::size_t>(r)].a.data(), d_r,
              k.a.data(), false);
        mm_nn(h_prev.a.data(), bn, d, params.w_v[static_cast<std::size_t>(r)].a.data(), d_r,
              v.a.data(), false);

        for (int b = 0; b < batch.rows; ++b) {
            const int base = b * n;
            const int len = batch.lengths[static_cast<std::size_t>(b)];
            real* scores = attn.row(base);
            mm_nt(q.row(base), n, d_r, k.row(base), n, scores, false);
            for (int i = 0; i < n; ++i) {
                real* srow = scores + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    srow[j] *= inv_sqrt;
                    if (std::isnan(srow[j]))
                        throw NumericError("NaN attention score at batch row " +
                                           std::to_string(b));
                    if (j >= len) srow[j] += kPadScore;
                }
                softmax_row(srow, n);
            }
            mm_nn(scores, n, n, v.row(base), d_r, ctx.data(), false);
            for (int i = 0; i < n; ++i) {
                real* dst = cache.concat.row(base + i) + static_cast<std::size_t>(r) * d_r;
                const real* src = ctx.data() + static_cast<std::size_t>(i) * d_r;
                for (int c = 0; c < d_r; ++c) dst[c] = src[c];
            }
        }
    }

    Mat& out_pre = cfg.layer_norm ? cache.a0_pre : a0;
    out_pre.resize(bn, d);
    mm_nn(cache.concat.a.data(), bn, d, params.w_o.a.data(), d, out_pre.a.data(), false);
    add_rows(out_pre, h_prev);
    if (cfg.layer_norm)
        layer_norm_forward(cache.a0_pre, params.ln_attn, a0, cache.ln1_mean,
                           cache.ln1_rstd);
}

void ffn_sublayer(const Mat& a0, const EncoderLayerParams& params,
                  const EncoderConfig& cfg, LayerCache& cache, Mat& h_out) {
    const int bn = a0.rows;
    cache.ffn_pre.resize(bn, cfg.d_h);
    mm_nn(a0.a.data(), bn, cfg.d, params.w_1.a.data(), cfg.d_h, cache.ffn_pre.a.data(),
          false);
    add_bias(cache.ffn_pre, params.b_1);

    cache.ffn_act.resize(bn, cfg.d_h);
    for (std::size_t i = 0; i < cache.ffn_pre.a.size(); ++i)
        cache.ffn_act.a[i] = gelu(cache.ffn_pre.a[i]);

    Mat& out_pre = cfg.layer_norm ? cache.h_pre : h_out;
    out_pre.resize(bn, cfg.d);
    mm_nn(cache.ffn_act.a.data(), bn, cfg.d_h, params.w_2.a.data(), cfg.d,
          out_pre.a.data(), false);
    add_bias(out_pre, params.b_2);
    add_rows(out_pre, a0);
    if (cfg.layer_norm)
        layer_norm_forward(cache.h_pre, params.ln_ffn, h_out, cache.ln2_mean,
                           cache.ln2_rstd);
}

const Mat& forward_peer(const DualModel& model, int peer_index,
                        const MaskedBatch& batch, ForwardCache& cache) {
    if (peer_index < 0 || peer_index >= model.peer_count())
        throw ContractError("peer index " + std::to_string(peer_index) +
                            " out of range");
    const EncoderConfig& cfg = model.cfg;
    const PeerStack& stack = model.peers[static_cast<std::size_t>(peer_index)];
    const int m = batch.coordinate_count();
    const int v_rows = model.vocab_rows;

    cache.valid = false;
    cache.rows = batch.rows;
    cache.max_len = batch.max_len;
    cache.coordinates = m;
    cache.layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache());

    embed(batch, model.shared, cache.h0);

    const Mat* h = &cache.h0;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        attention_sublayer(*h, stack.layers[static_cast<std::size_t>(l)], batch, cfg, lc,
                           lc.a0);
        ffn_sublayer(lc.a0, stack.layers[static_cast<std::size_t>(l)], cfg, lc, lc.h_out);
        h = &lc.h_out;
    }

    cache.gathered.resize(m, cfg.d);
    for (int i = 0; i < m; ++i) {
        const auto [row, col] = batch.mask_index[static_cast<std::size_t>(i)];
        const real* src = h->row(row * batch.max_len + col);
        real* dst = cache.gathered.row(i);
        for (int c = 0; c < cfg.d; ++c) dst[c] = src[c];
    }

    cache.pred_pre.resize(m, cfg.d);
    mm_nn(cache.gathered.a.data(), m, cfg.d, model.shared.prediction_weight.a.data(),
          cfg.d, cache.pred_pre.a.data(), false);
    add_bias(cache.pred_pre, model.shared.prediction_bias);

    cache.pred_act.resize(m, cfg.d);
    for (std::size_t i = 0; i < cache.pred_pre.a.size(); ++i)
        cache.pred_act.a[i] = gelu(cache.pred_pre.a[i]);

    cache.logits.resize(m, v_rows);
    mm_nt(cache.pred_act.a.data(), m, cfg.d, model.shared.element_table.a.data(),
          v_rows, cache.logits.a.data(), false);
    add_bias(cache.logits, model.shared.output_bias);

    cache.probs = cache.logits;
    for (int i = 0; i < m; ++i) softmax_row(cache.probs.row(i), v_rows);

    cache.valid = true;
    return cache.probs;
}

void backward(const DualModel& model, int peer_index, const MaskedBatch& batch,
              const ForwardCache& cache, const Mat& dlogits, DualModel& grads) {
    if (!cache.valid || cache.rows != batch.rows ||
        cache.coordinates != batch.coordinate_count())
        throw ContractError("backward called without a matching forward cache");
    if (dlogits.rows != cache.coordinates || dlogits.cols != model.vocab_rows)
        throw ContractError("upstream gradient shape mismatch");

    const EncoderConfig& cfg = model.cfg;
    const int d = cfg.d;
    const int heads = cfg.heads;
    const int d_r = d / heads;
    const int n = batch.max_len;
    const int bn = batch.rows * n;
    const int m = cache.coordinates;
    const real inv_sqrt = 1.0 / std::sqrt(static_cast<real>(d_r));
    const PeerStack& stack = model.peers[static_cast<std::size_t>(peer_index)];
    PeerStack& gstack = grads.peers[static_cast<std::size_t>(peer_index)];

    // prediction head: z = GELU(h W_P + b_P) U^T + b_U
    Mat dact(m, d);
    mm_nn(dlogits.a.data(), m, model.vocab_rows, model.shared.element_table.a.data(), d,
          dact.a.data(), false);
    mm_tn(dlogits.a.data(), m, model.vocab_rows, cache.pred_act.a.data(), d,
          grads.shared.element_table.a.data(), true);
    accumulate_column_sums(dlogits, grads.shared.output_bias);

    Mat dpre(m, d);
    for (std::size_t i = 0; i < dpre.a.size(); ++i)
        dpre.a[i] = dact.a[i] * gelu_grad(cache.pred_pre.a[i]);
    mm_tn(cache.gathered.a.data(), m, d, dpre.a.data(), d,
          grads.shared.prediction_weight.a.data(), true);
    accumulate_column_sums(dpre, grads.shared.prediction_bias);

    Mat dgathered(m, d);
    mm_nt(dpre.a.data(), m, d, model.shared.prediction_weight.a.data(), d,
          dgathered.a.data(), false);

    Mat dh(bn, d);
    for (int i = 0; i < m; ++i) {
        const auto [row, col] = batch.mask_index[static_cast<std::size_t>(i)];
        real* dst = dh.row(row * n + col);
        const real* src = dgathered.row(i);
        for (int c = 0; c < d; ++c) dst[c] += src[c];
    }

    Mat da0(bn, d), dtmp(bn, d), dffn_pre(bn, cfg.d_h), dact2(bn, cfg.d_h);
    Mat dq(bn, d_r), dk(bn, d_r), dv(bn, d_r), dctx(bn, d_r);
    std::vector<real> dscores(static_cast<std::size_t>(n) * n);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        const EncoderLayerParams& lp = stack.layers[static_cast<std::size_t>(l)];
        EncoderLayerParams& lg = gstack.layers[static_cast<std::size_t>(l)];
        const Mat& h_in =
            l == 0 ? cache.h0 : cache.layers[static_cast<std::size_t>(l - 1)].h_out;

        // FFN sublayer
        if (cfg.layer_norm) {
            layer_norm_backward(lc.h_pre, lp.ln_ffn, lc.ln2_mean, lc.ln2_rstd, dh, dtmp,
                                lg.ln_ffn);
            dh = dtmp;
        }
        dact2.resize(bn, cfg.d_h);
        mm_nt(dh.a.data(), bn, d, lp.w_2.a.data(), cfg.d_h, dact2.a.data(), false);
        mm_tn(lc.ffn_act.a.data(), bn, cfg.d_h, dh.a.data(), d, lg.w_2.a.data(), true);
        accumulate_column_sums(dh, lg.b_2);

        dffn_pre.resize(bn, cfg.d_h);
        for (std::size_t i = 0; i < dffn_pre.a.size(); ++i)
            dffn_pre.a[i] = dact2.a[i] * gelu_grad(lc.ffn_pre.a[i]);
        mm_tn(lc.a0.a.data(), bn, d, dffn_pre.a.data(), cfg.d_h, lg.w_1.a.data(), true);
        accumulate_column_sums(dffn_pre, lg.b_1);

        da0 = dh;  // residual path
        mm_nt(dffn_pre.a.data(), bn, cfg.d_h, lp.w_1.a.data(), d, da0.a.data(), true);

        // attention sublayer
        if (cfg.layer_norm) {
            layer_norm_backward(lc.a0_pre, lp.ln_attn, lc.ln1_mean, lc.ln1_rstd, da0,
                                dtmp, lg.ln_attn);
            da0 = dtmp;
        }
        Mat dconcat(bn, d);
        mm_nt(da0.a.data(), bn, d, lp.w_o.a.data(), d, dconcat.a.data(), false);
        mm_tn(lc.concat.a.data(), bn, d, da0.a.data(), d, lg.w_o.a.data(), true);

        dh = da0;  // residual into the sublayer input
        for (int r = 0; r < heads; ++r) {
            const Mat& q = lc.q[static_cast<std::size_t>(r)];
            const Mat& k = lc.k[static_cast<std::size_t>(r)];
            const Mat& v = lc.v[static_cast<std::size_t>(r)];
            const Mat& attn = lc.attn[static_cast<std::size_t>(r)];
            dq.zero();
            dk.zero();
            dv.zero();
            for (int i = 0; i < bn; ++i) {
                const real* src = dconcat.row(i) + static_cast<std::size_t>(r) * d_r;
                real* dst = dctx.row(i);
                for (int c = 0; c < d_r; ++c) dst[c] = src[c];
            }
            for (int b = 0; b < batch.rows; ++b) {
                const int base = b * n;
                // dattn = dctx V^T, then through the softmax rows
                mm_nt(dctx.row(base), n, d_r, v.row(base), n, dscores.data(), false);
                mm_tn(attn.row(base), n, n, dctx.row(base), d_r, dv.row(base), true);
                for (int i = 0; i < n; ++i) {
                    const real* arow = attn.row(base + i);
                    real* srow = dscores.data() + static_cast<std::size_t>(i) * n;
                    real dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += srow[j] * arow[j];
                    for (int j = 0; j < n; ++j)
                        srow[j] = inv_sqrt * arow[j] * (srow[j] - dot);
                }
                mm_nn(dscores.data(), n, n, k.row(base), d_r, dq.row(base), true);
                mm_tn(dscores.data(), n, n, q.row(base), d_r, dk.row(base), true);
            }
            mm_tn(h_in.a.data(), bn, d, dq.a.data(), d_r,
                  lg.w_q[static_cast<std::size_t>(r)].a.data(), true);
            mm_tn(h_in.a.data(), bn, d, dk.a.data(), d_r,
                  lg.w_k[static_cast<std::size_t>(r)].a.data(), true);
            mm_tn(h_in.a.data(), bn, d, dv.a.data(), d_r,
                  lg.w_v[static_cast<std::size_t>(r)].a.data(), true);
            mm_nt(dq.a.data(), bn, d_r, lp.w_q[static_cast<std::size_t>(r)].a.data(), d,
                  dh.a.data(), true);
            mm_nt(dk.a.data(), bn, d_r, lp.w_k[static_cast<std::size_t>(r)].a.data(), d,
                  dh.a.data(), true);
            mm_nt(dv.a.data(), bn, d_r, lp.w_v[static_cast<std::size_t>(r)].a.data(), d,
                  dh.a.data(), true);
        }
    }

    // embedding: H0[b,i] = U[token] + S[pos]
    for (int i = 0; i < bn; ++i) {
        const int token = batch.tokens[static_cast<std::size_t>(i)];
        const int pos = batch.positions[static_cast<std::size_t>(i)];
        const real* src = dh.row(i);
        real* gu = grads.shared.element_table.row(token);
        real* gs = grads.shared.positional_table.row(pos);
        for (int c = 0; c < d; ++c) {
            gu[c] += src[c];
            gs[c] += src[c];
        }
    }
}

}  // namespace hail
