#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/encoder.hpp"
#include "hail/masking.hpp"
#include "hail/rng.hpp"

namespace hail::test {

inline RawEventLog make_log(
    const std::vector<std::tuple<std::string, std::string, long long>>& rows) {
    RawEventLog log;
    for (const auto& [g, e, ts] : rows) log.records.push_back({g, e, ts});
    return log;
}

// batch with explicit tokens/masks; tokens at masked positions are replaced
// by mask_id and labels record the originals
inline MaskedBatch make_batch(const std::vector<std::vector<int>>& rows, int max_len,
                              int mask_id,
                              const std::vector<std::vector<int>>& mask_positions) {
    MaskedBatch batch;
    batch.rows = static_cast<int>(rows.size());
    batch.max_len = max_len;
    batch.tokens.assign(static_cast<std::size_t>(batch.rows) * max_len, 0);
    batch.positions.resize(static_cast<std::size_t>(batch.rows) * max_len);
    for (int r = 0; r < batch.rows; ++r) {
        batch.lengths.push_back(static_cast<int>(rows[static_cast<std::size_t>(r)].size()));
        for (int c = 0; c < max_len; ++c)
            batch.positions[static_cast<std::size_t>(r) * max_len + c] = c;
        for (std::size_t c = 0; c < rows[static_cast<std::size_t>(r)].size(); ++c)
            batch.tokens[static_cast<std::size_t>(r) * max_len + c] =
                rows[static_cast<std::size_t>(r)][c];
        for (int pos : mask_positions[static_cast<std::size_t>(r)]) {
            batch.mask_index.emplace_back(r, pos);
            batch.labels.push_back(
                batch.tokens[static_cast<std::size_t>(r) * max_len + pos]);
            batch.tokens[static_cast<std::size_t>(r) * max_len + pos] = mask_id;
        }
    }
    return batch;
}

// probability rows crafted directly (values must sum to 1 per row)
inline Mat make_probs(const std::vector<std::vector<real>>& rows) {
    Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), m.row(static_cast<int>(r)));
    return m;
}

// reference attention: explicit loops, one scalar at a time
inline Mat naive_attention(const Mat& h, const EncoderLayerParams& p,
                           const std::vector<int>& lengths, int n, int d, int heads) {
    const int rows = h.rows / n;
    const int d_r = d / heads;
    Mat concat(h.rows, d);
    for (int b = 0; b < rows; ++b) {
        for (int r = 0; r < heads; ++r) {
            std::vector<std::vector<real>> q(n, std::vector<real>(d_r)), k = q, v = q;
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < d_r; ++c) {
                    real sq = 0, sk = 0, sv = 0;
                    for (int e = 0; e < d; ++e) {
                        const real x = h.at(b * n + i, e);
                        sq += x * p.w_q[static_cast<std::size_t>(r)].at(e, c);
                        sk += x * p.w_k[static_cast<std::size_t>(r)].at(e, c);
                        sv += x * p.w_v[static_cast<std::size_t>(r)].at(e, c);
                    }
                    q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = sq;
                    k[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = sk;
                    v[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = sv;
                }
            for (int i = 0; i < n; ++i) {
                std::vector<real> score(static_cast<std::size_t>(n));
                for (int j = 0; j < n; ++j) {
                    real s = 0;
                    for (int c = 0; c < d_r; ++c)
                        s += q[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                             k[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
                    s /= std::sqrt(static_cast<real>(d_r));
                    if (j >= lengths[static_cast<std::size_t>(b)]) s += -1e9;
                    score[static_cast<std::size_t>(j)] = s;
                }
                real mx = *std::max_element(score.begin(), score.end());
                real z = 0;
                for (real& s : score) {
                    s = std::exp(s - mx);
                    z += s;
                }
                for (real& s : score) s /= z;
                for (int c = 0; c < d_r; ++c) {
                    real out = 0;
                    for (int j = 0; j < n; ++j)
                        out += score[static_cast<std::size_t>(j)] *
                               v[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
                    concat.at(b * n + i, r * d_r + c) = out;
                }
            }
        }
    }
    Mat a0(h.rows, d);
    for (int i = 0; i < h.rows; ++i)
        for (int c = 0; c < d; ++c) {
            real s = 0;
            for (int e = 0; e < d; ++e) s += concat.at(i, e) * p.w_o.at(e, c);
            a0.at(i, c) = s + h.at(i, c);
        }
    return a0;
}

inline Mat naive_ffn(const Mat& a0, const EncoderLayerParams& p, int d, int d_h) {
    Mat out(a0.rows, d);
    for (int i = 0; i < a0.rows; ++i) {
        std::vector<real> hidden(static_cast<std::size_t>(d_h));
        for (int c = 0; c < d_h; ++c) {
            real s = p.b_1[static_cast<std::size_t>(c)];
            for (int e = 0; e < d; ++e) s += a0.at(i, e) * p.w_1.at(e, c);
            hidden[static_cast<std::size_t>(c)] = gelu(s);
        }
        for (int c = 0; c < d; ++c) {
            real s = p.b_2[static_cast<std::size_t>(c)];
            for (int e = 0; e < d_h; ++e)
                s += hidden[static_cast<std::size_t>(e)] * p.w_2.at(e, c);
            out.at(i, c) = s + a0.at(i, c);
        }
    }
    return out;
}

inline real spearman_rho(const std::vector<real>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<real> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[order[i]] = static_cast<real>(i);
    real num = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const real d = rank[i] - static_cast<real>(i);
        num += d * d;
    }
    const real nn = static_cast<real>(n);
    return 1.0 - 6.0 * num / (nn * (nn * nn - 1.0));
}

}  // namespace hail::test
