#include "hail/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hail/errors.hpp"

namespace hail {

namespace {

void check_alignment(const Mat& probs, const std::vector<int>& labels) {
    if (probs.rows == 0) throw ContractError("empty mask coordinate set");
    if (probs.rows != static_cast<int>(labels.size()))
        throw ContractError("labels misaligned with probability rows");
}

void check_flags(const TruncationFlags& flags, int rows) {
    if (static_cast<int>(flags.keep.size()) != rows)
        throw ContractError("truncation flags misaligned with coordinates");
}

real clamped_log(real p) { return std::log(std::max(p, kProbFloor)); }

}  // namespace

int TruncationFlags::dropped_count() const {
    return static_cast<int>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
}

SelfKnowledgeLoss loss_self_knowledge(const Mat& probs, const std::vector<int>& labels) {
    check_alignment(probs, labels);
    SelfKnowledgeLoss out;
    out.per_coordinate.resize(static_cast<std::size_t>(probs.rows));
    real acc = 0.0;
    for (int i = 0; i < probs.rows; ++i) {
        const real loss = -clamped_log(probs.at(i, labels[static_cast<std::size_t>(i)]));
        out.per_coordinate[static_cast<std::size_t>(i)] = loss;
        acc += loss;
    }
    out.mean = acc / probs.rows;
    return out;
}

TruncationFlags denoise_truncation(const std::vector<std::vector<real>>& per_peer_sk,
                                   real beta, bool require_all_peers) {
    if (beta < 0.0 || beta >= 1.0) throw ContractError("beta must lie in [0, 1)");
    if (per_peer_sk.empty()) throw ContractError("need at least one peer loss vector");
    const std::size_t s_l = per_peer_sk.front().size();
    for (const auto& v : per_peer_sk)
        if (v.size() != s_l) throw ContractError("peer loss vectors differ in length");

    TruncationFlags flags;
    flags.beta = beta;
    flags.keep.assign(s_l, 1);
    const auto cutoff = static_cast<std::size_t>(
        std::ceil(beta * static_cast<real>(s_l)));
    if (cutoff == 0) return flags;

    std::vector<int> votes(s_l, 0);
    std::vector<std::size_t> order(s_l);
    for (const auto& losses : per_peer_sk) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             if (losses[a] != losses[b]) return losses[a] > losses[b];
                             return a < b;  // ties by coordinate index
                         });
        for (std::size_t r = 0; r < cutoff && r < s_l; ++r)
            ++votes[order[r]];
    }
    const int needed = require_all_peers ? static_cast<int>(per_peer_sk.size()) : 1;
    for (std::size_t i = 0; i < s_l; ++i)
        if (votes[i] >= needed) flags.keep[i] = 0;
    return flags;
}

real loss_med_positive(const Mat& self_probs, const Mat& peer_probs,
                       const std::vector<int>& labels, const TruncationFlags& flags) {
    check_alignment(self_probs, labels);
    check_alignment(peer_probs, labels);
    check_flags(flags, self_probs.rows);
    real acc = 0.0;
    for (int i = 0; i < self_probs.rows; ++i) {
        if (!flags.keep[static_cast<std::size_t>(i)]) continue;
        const int label = labels[static_cast<std::size_t>(i)];
        acc += (1.0 - peer_probs.at(i, label)) * clamped_log(self_probs.at(i, label));
    }
    return -acc / self_probs.rows;
}

real loss_med_negative(const Mat& self_probs, const Mat& peer_probs,
                       const std::vector<int>& labels, const TruncationFlags& flags,
                       int element_count) {
    check_alignment(self_probs, labels);
    check_alignment(peer_probs, labels);
    check_flags(flags, self_probs.rows);
    real acc = 0.0;
    for (int i = 0; i < self_probs.rows; ++i) {
        if (!flags.keep[static_cast<std::size_t>(i)]) continue;
        const int label = labels[static_cast<std::size_t>(i)];
        const real* self = self_probs.row(i);
        const real* peer = peer_probs.row(i);
        for (int k = 1; k <= element_count; ++k) {
            if (k == label) continue;
            acc += peer[k] * clamped_log(1.0 - self[k]);
        }
    }
    return -acc / self_probs.rows;
}

std::pair<real, real> med_multi_peer(const std::vector<const Mat*>& peer_probs,
                                     const std::vector<int>& labels,
                                     const TruncationFlags& flags, int self_index,
                                     int element_count) {
    const int t = static_cast<int>(peer_probs.size());
    if (t < 2) throw ContractError("multi-peer distillation needs T >= 2");
    if (self_index < 0 || self_index >= t) throw ContractError("bad self index");
    const Mat& self = *peer_probs[static_cast<std::size_t>(self_index)];
    check_alignment(self, labels);
    check_flags(flags, self.rows);

    real pos = 0.0, neg = 0.0;
    for (int i = 0; i < self.rows; ++i) {
        if (!flags.keep[static_cast<std::size_t>(i)]) continue;
        const int label = labels[static_cast<std::size_t>(i)];
        const real log_pos = clamped_log(self.at(i, label));
        const real* self_row = self.row(i);
        for (int c = 0; c < t; ++c) {
            if (c == self_index) continue;
            const Mat& peer = *peer_probs[static_cast<std::size_t>(c)];
            pos += (1.0 - peer.at(i, label)) * log_pos;
            const real* peer_row = peer.row(i);
            for (int k = 1; k <= element_count; ++k) {
                if (k == label) continue;
                neg += peer_row[k] * clamped_log(1.0 - self_row[k]);
            }
        }
    }
    const real scale = static_cast<real>(t - 1) * self.rows;
    return {-pos / scale, -neg / scale};
}

std::pair<real, real> loss_mimic(const Mat& self_probs, const Mat& peer_probs,
                                 const std::vector<int>& labels,
                                 const TruncationFlags& flags, int element_count) {
    check_alignment(self_probs, labels);
    check_alignment(peer_probs, labels);
    check_flags(flags, self_probs.rows);
    real pos = 0.0, neg = 0.0;
    for (int i = 0; i < self_probs.rows; ++i) {
        if (!flags.keep[static_cast<std::size_t>(i)]) continue;
        const int label = labels[static_cast<std::size_t>(i)];
        pos += peer_probs.at(i, label) * clamped_log(self_probs.at(i, label));
        const real* self = self_probs.row(i);
        const real* peer = peer_probs.row(i);
        for (int k = 1; k <= element_count; ++k) {
            if (k == label) continue;
            neg += (1.0 - peer[k]) * clamped_log(1.0 - self[k]);
        }
    }
    return {-pos / self_probs.rows, -neg / self_probs.rows};
}

real grad_med_pos_wrt_logit(real p_self_pos, real p_peer_pos) {
    return (1.0 - p_peer_pos) * (p_self_pos - 1.0);
}

LossBreakdown combine_total(std::vector<PeerLossTerms> terms, real alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ContractError("alpha must lie in [0, 1]");
    LossBreakdown out;
    out.peers = std::move(terms);
    for (auto& peer : out.peers) {
        peer.total = alpha * peer.sk + (1.0 - alpha) * (peer.med_pos + peer.med_neg);
        out.grand_total += peer.total;
    }
    return out;
}

void loss_logit_gradient(const std::vector<const Mat*>& peer_probs, int self_index,
                         const std::vector<int>& labels, const TruncationFlags& flags,
                         real alpha, DistillMode mode, int element_count, Mat& dlogits,
                         DistillTerms terms) {
    const int t = static_cast<int>(peer_probs.size());
    const Mat& self = *peer_probs[static_cast<std::size_t>(self_index)];
    check_alignment(self, labels);
    check_flags(flags, self.rows);

    const int m = self.rows;
    const int v = self.cols;
    dlogits.resize(m, v);

    const real sk_scale = (mode == DistillMode::none ? 1.0 : alpha) / m;
    const bool distill = mode != DistillMode::none && alpha < 1.0;
    const real med_scale = distill ? (1.0 - alpha) / m : 0.0;
    const real rescale = t > 1 ? 1.0 / static_cast<real>(t - 1) : 0.0;

    std::vector<real> g(static_cast<std::size_t>(v));
    for (int i = 0; i < m; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        const real* p = self.row(i);
        real* dz = dlogits.row(i);

        // self-knowledge: d(-log p_*)/dz = p - e_*; zero once the clamp bites
        if (sk_scale != 0.0 && p[label] > kProbFloor) {
            for (int k = 0; k < v; ++k) dz[k] += sk_scale * p[k];
            dz[label] -= sk_scale;
        }

        if (!distill || !flags.keep[static_cast<std::size_t>(i)]) continue;

        real pos_weight = 0.0;  // weight on the positive cross-entropy term
        std::fill(g.begin(), g.end(), 0.0);
        for (int c = 0; c < t; ++c) {
            if (c == self_index) continue;
            const real* q = peer_probs[static_cast<std::size_t>(c)]->row(i);
            pos_weight +=
                (mode == DistillMode::med ? 1.0 - q[label] : q[label]) * rescale;
            for (int k = 1; k <= element_count; ++k) {
                if (k == label) continue;
                g[static_cast<std::size_t>(k)] +=
                    (mode == DistillMode::med ? q[k] : 1.0 - q[k]) * rescale;
            }
        }

        if (terms != DistillTerms::negative_only && p[label] > kProbFloor) {
            const real s = med_scale * pos_weight;
            for (int k = 0; k < v; ++k) dz[k] += s * p[k];
            dz[label] -= s;
        }
        if (terms == DistillTerms::positive_only) continue;
        // negatives: dL/dp_k = w_k / (1 - p_k), then through the softmax
        for (int k = 1; k <= element_count; ++k) {
            if (k == label) continue;
            const real one_minus = 1.0 - p[k];
            g[static_cast<std::size_t>(k)] =
                one_minus > kProbFloor ? g[static_cast<std::size_t>(k)] / one_minus : 0.0;
        }
        g[0] = 0.0;
        g[static_cast<std::size_t>(label)] = 0.0;
        for (int k = element_count + 1; k < v; ++k) g[static_cast<std::size_t>(k)] = 0.0;
        softmax_backward_row(p, g.data(), v, med_scale, dz);
    }
}

}  // namespace hail
