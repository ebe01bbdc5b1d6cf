#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hail/linalg.hpp"

namespace hail {

// Probabilities are clamped to >= kProbFloor before any log so every loss
// value stays finite.
constexpr real kProbFloor = 1e-12;

enum class DistillMode { med, mimic, none };

struct SelfKnowledgeLoss {
    real mean = 0.0;
    std::vector<real> per_coordinate;  // feeds the denoising rank
};

// Which masked coordinates keep their distillation terms. Dropping never
// shrinks the 1/|I| denominator; a dropped coordinate contributes zero.
struct TruncationFlags {
    std::vector<std::uint8_t> keep;
    real beta = 0.0;

    int dropped_count() const;
};

// -(1/|I|) sum_i log p_{i,*}
SelfKnowledgeLoss loss_self_knowledge(const Mat& probs, const std::vector<int>& labels);

// Drops a coordinate when it ranks inside the top ceil(beta * S_L) losses of
// any peer (all peers instead when require_all_peers). Rank is 0-based,
// descending, ties broken by coordinate index.
TruncationFlags denoise_truncation(const std::vector<std::vector<real>>& per_peer_sk,
                                   real beta, bool require_all_peers = false);

// -(1/|I|) sum_kept (1 - p_peer_*) log p_self_*
real loss_med_positive(const Mat& self_probs, const Mat& peer_probs,
                       const std::vector<int>& labels, const TruncationFlags& flags);

// -(1/|I|) sum_kept sum_{k != *} p_peer_k log(1 - p_self_k), k over real
// elements only (pad and mask rows are implementation artifacts).
real loss_med_negative(const Mat& self_probs, const Mat& peer_probs,
                       const std::vector<int>& labels, const TruncationFlags& flags,
                       int element_count);

// T-peer generalization with the 1/(T-1) rescale; equals the pairwise losses
// at T = 2.
std::pair<real, real> med_multi_peer(const std::vector<const Mat*>& peer_probs,
                                     const std::vector<int>& labels,
                                     const TruncationFlags& flags, int self_index,
                                     int element_count);

// Ablation weights: p_peer on positives, (1 - p_peer) on negatives.
std::pair<real, real> loss_mimic(const Mat& self_probs, const Mat& peer_probs,
                                 const std::vector<int>& labels,
                                 const TruncationFlags& flags, int element_count);

// Closed form d(MED-pos)/d(z_*) for one coordinate; the analytic oracle for
// the backprop path.
real grad_med_pos_wrt_logit(real p_self_pos, real p_peer_pos);

struct PeerLossTerms {
    real sk = 0.0;
    real med_pos = 0.0;
    real med_neg = 0.0;
    real total = 0.0;
    int truncated_count = 0;
};

struct LossBreakdown {
    std::vector<PeerLossTerms> peers;
    real grand_total = 0.0;
};

// total_j = alpha * sk + (1 - alpha) * (med_pos + med_neg); grand total sums
// the peers.
LossBreakdown combine_total(std::vector<PeerLossTerms> terms, real alpha);

// Which distillation terms participate; the gradient checker isolates the
// positive term against its closed form.
enum class DistillTerms { both, positive_only, negative_only };

// dL/dz for one peer's slice of the summed objective, including the alpha
// balance and truncation. Peer distributions act as constant weights; no
// gradient flows toward them.
void loss_logit_gradient(const std::vector<const Mat*>& peer_probs, int self_index,
                         const std::vector<int>& labels, const TruncationFlags& flags,
                         real alpha, DistillMode mode, int element_count, Mat& dlogits,
                         DistillTerms terms = DistillTerms::both);

}  // namespace hail
