#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hail/linalg.hpp"
#include "hail/masking.hpp"

namespace hail {

struct EncoderConfig {
    int d = 64;
    int d_h = 256;
    int layers = 2;
    int heads = 2;
    int max_len = 200;
    bool layer_norm = false;  // off by default; the sublayers are residual-only
};

// Parameters shared by reference between all peers: one storage instance,
// gradients from every peer accumulate into the same buffers.
struct SharedTables {
    Mat element_table;      // (|E|+2) x d, rows 0 (pad) and |E|+1 (mask) included
    Mat positional_table;   // N x d
    Mat prediction_weight;  // d x d
    std::vector<real> prediction_bias;  // d
    std::vector<real> output_bias;      // |E|+2

    int vocab_rows() const { return element_table.rows; }
};

struct LayerNormParams {
    std::vector<real> gain;
    std::vector<real> bias;
};

struct EncoderLayerParams {
    std::vector<Mat> w_q, w_k, w_v;  // per head: d x d/R
    Mat w_o;                         // d x d
    Mat w_1;                         // d x d_h
    std::vector<real> b_1;           // d_h
    Mat w_2;                         // d_h x d
    std::vector<real> b_2;           // d
    LayerNormParams ln_attn, ln_ffn;  // used only when layer_norm is on
};

struct PeerStack {
    std::vector<EncoderLayerParams> layers;
};

struct DualModel {
    EncoderConfig cfg;
    int vocab_rows = 0;
    SharedTables shared;
    std::vector<PeerStack> peers;  // T >= 2 for training; same shapes, different seeds

    int peer_count() const { return static_cast<int>(peers.size()); }
    int head_dim() const { return cfg.d / cfg.heads; }
};

struct ParamRef {
    std::string name;
    real* data;
    std::size_t size;
};

DualModel make_model(const EncoderConfig& cfg, int vocab_rows, int peer_count,
                     std::uint64_t seed, real init_std = 0.02);

// Same shapes, all zeros; serves as the gradient accumulator.
DualModel make_zero_like(const DualModel& model);

// Every trainable parameter in a fixed, documented order: shared tables first,
// then peer stacks layer by layer. Checkpoints, Adam state and finite
// difference sweeps all index this order.
std::vector<ParamRef> collect_params(DualModel& model);
std::size_t total_param_count(const DualModel& model);

struct LayerCache {
    std::vector<Mat> q, k, v;  // per head, (B*N) x d_r
    std::vector<Mat> attn;     // per head, (B*N) x N softmax rows
    Mat concat;                // (B*N) x d
    Mat a0;                    // attention sublayer output (post residual/LN)
    Mat a0_pre;                // pre-LN value (layer_norm only)
    std::vector<real> ln1_mean, ln1_rstd;
    Mat ffn_pre;  // (B*N) x d_h
    Mat ffn_act;  // GELU(ffn_pre)
    Mat h_out;    // layer output
    Mat h_pre;    // pre-LN value (layer_norm only)
    std::vector<real> ln2_mean, ln2_rstd;
};

struct ForwardCache {
    bool valid = false;
    int rows = 0, max_len = 0, coordinates = 0;
    Mat h0;
    std::vector<LayerCache> layers;
    Mat gathered;  // M x d rows of the final layer at mask_index
    Mat pred_pre;  // M x d
    Mat pred_act;  // GELU(pred_pre)
    Mat logits;    // M x (|E|+2)
    Mat probs;     // softmax rows
};

// H0[b,i] = U[token] + S[i], pads included.
void embed(const MaskedBatch& batch, const SharedTables& shared, Mat& h0);

// Multi-head scaled dot-product attention with residual; pad keys receive an
// additive -1e9 before the softmax.
void attention_sublayer(const Mat& h_prev, const EncoderLayerParams& params,
                        const MaskedBatch& batch, const EncoderConfig& cfg,
                        LayerCache& cache, Mat& a0);

// H_l = GELU(A0 W_1 + b_1) W_2 + b_2 + A0
void ffn_sublayer(const Mat& a0, const EncoderLayerParams& params,
                  const EncoderConfig& cfg, LayerCache& cache, Mat& h_out);

// Full pass for one peer; returns probs (one row per masked coordinate) and
// fills the cache required by backward().
const Mat& forward_peer(const DualModel& model, int peer_index,
                        const MaskedBatch& batch, ForwardCache& cache);

// Exact gradients for the peer stack and the shared tables, accumulated into
// `grads` (same shapes as the model). `dlogits` is dL/dz aligned with
// cache.probs. Requires the cache produced by forward_peer on this batch.
void backward(const DualModel& model, int peer_index, const MaskedBatch& batch,
              const ForwardCache& cache, const Mat& dlogits, DualModel& grads);

}  // namespace hail
