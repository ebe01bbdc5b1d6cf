#pragma once

#include <utility>
#include <vector>

#include "hail/corpus.hpp"
#include "hail/rng.hpp"

namespace hail {

struct MaskedSample {
    std::vector<int> tokens;            // element ids, masked positions hold mask_id
    std::vector<int> masked_positions;  // ascending indices into tokens
    std::vector<int> labels;            // original elements, aligned with positions
};

struct MaskedBatch {
    int rows = 0;
    int max_len = 0;
    std::vector<int> tokens;     // rows x max_len, right-padded with pad_id
    std::vector<int> positions;  // rows x max_len position indices
    std::vector<int> lengths;    // true length per row
    std::vector<std::pair<int, int>> mask_index;  // (row, column)
    std::vector<int> labels;                      // aligned with mask_index

    int token(int r, int c) const { return tokens[static_cast<std::size_t>(r) * max_len + c]; }
    bool is_pad(int r, int c) const { return c >= lengths[static_cast<std::size_t>(r)]; }
    int coordinate_count() const { return static_cast<int>(mask_index.size()); }
};

// Emits `duplication` randomly masked copies (max(1, round(mask_ratio*len))
// positions each, without replacement) plus one copy with only the final
// element masked. Sequences shorter than 2 yield nothing; the caller counts
// skips for its warning.
std::vector<MaskedSample> mask_for_training(const InteractionSequence& seq,
                                            double mask_ratio, int duplication,
                                            int mask_id, Rng& rng);

// Shuffles, groups into batches of at most batch_size, pads to max_len.
std::vector<MaskedBatch> make_batches(std::vector<MaskedSample> samples,
                                      int batch_size, int max_len, int pad_id,
                                      Rng& rng);

}  // namespace hail
