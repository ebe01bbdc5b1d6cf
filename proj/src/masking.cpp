#include "hail/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hail/errors.hpp"

namespace hail {

std::vector<MaskedSample> mask_for_training(const InteractionSequence& seq,
                                            double mask_ratio, int duplication,
                                            int mask_id, Rng& rng) {
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw ContractError("mask_ratio must lie in (0, 1)");
    if (duplication < 1) throw ContractError("duplication must be >= 1");

    const int len = static_cast<int>(seq.elements.size());
    std::vector<MaskedSample> out;
    if (len < 2) return out;  // skipped; caller tracks the warning count

    const int n_masks = std::max(1, static_cast<int>(std::lround(mask_ratio * len)));

    std::vector<int> indices(static_cast<std::size_t>(len));
    for (int copy = 0; copy < duplication; ++copy) {
        std::iota(indices.begin(), indices.end(), 0);
        // partial Fisher-Yates: first n_masks entries are a uniform draw
        // without replacement
        for (int i = 0; i < n_masks; ++i) {
            const int j = i + static_cast<int>(rng.uniform_int(
                                  static_cast<std::uint64_t>(len - i)));
            std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
        }
        MaskedSample sample;
        sample.tokens = seq.elements;
        sample.masked_positions.assign(indices.begin(), indices.begin() + n_masks);
        std::sort(sample.masked_positions.begin(), sample.masked_positions.end());
        for (int pos : sample.masked_positions) {
            sample.labels.push_back(sample.tokens[static_cast<std::size_t>(pos)]);
            sample.tokens[static_cast<std::size_t>(pos)] = mask_id;
        }
        out.push_back(std::move(sample));
    }

    // last-masked copy specializes the model for next-element prediction
    MaskedSample last;
    last.tokens = seq.elements;
    last.masked_positions.push_back(len - 1);
    last.labels.push_back(last.tokens[static_cast<std::size_t>(len - 1)]);
    last.tokens[static_cast<std::size_t>(len - 1)] = mask_id;
    out.push_back(std::move(last));
    return out;
}

std::vector<MaskedBatch> make_batches(std::vector<MaskedSample> samples,
                                      int batch_size, int max_len, int pad_id,
                                      Rng& rng) {
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    for (const auto& s : samples)
        if (static_cast<int>(s.tokens.size()) > max_len)
            throw ContractError("sample length " + std::to_string(s.tokens.size()) +
                                " exceeds max_len " + std::to_string(max_len));

    rng.shuffle(samples);

    std::vector<MaskedBatch> batches;
    for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
        const std::size_t end = std::min(samples.size(), begin + batch_size);
        MaskedBatch batch;
        batch.rows = static_cast<int>(end - begin);
        batch.max_len = max_len;
        batch.tokens.assign(static_cast<std::size_t>(batch.rows) * max_len, pad_id);
        batch.positions.resize(static_cast<std::size_t>(batch.rows) * max_len);
        batch.lengths.resize(static_cast<std::size_t>(batch.rows));
        for (int r = 0; r < batch.rows; ++r) {
            const MaskedSample& s = samples[begin + static_cast<std::size_t>(r)];
            const int len = static_cast<int>(s.tokens.size());
            batch.lengths[static_cast<std::size_t>(r)] = len;
            for (int c = 0; c < len; ++c)
                batch.tokens[static_cast<std::size_t>(r) * max_len + c] = s.tokens[static_cast<std::size_t>(c)];
            for (int c = 0; c < max_len; ++c)
                batch.positions[static_cast<std::size_t>(r) * max_len + c] = c;
            for (std::size_t m = 0; m < s.masked_positions.size(); ++m) {
                batch.mask_index.emplace_back(r, s.masked_positions[m]);
                batch.labels.push_back(s.labels[m]);
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace hail
