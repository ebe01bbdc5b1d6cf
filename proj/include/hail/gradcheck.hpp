#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hail/config.hpp"
#include "hail/encoder.hpp"
#include "hail/losses.hpp"
#include "hail/masking.hpp"

namespace hail {

struct GradCheckClassResult {
    std::string param_class;
    real max_rel_error = 0.0;
    std::size_t checked = 0;
};

struct GradCheckReport {
    bool passed = false;
    // finite-difference sweep of the full objective, per parameter class
    std::vector<GradCheckClassResult> classes;
    real fd_tolerance = 1e-4;
    // closed-form gradient identity of the positive distillation term
    int identity_instances = 0;
    real max_identity_error = 0.0;   // backprop vs (1 - p_peer)(p_self - 1)
    real max_identity_fd_error = 0.0;  // closed form vs central differences
};

// Value of the summed training objective from forward passes only; the
// independent side of the finite-difference check. Distillation weights are
// detached in the gradient graph, so the differenced objective holds them
// (and the truncation flags) frozen at the base point when those arguments
// are given.
real training_objective(DualModel& model, const MaskedBatch& batch,
                        const TrainConfig& cfg,
                        const std::vector<Mat>* frozen_weights = nullptr,
                        const TruncationFlags* frozen_flags = nullptr);

// Central finite differences (eps 1e-4) on a d=4, L=1, R=2, N=3, |E|=8 model
// over every parameter class, plus 200 random single-coordinate instances of
// the analytic positive-term gradient. Prints one line per parameter class
// when a stream is given.
GradCheckReport run_gradcheck(std::ostream* out = nullptr,
                              int identity_instances = 200);

}  // namespace hail
