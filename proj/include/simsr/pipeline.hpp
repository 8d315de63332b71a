#pragma once

#include "simsr/eval.hpp"
#include "simsr/frames.hpp"

#include <functional>
#include <string>
#include <vector>

namespace simsr {

using Predictor = std::function<Points(const Points& lr_disp)>;

/// Predicted surface displacements for the listed frames; LR inputs and
/// parameters are copied from the source. Frames run in parallel, so the
/// predictor must be safe to call concurrently.
FrameSet predict_frames(const FrameSet& source, const std::vector<std::uint32_t>& ids, const Predictor& predict);

/// Per-frame mean vertex error of pred against the targets in truth, in
/// the order of ids (all frames of pred when ids is empty).
std::vector<FrameError> evaluate_frames(const FrameSet& pred, const FrameSet& truth, const std::string& method,
                                        std::vector<std::uint32_t> ids = {});

ErrorStats summarize(const std::vector<FrameError>& rows);

}  // namespace simsr
