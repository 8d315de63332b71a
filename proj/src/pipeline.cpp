#include "simsr/pipeline.hpp"

#include "simsr/error.hpp"
#include "simsr/parallel.hpp"

namespace simsr {

FrameSet predict_frames(const FrameSet& source, const std::vector<std::uint32_t>& ids, const Predictor& predict) {
  FrameSet out;
  out.lattice_vertices = source.lattice_vertices;
  out.surface_vertices = source.surface_vertices;
  out.frames.resize(ids.size());
  std::vector<const DisplacementFrame*> inputs;
  for (auto id : ids) {
    const auto* f = source.find(id);
    if (!f) throw Error(Errc::index_out_of_range, "frame " + std::to_string(id) + " not in the container");
    inputs.push_back(f);
  }
  parallel_for(ids.size(), [&](std::size_t i) {
    auto& dst = out.frames[i];
    dst.frame_id = inputs[i]->frame_id;
    dst.params = inputs[i]->params;
    dst.lr_disp = inputs[i]->lr_disp;
    dst.hr_disp = predict(inputs[i]->lr_disp);
    quantize_f32(dst);
  });
  for (const auto& f : out.frames) {
    if (static_cast<std::size_t>(f.hr_disp->rows()) != out.surface_vertices)
      throw Error(Errc::shape_mismatch, "predictor returned the wrong vertex count");
    if (!f.hr_disp->allFinite()) throw Error(Errc::non_finite, "prediction for frame " + std::to_string(f.frame_id) +
                                                                   " is not finite");
  }
  return out;
}

std::vector<FrameError> evaluate_frames(const FrameSet& pred, const FrameSet& truth, const std::string& method,
                                        std::vector<std::uint32_t> ids) {
  if (ids.empty())
    for (const auto& f : pred.frames) ids.push_back(f.frame_id);
  if (ids.empty()) throw Error(Errc::invalid_argument, "no frames to evaluate");
  std::vector<FrameError> rows(ids.size());
  std::vector<std::pair<const DisplacementFrame*, const DisplacementFrame*>> pairs;
  for (auto id : ids) {
    const auto* p = pred.find(id);
    const auto* t = truth.find(id);
    if (!p || !t) throw Error(Errc::index_out_of_range, "frame " + std::to_string(id) + " missing from a container");
    if (!p->hr_disp || !t->hr_disp)
      throw Error(Errc::invalid_argument, "frame " + std::to_string(id) + " has no surface displacement");
    pairs.emplace_back(p, t);
  }
  parallel_for(ids.size(), [&](std::size_t i) {
    rows[i] = {ids[i], method, per_vertex_error(*pairs[i].first->hr_disp, *pairs[i].second->hr_disp).mean};
  });
  return rows;
}

ErrorStats summarize(const std::vector<FrameError>& rows) {
  std::vector<double> means;
  for (const auto& r : rows) means.push_back(r.mean_error);
  return aggregate(means);
}

}  // namespace simsr
