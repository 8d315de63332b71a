#include "simsr/frames.hpp"

#include "simsr/binary_io.hpp"
#include "simsr/error.hpp"

#include <fstream>

namespace simsr {

const DisplacementFrame* FrameSet::find(std::uint32_t frame_id) const {
  for (const auto& f : frames)
    if (f.frame_id == frame_id) return &f;
  return nullptr;
}

void FrameSet::validate() const {
  for (const auto& f : frames) {
    if (f.lr_disp.rows() != lattice_vertices) {
      throw Error(Errc::shape_mismatch, "frame " + std::to_string(f.frame_id) + " has " +
                                            std::to_string(f.lr_disp.rows()) + " lattice rows, expected " +
                                            std::to_string(lattice_vertices));
    }
    if (f.hr_disp && f.hr_disp->rows() != surface_vertices) {
      throw Error(Errc::shape_mismatch, "frame " + std::to_string(f.frame_id) + " has " +
                                            std::to_string(f.hr_disp->rows()) + " surface rows, expected " +
                                            std::to_string(surface_vertices));
    }
    if (!f.lr_disp.allFinite() || (f.hr_disp && !f.hr_disp->allFinite())) {
      throw Error(Errc::non_finite, "frame " + std::to_string(f.frame_id) + " has non-finite values");
    }
  }
}

void write_frames(const FrameSet& set, const std::filesystem::path& path) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  binio::put_magic(out, "SSRF");
  binio::put<std::uint32_t>(out, kFrameFormatVersion);
  binio::put<std::uint32_t>(out, set.lattice_vertices);
  binio::put<std::uint32_t>(out, set.surface_vertices);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(set.frames.size()));
  for (const auto& f : set.frames) {
    binio::put<std::uint32_t>(out, f.frame_id);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.params.size()));
    for (double p : f.params) binio::put_f32(out, p);
    for (Eigen::Index i = 0; i < f.lr_disp.rows(); ++i)
      for (int c = 0; c < 3; ++c) binio::put_f32(out, f.lr_disp(i, c));
    binio::put<std::uint8_t>(out, f.hr_disp ? 1 : 0);
    if (f.hr_disp) {
      for (Eigen::Index i = 0; i < f.hr_disp->rows(); ++i)
        for (int c = 0; c < 3; ++c) binio::put_f32(out, (*f.hr_disp)(i, c));
    }
  }
  if (!out) throw Error(Errc::io_failure, "write failed: " + path.string());
}

FrameSet read_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  binio::expect_magic(in, "SSRF");
  auto version = binio::get<std::uint32_t>(in);
  if (version != kFrameFormatVersion) {
    throw Error(Errc::parse_failure, "unsupported frame container version " + std::to_string(version));
  }
  FrameSet set;
  set.lattice_vertices = binio::get<std::uint32_t>(in);
  set.surface_vertices = binio::get<std::uint32_t>(in);
  auto count = binio::get<std::uint32_t>(in);
  set.frames.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    DisplacementFrame f;
    f.frame_id = binio::get<std::uint32_t>(in);
    auto np = binio::get<std::uint32_t>(in);
    f.params.resize(np);
    for (auto& p : f.params) p = binio::get_f32(in);
    f.lr_disp.resize(set.lattice_vertices, 3);
    for (Eigen::Index i = 0; i < f.lr_disp.rows(); ++i)
      for (int c = 0; c < 3; ++c) f.lr_disp(i, c) = binio::get_f32(in);
    auto flag = binio::get<std::uint8_t>(in);
    if (flag > 1) throw Error(Errc::parse_failure, "bad hr flag in frame " + std::to_string(f.frame_id));
    if (flag == 1) {
      Points hr(set.surface_vertices, 3);
      for (Eigen::Index i = 0; i < hr.rows(); ++i)
        for (int c = 0; c < 3; ++c) hr(i, c) = binio::get_f32(in);
      f.hr_disp = std::move(hr);
    }
    set.frames.push_back(std::move(f));
  }
  set.validate();
  return set;
}

void quantize_f32(DisplacementFrame& frame) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& p : frame.params) p = q(p);
  frame.lr_disp = frame.lr_disp.unaryExpr(q);
  if (frame.hr_disp) *frame.hr_disp = frame.hr_disp->unaryExpr(q);
}

}  // namespace simsr
