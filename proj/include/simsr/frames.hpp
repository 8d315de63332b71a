#pragma once

#include "simsr/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace simsr {

/// One paired sample: coarse lattice displacements, optional surface targets.
struct DisplacementFrame {
  std::uint32_t frame_id = 0;
  std::vector<double> params;
  Points lr_disp;
  std::optional<Points> hr_disp;
};

/// In-memory image of an SSRF container.
///
/// Layout (little-endian): magic "SSRF", version u32, N u32, M u32, count u32,
/// then per frame: frame_id u32, param count u32, params f32[], lr_disp
/// f32[N*3], hr_flag u8, hr_disp f32[M*3] when hr_flag == 1.
struct FrameSet {
  std::uint32_t lattice_vertices = 0;
  std::uint32_t surface_vertices = 0;
  std::vector<DisplacementFrame> frames;

  const DisplacementFrame* find(std::uint32_t frame_id) const;
  void validate() const;
};

inline constexpr std::uint32_t kFrameFormatVersion = 1;

void write_frames(const FrameSet& set, const std::filesystem::path& path);
FrameSet read_frames(const std::filesystem::path& path);

/// Rounds every value through f32, matching what the container stores.
void quantize_f32(DisplacementFrame& frame);

}  // namespace simsr
