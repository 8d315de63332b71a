#pragma once

#include "simsr/config.hpp"
#include "simsr/frames.hpp"
#include "simsr/mesh.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace simsr {

/// Procedural paired LR/HR displacement generator. Lengths are in mm.
struct GenConfig {
  // Curved surface patch: hr_nx x hr_ny vertices over a square of side
  // patch_size, sagging as a sphere cap of radius curvature_radius.
  int hr_nx = 48;
  int hr_ny = 48;
  double patch_size = 100.0;
  double curvature_radius = 150.0;
  // Cut of this length (mm) along y = 0 centered at x = 0; 0 disables.
  double slit_length = 50.0;

  // Box lattice of cells, padded around the surface bounding box.
  int lattice_nx = 7;
  int lattice_ny = 7;
  int lattice_nz = 2;
  double lattice_padding = 2.0;

  // Bulk Gaussian bumps, one per activation channel. Centers are fractions
  // of the patch in [-1, 1]; widths in mm.
  int channels = 5;
  std::vector<double> bump_center_x = {-0.45, 0.4, -0.3, 0.35, 0.0};
  std::vector<double> bump_center_y = {-0.35, -0.4, 0.45, 0.35, 0.0};
  std::vector<double> bump_width = {28.0, 24.0, 26.0, 30.0, 22.0};
  double bump_amplitude = 6.0;
  // Channel whose bump pushes the two sides of y = 0 apart; -1 disables.
  int opening_channel = 4;

  // Wrinkle: sinusoid along a fixed direction under a Gaussian envelope
  // centered at fractions of the patch, gated by the product of the
  // activations listed in wrinkle_gate.
  double wrinkle_wavelength = 8.0;
  double wrinkle_amplitude = 3.0;
  double wrinkle_width = 25.0;
  double wrinkle_center_x = 0.1;
  double wrinkle_center_y = -0.55;
  std::vector<int> wrinkle_gate = {0, 3};

  // Coarse-only bias b(x) * |p|.
  double bias_amplitude = 2.0;

  int families = 4;
  int frames_per_family = 60;
  std::vector<int> train_families = {0, 1};
  std::vector<int> test_families = {2, 3};
  double walk_step = 0.35;
  double walk_smoothing = 0.8;

  std::uint64_t seed = 7;

  void validate() const;
  static GenConfig from(const KeyValues& kv);
  KeyValues to_key_values() const;
};

struct Dataset {
  SurfaceMesh surface;
  LatticeMesh lattice;
  FrameSet frames;
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> test_ids;
};

/// Rest meshes only; throws outside_lattice if the lattice misses a vertex.
std::pair<SurfaceMesh, LatticeMesh> generate_meshes(const GenConfig& config);

/// Displacements for one activation vector on the given rest positions.
Points bulk_field(const GenConfig& config, const Points& rest, const std::vector<double>& p);
Points wrinkle_field(const GenConfig& config, const Points& rest, const std::vector<double>& p);
Points bias_field(const GenConfig& config, const Points& rest, const std::vector<double>& p);

/// Smooth activation trajectory in [0, 1]^channels for one family.
std::vector<std::vector<double>> activation_trajectory(const GenConfig& config, int family);

/// Full dataset; frame values are rounded through f32 as stored on disk.
Dataset generate(const GenConfig& config);

struct Manifest {
  std::filesystem::path surface;
  std::filesystem::path lattice;
  std::filesystem::path frames;
  std::filesystem::path table;  // empty until precompute runs
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> test_ids;
  std::string config_text;
  int format_version = 1;
};

/// Writes surface.obj, lattice.obj, frames.ssrf and manifest.json into dir.
Manifest write_dataset(const Dataset& data, const GenConfig& config, const std::filesystem::path& dir);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Loads the dataset a manifest points to; relative paths resolve against
/// the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Adds a temporally filtered oscillation (rigid plus a low spatial mode) to
/// LR displacements of time-ordered frames. HR targets are untouched.
std::vector<DisplacementFrame> perturb_dynamics(const std::vector<DisplacementFrame>& frames,
                                                const LatticeMesh& lattice, double amplitude,
                                                double period = 20.0);

/// Adds magnitude * exp(-|x - site|^2 / radius^2) * direction to LR displacements.
DisplacementFrame perturb_force(const DisplacementFrame& frame, const LatticeMesh& lattice, const Vec3& site,
                                const Vec3& direction, double magnitude, double radius = 15.0);

}  // namespace simsr
