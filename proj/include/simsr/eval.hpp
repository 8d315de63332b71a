#pragma once

#include "simsr/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace simsr {

struct VertexErrors {
  Eigen::VectorXd errors;  // per vertex Euclidean distance
  double mean = 0.0;
  double max = 0.0;
};

VertexErrors per_vertex_error(const Points& pred, const Points& target);

/// Statistics over per-frame mean errors. std is the population std.
struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::size_t frames = 0;
};

ErrorStats aggregate(const std::vector<double>& frame_means);

struct FrameError {
  std::uint32_t frame_id = 0;
  std::string method;
  double mean_error = 0.0;
};

/// Header "frame_id,method,mean_error"; values with 17 significant digits.
void write_error_csv(const std::vector<FrameError>& rows, const std::filesystem::path& path);
std::vector<FrameError> read_error_csv(const std::filesystem::path& path);

using Rgb = std::array<std::uint8_t, 3>;

/// Linear blue-to-red map of value / max; max <= 0 maps to blue.
Rgb heat_color(double value, double max);

/// ASCII PLY with float x y z, uchar red green blue and triangle faces.
void export_heatmap(const SurfaceMesh& surface, const Eigen::VectorXd& values, const std::filesystem::path& path);

struct ColoredMesh {
  Points vertices;
  std::vector<Rgb> colors;
  std::vector<Triangle> triangles;
};

ColoredMesh read_heatmap(const std::filesystem::path& path);

struct BenchReport {
  std::size_t warmups = 0;
  std::size_t runs = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
  double fps = 0.0;
};

/// Times run() serially: warmups untimed, then runs timed calls.
BenchReport bench(const std::function<void()>& run, std::size_t runs = 50, std::size_t warmups = 5);

}  // namespace simsr
