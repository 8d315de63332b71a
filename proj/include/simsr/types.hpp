#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace simsr {

using Vec3 = Eigen::Vector3d;

/// Row-major K x 3 array: vertex positions or per-vertex displacements.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Triangle = std::array<std::uint32_t, 3>;
using Tetrahedron = std::array<std::uint32_t, 4>;

}  // namespace simsr
