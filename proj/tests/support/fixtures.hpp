#pragma once

#include "simsr/mesh.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace simsr::testing {

/// Subdivided icosahedron projected to a sphere, vertices jittered so that
/// shortest paths have no exact ties.
SurfaceMesh jittered_icosphere(int subdivisions, double radius, std::uint64_t seed);

/// Regular grid surface over [0, size]^2 at height z.
SurfaceMesh grid_surface(int nx, int ny, double size, double z = 0.0);

using simsr::box_lattice;

/// Single positively oriented tetrahedron.
LatticeMesh unit_tet();

/// Fresh scratch directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace simsr::testing
