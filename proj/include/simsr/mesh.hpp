#pragma once

#include "simsr/types.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace simsr {

struct Edge {
  std::uint32_t a;
  std::uint32_t b;
  double length;
};

/// Compressed adjacency of an undirected edge-weighted graph.
struct Adjacency {
  std::vector<std::uint32_t> offsets;  // size V + 1
  std::vector<std::uint32_t> targets;
  std::vector<double> weights;

  std::size_t vertex_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

Adjacency build_adjacency(std::size_t vertex_count, std::span<const Edge> edges);
bool is_connected(const Adjacency& graph);

/// High-resolution triangle surface at rest. Immutable after construction.
class SurfaceMesh {
 public:
  /// Validates indices, degenerate triangles and connectivity; derives edges.
  SurfaceMesh(Points vertices, std::vector<Triangle> triangles);

  const Points& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Adjacency& adjacency() const { return adjacency_; }
  std::size_t vertex_count() const { return static_cast<std::size_t>(vertices_.rows()); }
  std::size_t triangle_count() const { return triangles_.size(); }

 private:
  Points vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> edges_;
  Adjacency adjacency_;
};

/// Coarse tetrahedral lattice at rest. Every tet has positive signed volume
/// dot(b - a, (c - a) x (d - a)) / 6.
class LatticeMesh {
 public:
  LatticeMesh(Points vertices, std::vector<Tetrahedron> tetrahedra);

  const Points& vertices() const { return vertices_; }
  const std::vector<Tetrahedron>& tetrahedra() const { return tetrahedra_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Adjacency& adjacency() const { return adjacency_; }
  std::size_t vertex_count() const { return static_cast<std::size_t>(vertices_.rows()); }

 private:
  Points vertices_;
  std::vector<Tetrahedron> tetrahedra_;
  std::vector<Edge> edges_;
  Adjacency adjacency_;
};

/// Box lattice of nx x ny x nz cells over [lo, hi], six positively
/// oriented tets per cell.
LatticeMesh box_lattice(int nx, int ny, int nz, const Vec3& lo, const Vec3& hi);

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Unit face normals following triangle winding. Throws degenerate_element
/// naming the first triangle whose area is at or below 1e-12.
Points face_normals(const Points& vertices, std::span<const Triangle> triangles);

struct EmbeddingWeights {
  std::size_t lattice_vertices = 0;
  std::vector<std::uint32_t> tet;
  std::vector<Tetrahedron> corners;
  std::vector<std::array<double, 4>> bary;

  std::size_t size() const { return tet.size(); }
};

inline constexpr double kEmbedTolerance = 1e-6;

std::array<double, 4> barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                                  const Vec3& d);

EmbeddingWeights embed_surface(const SurfaceMesh& surface, const LatticeMesh& lattice);
EmbeddingWeights embed_points(const Points& points, const LatticeMesh& lattice);

/// Barycentric interpolation of lattice displacements onto embedded vertices.
Points apply_embedding(const EmbeddingWeights& weights, const Points& lr_disp);

// OBJ subset: "v x y z" and "f i j k" (1-based); lattice files use "t i j k l".
SurfaceMesh load_surface(const std::filesystem::path& path);
LatticeMesh load_lattice(const std::filesystem::path& path);
void save_surface(const SurfaceMesh& mesh, const std::filesystem::path& path);
void save_lattice(const LatticeMesh& mesh, const std::filesystem::path& path);

struct AxisBox {
  Vec3 lo;
  Vec3 hi;
  Vec3 center() const { return 0.5 * (lo + hi); }
  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Vec3& p, double pad = 0.0) const;
};

AxisBox bounding_box(const Points& points);

}  // namespace simsr
