#pragma once

#include "simsr/mesh.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <vector>

namespace simsr {

/// Injective map from lattice vertex i to surface vertex hr_index[i].
struct AssignmentMap {
  std::vector<std::uint32_t> hr_index;
  double total_cost = 0.0;

  std::size_t size() const { return hr_index.size(); }
};

/// Minimum-cost injection of rows into columns (rows <= cols). Costs must be
/// finite and non-negative.
AssignmentMap linear_assignment(const Eigen::MatrixXd& costs);

/// Per surface vertex: k lattice neighbors sorted by (distance, index).
struct NeighborhoodTable {
  std::uint32_t k = 0;
  std::uint32_t rows = 0;
  std::vector<std::uint32_t> index;  // rows * k
  std::vector<double> distance;      // rows * k

  std::uint32_t neighbor(std::size_t row, std::size_t slot) const { return index[row * k + slot]; }
  double dist(std::size_t row, std::size_t slot) const { return distance[row * k + slot]; }
  void validate(std::size_t lattice_vertices) const;
};

/// Single-source shortest path lengths along weighted graph edges.
std::vector<double> dijkstra(const Adjacency& graph, std::uint32_t source);

/// Geodesic k nearest mapped lattice vertices for every surface vertex.
/// Ties are broken by lower lattice index.
NeighborhoodTable geodesic_knn(const SurfaceMesh& surface, const AssignmentMap& mapped, std::size_t k);

/// Euclidean k nearest lattice vertices for every surface vertex.
NeighborhoodTable euclidean_knn(const Points& queries, const Points& lattice_vertices, std::size_t k);

/// k nearest other lattice vertices along lattice edges; self excluded.
NeighborhoodTable lattice_geodesic_knn(const LatticeMesh& lattice, std::size_t k);

/// Rows: lattice vertex i; columns: surface vertex j. Entry is the surface
/// geodesic distance from the mapped position of i to j.
Eigen::MatrixXd mapped_geodesic_distances(const SurfaceMesh& surface, const AssignmentMap& mapped);

Eigen::MatrixXd euclidean_costs(const Points& rows, const Points& cols);

struct Precomputed {
  AssignmentMap assignment;
  NeighborhoodTable table;
};

Precomputed precompute(const SurfaceMesh& surface, const LatticeMesh& lattice, std::size_t k);

// Binary layout: magic "SSNT", k u32, M u32, then per row k x (u32 index, f32 distance).
void write_table(const NeighborhoodTable& table, const std::filesystem::path& path);
NeighborhoodTable read_table(const std::filesystem::path& path);

}  // namespace simsr
