#include "simsr/geodesy.hpp"

#include "simsr/binary_io.hpp"
#include "simsr/error.hpp"
#include "simsr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>

namespace simsr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sorted (distance, index) list of fixed capacity.
class KBest {
 public:
  KBest(double* dist, std::uint32_t* idx, std::size_t k) : dist_(dist), idx_(idx), k_(k) {}

  void offer(double d, std::uint32_t i) {
    if (size_ == k_ && !less(d, i, dist_[k_ - 1], idx_[k_ - 1])) return;
    std::size_t pos = size_ < k_ ? size_++ : k_ - 1;
    while (pos > 0 && less(d, i, dist_[pos - 1], idx_[pos - 1])) {
      dist_[pos] = dist_[pos - 1];
      idx_[pos] = idx_[pos - 1];
      --pos;
    }
    dist_[pos] = d;
    idx_[pos] = i;
  }

  std::size_t size() const { return size_; }

 private:
  static bool less(double d1, std::uint32_t i1, double d2, std::uint32_t i2) {
    return d1 < d2 || (d1 == d2 && i1 < i2);
  }
  double* dist_;
  std::uint32_t* idx_;
  std::size_t k_;
  std::size_t size_ = 0;
};

NeighborhoodTable empty_table(std::size_t rows, std::size_t k) {
  NeighborhoodTable t;
  t.k = static_cast<std::uint32_t>(k);
  t.rows = static_cast<std::uint32_t>(rows);
  t.index.assign(rows * k, 0);
  t.distance.assign(rows * k, kInf);
  return t;
}

}  // namespace

AssignmentMap linear_assignment(const Eigen::MatrixXd& costs) {
  const auto n = static_cast<std::size_t>(costs.rows());
  const auto m = static_cast<std::size_t>(costs.cols());
  if (n > m) {
    throw Error(Errc::invalid_argument, "assignment needs rows <= cols, got " + std::to_string(n) + " x " +
                                            std::to_string(m));
  }
  for (Eigen::Index i = 0; i < costs.rows(); ++i)
    for (Eigen::Index j = 0; j < costs.cols(); ++j) {
      double c = costs(i, j);
      if (!std::isfinite(c)) throw Error(Errc::non_finite, "non-finite assignment cost");
      if (c < 0.0) throw Error(Errc::invalid_argument, "negative assignment cost");
    }

  // Shortest augmenting path with row/column potentials, 1-based with a
  // virtual column 0 holding the row being inserted.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = costs(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentMap out;
  out.hr_index.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (owner[j] != 0) out.hr_index[owner[j] - 1] = static_cast<std::uint32_t>(j - 1);
  for (std::size_t i = 0; i < n; ++i) out.total_cost += costs(static_cast<Eigen::Index>(i), out.hr_index[i]);
  return out;
}

void NeighborhoodTable::validate(std::size_t lattice_vertices) const {
  if (index.size() != static_cast<std::size_t>(rows) * k || distance.size() != index.size()) {
    throw Error(Errc::shape_mismatch, "neighborhood table storage does not match rows * k");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < k; ++s) {
      if (neighbor(r, s) >= lattice_vertices) {
        throw Error(Errc::index_out_of_range, "neighborhood row " + std::to_string(r) + " references lattice vertex " +
                                                  std::to_string(neighbor(r, s)));
      }
      if (!(dist(r, s) >= 0.0) || (s > 0 && dist(r, s) < dist(r, s - 1))) {
        throw Error(Errc::invalid_argument, "neighborhood row " + std::to_string(r) + " is not sorted");
      }
    }
  }
}

std::vector<double> dijkstra(const Adjacency& graph, std::uint32_t source) {
  std::vector<double> dist(graph.vertex_count(), kInf);
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    for (auto e = graph.offsets[v]; e < graph.offsets[v + 1]; ++e) {
      double nd = d + graph.weights[e];
      auto w = graph.targets[e];
      if (nd < dist[w]) {
        dist[w] = nd;
        heap.emplace(nd, w);
      }
    }
  }
  return dist;
}

NeighborhoodTable geodesic_knn(const SurfaceMesh& surface, const AssignmentMap& mapped, std::size_t k) {
  const std::size_t n = mapped.size();
  const std::size_t m = surface.vertex_count();
  if (k == 0 || k > n) {
    throw Error(Errc::invalid_argument, "k = " + std::to_string(k) + " must lie in 1.." + std::to_string(n));
  }
  if (!is_connected(surface.adjacency())) throw Error(Errc::disconnected_surface, "surface is not connected");
  for (auto j : mapped.hr_index)
    if (j >= m) throw Error(Errc::index_out_of_range, "assignment references surface vertex " + std::to_string(j));

  auto table = empty_table(m, k);
  std::vector<KBest> best;
  best.reserve(m);
  for (std::size_t j = 0; j < m; ++j) best.emplace_back(&table.distance[j * k], &table.index[j * k], k);

  // Sources run in parallel chunks; merging in source order keeps ties stable.
  const std::size_t chunk = std::max<std::size_t>(1, thread_count()) * 4;
  std::vector<std::vector<double>> dists(chunk);
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t count = std::min(chunk, n - begin);
    parallel_for(count, [&](std::size_t c) {
      dists[c] = dijkstra(surface.adjacency(), mapped.hr_index[begin + c]);
    });
    for (std::size_t c = 0; c < count; ++c) {
      const auto source = static_cast<std::uint32_t>(begin + c);
      for (std::size_t j = 0; j < m; ++j) best[j].offer(dists[c][j], source);
    }
  }
  return table;
}

NeighborhoodTable euclidean_knn(const Points& queries, const Points& lattice_vertices, std::size_t k) {
  const auto n = static_cast<std::size_t>(lattice_vertices.rows());
  const auto m = static_cast<std::size_t>(queries.rows());
  if (k == 0 || k > n) {
    throw Error(Errc::invalid_argument, "k = " + std::to_string(k) + " must lie in 1.." + std::to_string(n));
  }
  auto table = empty_table(m, k);
  parallel_for(m, [&](std::size_t j) {
    KBest best(&table.distance[j * k], &table.index[j * k], k);
    for (std::size_t i = 0; i < n; ++i) {
      double d = (queries.row(static_cast<Eigen::Index>(j)) - lattice_vertices.row(static_cast<Eigen::Index>(i))).norm();
      best.offer(d, static_cast<std::uint32_t>(i));
    }
  });
  return table;
}

NeighborhoodTable lattice_geodesic_knn(const LatticeMesh& lattice, std::size_t k) {
  const std::size_t n = lattice.vertex_count();
  if (k == 0 || k + 1 > n) {
    throw Error(Errc::invalid_argument, "k = " + std::to_string(k) + " must lie in 1.." + std::to_string(n - 1));
  }
  auto table = empty_table(n, k);
  parallel_for(n, [&](std::size_t i) {
    auto dist = dijkstra(lattice.adjacency(), static_cast<std::uint32_t>(i));
    KBest best(&table.distance[i * k], &table.index[i * k], k);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) best.offer(dist[j], static_cast<std::uint32_t>(j));
  });
  for (double d : table.distance)
    if (!std::isfinite(d)) throw Error(Errc::disconnected_surface, "lattice edge graph is not connected");
  return table;
}

Eigen::MatrixXd mapped_geodesic_distances(const SurfaceMesh& surface, const AssignmentMap& mapped) {
  const auto n = static_cast<Eigen::Index>(mapped.size());
  const auto m = static_cast<Eigen::Index>(surface.vertex_count());
  Eigen::MatrixXd out(n, m);
  parallel_for(mapped.size(), [&](std::size_t i) {
    auto dist = dijkstra(surface.adjacency(), mapped.hr_index[i]);
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(dist.data(), m);
  });
  return out;
}

Eigen::MatrixXd euclidean_costs(const Points& rows, const Points& cols) {
  Eigen::MatrixXd c(rows.rows(), cols.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < cols.rows(); ++j) c(i, j) = (rows.row(i) - cols.row(j)).norm();
  return c;
}

Precomputed precompute(const SurfaceMesh& surface, const LatticeMesh& lattice, std::size_t k) {
  if (lattice.vertex_count() > surface.vertex_count()) {
    throw Error(Errc::invalid_argument, "lattice has more vertices than the surface");
  }
  Precomputed out;
  out.assignment = linear_assignment(euclidean_costs(lattice.vertices(), surface.vertices()));
  out.table = geodesic_knn(surface, out.assignment, k);
  return out;
}

void write_table(const NeighborhoodTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  binio::put_magic(out, "SSNT");
  binio::put<std::uint32_t>(out, table.k);
  binio::put<std::uint32_t>(out, table.rows);
  for (std::size_t e = 0; e < table.index.size(); ++e) {
    binio::put<std::uint32_t>(out, table.index[e]);
    binio::put_f32(out, table.distance[e]);
  }
  if (!out) throw Error(Errc::io_failure, "write failed: " + path.string());
}

NeighborhoodTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  binio::expect_magic(in, "SSNT");
  NeighborhoodTable t;
  t.k = binio::get<std::uint32_t>(in);
  t.rows = binio::get<std::uint32_t>(in);
  const std::size_t count = static_cast<std::size_t>(t.k) * t.rows;
  t.index.resize(count);
  t.distance.resize(count);
  for (std::size_t e = 0; e < count; ++e) {
    t.index[e] = binio::get<std::uint32_t>(in);
    t.distance[e] = binio::get_f32(in);
  }
  return t;
}

}  // namespace simsr
