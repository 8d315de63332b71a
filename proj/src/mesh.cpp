#include "simsr/mesh.hpp"

#include "simsr/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

namespace simsr {
namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::vector<Edge> unique_edges(const Points& vertices, std::vector<std::uint64_t> keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<Edge> edges;
  edges.reserve(keys.size());
  for (auto key : keys) {
    auto a = static_cast<std::uint32_t>(key >> 32);
    auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
    double length = (vertices.row(a) - vertices.row(b)).norm();
    if (!(length > 0.0)) {
      throw Error(Errc::degenerate_element, "zero-length edge between vertices " + std::to_string(a) +
                                                " and " + std::to_string(b));
    }
    edges.push_back({a, b, length});
  }
  return edges;
}

void check_finite(const Points& p, const char* what) {
  if (!p.allFinite()) throw Error(Errc::non_finite, std::string(what) + " contains non-finite values");
}

}  // namespace

Adjacency build_adjacency(std::size_t vertex_count, std::span<const Edge> edges) {
  Adjacency adj;
  adj.offsets.assign(vertex_count + 1, 0);
  for (const auto& e : edges) {
    ++adj.offsets[e.a + 1];
    ++adj.offsets[e.b + 1];
  }
  for (std::size_t v = 0; v < vertex_count; ++v) adj.offsets[v + 1] += adj.offsets[v];
  adj.targets.resize(adj.offsets.back());
  adj.weights.resize(adj.offsets.back());
  std::vector<std::uint32_t> fill(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& e : edges) {
    adj.targets[fill[e.a]] = e.b;
    adj.weights[fill[e.a]++] = e.length;
    adj.targets[fill[e.b]] = e.a;
    adj.weights[fill[e.b]++] = e.length;
  }
  return adj;
}

bool is_connected(const Adjacency& graph) {
  const std::size_t n = graph.vertex_count();
  if (n == 0) return true;
  std::vector<char> seen(n, 0);
  std::vector<std::uint32_t> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (auto k = graph.offsets[v]; k < graph.offsets[v + 1]; ++k) {
      auto w = graph.targets[k];
      if (!seen[w]) {
        seen[w] = 1;
        ++visited;
        stack.push_back(w);
      }
    }
  }
  return visited == n;
}

SurfaceMesh::SurfaceMesh(Points vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  check_finite(vertices_, "surface vertices");
  const auto n = static_cast<std::uint32_t>(vertices_.rows());
  std::vector<std::uint64_t> keys;
  keys.reserve(triangles_.size() * 3);
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    for (auto idx : tri) {
      if (idx >= n) {
        throw Error(Errc::index_out_of_range, "triangle " + std::to_string(t) + " references vertex " +
                                                  std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw Error(Errc::degenerate_element, "triangle " + std::to_string(t) + " repeats a vertex index");
    }
    keys.push_back(edge_key(tri[0], tri[1]));
    keys.push_back(edge_key(tri[1], tri[2]));
    keys.push_back(edge_key(tri[2], tri[0]));
  }
  edges_ = unique_edges(vertices_, std::move(keys));
  adjacency_ = build_adjacency(n, edges_);
  if (!is_connected(adjacency_)) {
    throw Error(Errc::disconnected_surface, "surface edge graph is not connected");
  }
}

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

LatticeMesh::LatticeMesh(Points vertices, std::vector<Tetrahedron> tetrahedra)
    : vertices_(std::move(vertices)), tetrahedra_(std::move(tetrahedra)) {
  check_finite(vertices_, "lattice vertices");
  const auto n = static_cast<std::uint32_t>(vertices_.rows());
  std::vector<std::uint64_t> keys;
  keys.reserve(tetrahedra_.size() * 6);
  for (std::size_t t = 0; t < tetrahedra_.size(); ++t) {
    const auto& tet = tetrahedra_[t];
    for (auto idx : tet) {
      if (idx >= n) {
        throw Error(Errc::index_out_of_range, "tetrahedron " + std::to_string(t) + " references vertex " +
                                                  std::to_string(idx) + " of " + std::to_string(n));
      }
    }
    double vol = signed_volume(vertices_.row(tet[0]), vertices_.row(tet[1]), vertices_.row(tet[2]),
                               vertices_.row(tet[3]));
    if (!(vol > 0.0)) {
      throw Error(Errc::degenerate_element,
                  "tetrahedron " + std::to_string(t) + " has non-positive volume " + std::to_string(vol));
    }
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) keys.push_back(edge_key(tet[i], tet[j]));
  }
  edges_ = unique_edges(vertices_, std::move(keys));
  adjacency_ = build_adjacency(n, edges_);
}

Points face_normals(const Points& vertices, std::span<const Triangle> triangles) {
  Points normals(static_cast<Eigen::Index>(triangles.size()), 3);
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    Vec3 p0 = vertices.row(tri[0]);
    Vec3 n = (Vec3(vertices.row(tri[1])) - p0).cross(Vec3(vertices.row(tri[2])) - p0);
    double twice_area = n.norm();
    if (!(0.5 * twice_area > 1e-12)) {
      throw Error(Errc::degenerate_element, "degenerate triangle " + std::to_string(t));
    }
    normals.row(static_cast<Eigen::Index>(t)) = n / twice_area;
  }
  return normals;
}

std::array<double, 4> barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                                  const Vec3& d) {
  Eigen::Matrix3d t;
  t.col(0) = b - a;
  t.col(1) = c - a;
  t.col(2) = d - a;
  Vec3 l = t.partialPivLu().solve(p - a);
  return {1.0 - l.sum(), l[0], l[1], l[2]};
}

bool AxisBox::contains(const Vec3& p, double pad) const {
  return (p.array() >= lo.array() - pad).all() && (p.array() <= hi.array() + pad).all();
}

AxisBox bounding_box(const Points& points) {
  if (points.rows() == 0) return {Vec3::Zero(), Vec3::Zero()};
  return {points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

EmbeddingWeights embed_points(const Points& points, const LatticeMesh& lattice) {
  const auto& lv = lattice.vertices();
  const auto& tets = lattice.tetrahedra();
  std::vector<AxisBox> boxes;
  boxes.reserve(tets.size());
  for (const auto& tet : tets) {
    AxisBox box{lv.row(tet[0]), lv.row(tet[0])};
    for (int k = 1; k < 4; ++k) {
      box.lo = box.lo.cwiseMin(Vec3(lv.row(tet[k])));
      box.hi = box.hi.cwiseMax(Vec3(lv.row(tet[k])));
    }
    boxes.push_back(box);
  }

  EmbeddingWeights out;
  out.lattice_vertices = lattice.vertex_count();
  out.corners.resize(static_cast<std::size_t>(points.rows()));
  out.tet.resize(static_cast<std::size_t>(points.rows()));
  out.bary.resize(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    const Vec3 p = points.row(j);
    double best_violation = std::numeric_limits<double>::infinity();
    std::size_t best = tets.size();
    std::array<double, 4> best_bary{};
    for (std::size_t t = 0; t < tets.size(); ++t) {
      if (!boxes[t].contains(p, 1e-6 * (1.0 + boxes[t].diagonal()))) continue;
      const auto& tet = tets[t];
      auto w = barycentric(p, lv.row(tet[0]), lv.row(tet[1]), lv.row(tet[2]), lv.row(tet[3]));
      double violation = std::max(0.0, -*std::min_element(w.begin(), w.end()));
      // Strictly smaller violation wins; near-equal keeps the lower index.
      if (violation < best_violation - 1e-12) {
        best_violation = violation;
        best = t;
        best_bary = w;
      }
    }
    if (best == tets.size() || best_violation > kEmbedTolerance) {
      throw Error(Errc::outside_lattice, "vertex " + std::to_string(j) + " lies outside all tetrahedra");
    }
    out.tet[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(best);
    out.bary[static_cast<std::size_t>(j)] = best_bary;
    out.corners[static_cast<std::size_t>(j)] = tets[best];
  }
  return out;
}

EmbeddingWeights embed_surface(const SurfaceMesh& surface, const LatticeMesh& lattice) {
  return embed_points(surface.vertices(), lattice);
}

Points apply_embedding(const EmbeddingWeights& weights, const Points& lr_disp) {
  if (static_cast<std::size_t>(lr_disp.rows()) != weights.lattice_vertices) {
    throw Error(Errc::shape_mismatch, "lattice displacement has " + std::to_string(lr_disp.rows()) +
                                          " rows, lattice has " + std::to_string(weights.lattice_vertices));
  }
  Points out(static_cast<Eigen::Index>(weights.size()), 3);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const auto& tet = weights.corners[j];
    const auto& w = weights.bary[j];
    out.row(static_cast<Eigen::Index>(j)) = w[0] * lr_disp.row(tet[0]) + w[1] * lr_disp.row(tet[1]) +
                                            w[2] * lr_disp.row(tet[2]) + w[3] * lr_disp.row(tet[3]);
  }
  return out;
}

LatticeMesh box_lattice(int nx, int ny, int nz, const Vec3& lo, const Vec3& hi) {
  auto id = [&](int i, int j, int k) { return static_cast<std::uint32_t>((k * (ny + 1) + j) * (nx + 1) + i); };
  Points p((nx + 1) * (ny + 1) * (nz + 1), 3);
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        Vec3 s(double(i) / nx, double(j) / ny, double(k) / nz);
        p.row(id(i, j, k)) = lo + s.cwiseProduct(hi - lo);
      }
  std::vector<Tetrahedron> tets;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::uint32_t c[8];
        for (int b = 0; b < 8; ++b) c[b] = id(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1));
        // Kuhn split along the 0-7 diagonal.
        const int paths[6][2] = {{1, 3}, {1, 5}, {2, 3}, {2, 6}, {4, 5}, {4, 6}};
        for (const auto& pth : paths) {
          const int a = pth[0], b = pth[1];
          Tetrahedron t{c[0], c[a], c[b], c[7]};
          Vec3 p0 = p.row(t[0]), p1 = p.row(t[1]), p2 = p.row(t[2]), p3 = p.row(t[3]);
          if (signed_volume(p0, p1, p2, p3) < 0) std::swap(t[1], t[2]);
          tets.push_back(t);
        }
      }
  return LatticeMesh(std::move(p), std::move(tets));
}

}  // namespace simsr
