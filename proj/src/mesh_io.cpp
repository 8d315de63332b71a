#include "simsr/error.hpp"
#include "simsr/mesh.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace simsr {
namespace {

struct ObjData {
  std::vector<double> coords;
  std::vector<Triangle> triangles;
  std::vector<Tetrahedron> tetrahedra;
};

std::uint32_t parse_index(const std::string& token, std::size_t vertex_count, std::size_t line_no) {
  // Accept "i", "i/vt", "i//vn" and keep only the position index.
  const auto slash = token.find('/');
  const std::string head = token.substr(0, slash);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
  if (ec != std::errc() || ptr != head.data() + head.size()) {
    throw Error(Errc::parse_failure, "line " + std::to_string(line_no) + ": bad index '" + token + "'");
  }
  if (value < 1 || static_cast<std::size_t>(value) > vertex_count) {
    throw Error(Errc::index_out_of_range, "line " + std::to_string(line_no) + ": index " +
                                              std::to_string(value) + " outside 1.." +
                                              std::to_string(vertex_count));
  }
  return static_cast<std::uint32_t>(value - 1);
}

ObjData parse_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  ObjData data;
  std::vector<std::vector<std::string>> deferred;  // faces may precede later vertices
  std::vector<std::size_t> deferred_lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw Error(Errc::parse_failure, "line " + std::to_string(line_no) + ": malformed vertex");
      }
      data.coords.insert(data.coords.end(), {x, y, z});
    } else if (tag == "f" || tag == "t") {
      std::vector<std::string> tokens{tag};
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      const std::size_t want = tag == "f" ? 3 : 4;
      if (tokens.size() != want + 1) {
        throw Error(Errc::parse_failure, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(want) + " indices");
      }
      deferred.push_back(std::move(tokens));
      deferred_lines.push_back(line_no);
    }
  }
  const std::size_t nv = data.coords.size() / 3;
  for (std::size_t k = 0; k < deferred.size(); ++k) {
    const auto& tokens = deferred[k];
    if (tokens[0] == "f") {
      Triangle t{};
      for (int i = 0; i < 3; ++i) t[i] = parse_index(tokens[i + 1], nv, deferred_lines[k]);
      data.triangles.push_back(t);
    } else {
      Tetrahedron t{};
      for (int i = 0; i < 4; ++i) t[i] = parse_index(tokens[i + 1], nv, deferred_lines[k]);
      data.tetrahedra.push_back(t);
    }
  }
  return data;
}

Points to_points(const std::vector<double>& coords) {
  Points p(static_cast<Eigen::Index>(coords.size() / 3), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = coords[static_cast<std::size_t>(3 * i + c)];
  return p;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

void write_vertices(std::ostream& out, const Points& v) {
  for (Eigen::Index i = 0; i < v.rows(); ++i) out << "v " << v(i, 0) << ' ' << v(i, 1) << ' ' << v(i, 2) << '\n';
}

}  // namespace

SurfaceMesh load_surface(const std::filesystem::path& path) {
  auto data = parse_obj(path);
  if (data.triangles.empty()) throw Error(Errc::parse_failure, path.string() + ": no faces");
  return SurfaceMesh(to_points(data.coords), std::move(data.triangles));
}

LatticeMesh load_lattice(const std::filesystem::path& path) {
  auto data = parse_obj(path);
  if (data.tetrahedra.empty()) throw Error(Errc::parse_failure, path.string() + ": no tetrahedra");
  return LatticeMesh(to_points(data.coords), std::move(data.tetrahedra));
}

void save_surface(const SurfaceMesh& mesh, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_vertices(out, mesh.vertices());
  for (const auto& t : mesh.triangles()) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw Error(Errc::io_failure, "write failed: " + path.string());
}

void save_lattice(const LatticeMesh& mesh, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_vertices(out, mesh.vertices());
  for (const auto& t : mesh.tetrahedra()) {
    out << "t " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << ' ' << t[3] + 1 << '\n';
  }
  if (!out) throw Error(Errc::io_failure, "write failed: " + path.string());
}

}  // namespace simsr
