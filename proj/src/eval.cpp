#include "simsr/eval.hpp"

#include "simsr/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace simsr {

VertexErrors per_vertex_error(const Points& pred, const Points& target) {
  if (pred.rows() != target.rows())
    throw Error(Errc::shape_mismatch, "prediction has " + std::to_string(pred.rows()) + " vertices, target has " +
                                          std::to_string(target.rows()));
  if (pred.rows() == 0) throw Error(Errc::invalid_argument, "no vertices");
  VertexErrors out;
  out.errors = (pred - target).rowwise().norm();
  out.mean = out.errors.mean();
  out.max = out.errors.maxCoeff();
  return out;
}

ErrorStats aggregate(const std::vector<double>& frame_means) {
  if (frame_means.empty()) throw Error(Errc::invalid_argument, "no frames to aggregate");
  for (double v : frame_means)
    if (!std::isfinite(v)) throw Error(Errc::non_finite, "non-finite frame error");
  std::vector<double> s = frame_means;
  std::sort(s.begin(), s.end());
  ErrorStats st;
  st.frames = s.size();
  st.min = s.front();
  st.max = s.back();
  const std::size_t h = s.size() / 2;
  st.median = s.size() % 2 ? s[h] : 0.5 * (s[h - 1] + s[h]);
  st.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - st.mean) * (v - st.mean);
  st.std = std::sqrt(var / static_cast<double>(s.size()));
  st.mean = std::clamp(st.mean, st.min, st.max);
  return st;
}

void write_error_csv(const std::vector<FrameError>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << "frame_id,method,mean_error\n" << std::setprecision(17);
  for (const auto& r : rows) {
    if (r.method.find_first_of(",\n") != std::string::npos)
      throw Error(Errc::invalid_argument, "method name '" + r.method + "' contains a separator");
    out << r.frame_id << ',' << r.method << ',' << r.mean_error << '\n';
  }
  if (!out) throw Error(Errc::io_failure, "failed writing " + path.string());
}

std::vector<FrameError> read_error_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame_id,method,mean_error")
    throw Error(Errc::parse_failure, path.string() + ": unexpected header");
  std::vector<FrameError> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b)
      throw Error(Errc::parse_failure, path.string() + ":" + std::to_string(line_no) + ": expected three fields");
    FrameError r;
    try {
      r.frame_id = static_cast<std::uint32_t>(std::stoul(line.substr(0, a)));
      r.mean_error = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw Error(Errc::parse_failure, path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    r.method = line.substr(a + 1, b - a - 1);
    rows.push_back(std::move(r));
  }
  return rows;
}

Rgb heat_color(double value, double max) {
  if (!(max > 0)) return {0, 0, 255};
  const double t = std::clamp(value / max, 0.0, 1.0);
  const auto red = static_cast<std::uint8_t>(std::lround(255.0 * t));
  return {red, 0, static_cast<std::uint8_t>(255 - red)};
}

void export_heatmap(const SurfaceMesh& surface, const Eigen::VectorXd& values, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(values.size()) != surface.vertex_count())
    throw Error(Errc::shape_mismatch, "heatmap needs one value per surface vertex");
  const double max = values.size() ? values.maxCoeff() : 0.0;
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << surface.vertex_count() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element face " << surface.triangle_count() << "\n"
      << "property list uchar uint vertex_indices\nend_header\n"
      << std::setprecision(17);
  const Points& v = surface.vertices();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Rgb c = heat_color(values(i), max);
    out << v(i, 0) << ' ' << v(i, 1) << ' ' << v(i, 2) << ' ' << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2])
        << '\n';
  }
  for (const auto& t : surface.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw Error(Errc::io_failure, "failed writing " + path.string());
}

ColoredMesh read_heatmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  auto fail = [&](const std::string& what) { throw Error(Errc::parse_failure, path.string() + ": " + what); };
  std::string line;
  if (!std::getline(in, line) || line != "ply") fail("missing ply magic");
  std::size_t nv = 0, nf = 0;
  bool ascii = false;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ss(line);
    std::string tag, kind;
    ss >> tag;
    if (tag == "format") {
      ss >> kind;
      ascii = kind == "ascii";
    } else if (tag == "element") {
      std::size_t count = 0;
      ss >> kind >> count;
      (kind == "vertex" ? nv : nf) = count;
    }
  }
  if (!ascii) fail("only ascii PLY is supported");
  ColoredMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(nv), 3);
  mesh.colors.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    int r, g, b;
    const auto row = static_cast<Eigen::Index>(i);
    if (!(in >> mesh.vertices(row, 0) >> mesh.vertices(row, 1) >> mesh.vertices(row, 2) >> r >> g >> b))
      fail("truncated vertex " + std::to_string(i));
    mesh.colors[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  }
  for (std::size_t f = 0; f < nf; ++f) {
    int n;
    Triangle t;
    if (!(in >> n >> t[0] >> t[1] >> t[2]) || n != 3) fail("bad face " + std::to_string(f));
    mesh.triangles.push_back(t);
  }
  return mesh;
}

BenchReport bench(const std::function<void()>& run, std::size_t runs, std::size_t warmups) {
  if (runs == 0) throw Error(Errc::invalid_argument, "bench needs at least one timed run");
  for (std::size_t i = 0; i < warmups; ++i) run();
  std::vector<double> t;
  t.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto s = std::chrono::steady_clock::now();
    run();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count());
  }
  const ErrorStats st = aggregate(t);
  BenchReport r;
  r.warmups = warmups;
  r.runs = runs;
  r.mean_seconds = st.mean;
  r.std_seconds = st.std;
  r.min_seconds = st.min;
  r.max_seconds = st.max;
  r.fps = 1.0 / st.mean;
  return r;
}

}  // namespace simsr
