#include "simsr/datagen.hpp"

#include "simsr/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace simsr {
namespace {

using std::numbers::pi;

std::vector<int> to_ints(const std::vector<double>& v) {
  std::vector<int> out;
  for (double x : v) out.push_back(static_cast<int>(x));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  return out.str();
}

double sag(const GenConfig& c, double x, double y) {
  const double r2 = x * x + y * y;
  return std::sqrt(c.curvature_radius * c.curvature_radius - r2) - c.curvature_radius;
}

double activation_norm(const std::vector<double>& p) {
  double s = 0.0;
  for (double v : p) s += v * v;
  return std::sqrt(s);
}

void check_activation(const GenConfig& c, const std::vector<double>& p) {
  if (p.size() != static_cast<std::size_t>(c.channels))
    throw Error(Errc::shape_mismatch, "activation has " + std::to_string(p.size()) + " channels, expected " +
                                          std::to_string(c.channels));
}

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::invalid_argument, "datagen config: " + what); };
  if (hr_nx < 2 || hr_ny < 2) fail("surface resolution must be at least 2x2");
  if (lattice_nx < 1 || lattice_ny < 1 || lattice_nz < 1) fail("lattice needs at least one cell per axis");
  if (hr_nx * hr_ny <= (lattice_nx + 1) * (lattice_ny + 1) * (lattice_nz + 1))
    fail("surface must have more vertices than the lattice");
  if (patch_size <= 0 || curvature_radius <= patch_size) fail("curvature radius must exceed the patch size");
  if (slit_length < 0 || slit_length >= patch_size) fail("slit length must lie in [0, patch size)");
  if (lattice_padding < 0) fail("lattice padding must be non-negative");
  if (channels < 1) fail("channels must be at least 1");
  const auto a = static_cast<std::size_t>(channels);
  if (bump_center_x.size() != a || bump_center_y.size() != a || bump_width.size() != a)
    fail("bump centers and widths need one entry per channel");
  for (double w : bump_width)
    if (w <= 0) fail("bump widths must be positive");
  if (opening_channel < -1 || opening_channel >= channels) fail("opening channel out of range");
  if (wrinkle_wavelength <= 0 || wrinkle_width <= 0) fail("wrinkle wavelength and width must be positive");
  if (wrinkle_gate.empty()) fail("wrinkle gate needs at least one channel");
  for (int g : wrinkle_gate)
    if (g < 0 || g >= channels) fail("wrinkle gate channel " + std::to_string(g) + " out of range");
  if (families < 1 || frames_per_family < 1) fail("need at least one family and frame");
  auto check_families = [&](const std::vector<int>& fs) {
    for (int f : fs)
      if (f < 0 || f >= families) fail("family index " + std::to_string(f) + " out of range");
  };
  check_families(train_families);
  check_families(test_families);
  for (int f : train_families)
    for (int g : test_families)
      if (f == g) fail("train and test families overlap");
  if (walk_smoothing < 0 || walk_smoothing >= 1) fail("walk smoothing must lie in [0, 1)");
}

GenConfig GenConfig::from(const KeyValues& kv) {
  GenConfig c;
  kv.require_known({"hr_nx", "hr_ny", "patch_size", "curvature_radius", "slit_length", "lattice_nx", "lattice_ny", "lattice_nz",
                    "lattice_padding", "channels", "bump_center_x", "bump_center_y", "bump_width",
                    "bump_amplitude", "opening_channel", "wrinkle_wavelength", "wrinkle_amplitude", "wrinkle_width",
                    "wrinkle_center_x", "wrinkle_center_y", "wrinkle_gate",
                    "bias_amplitude", "families", "frames_per_family", "train_families", "test_families",
                    "walk_step", "walk_smoothing", "seed"});
  c.hr_nx = static_cast<int>(kv.get_int("hr_nx", c.hr_nx));
  c.hr_ny = static_cast<int>(kv.get_int("hr_ny", c.hr_ny));
  c.patch_size = kv.get_double("patch_size", c.patch_size);
  c.curvature_radius = kv.get_double("curvature_radius", c.curvature_radius);
  c.slit_length = kv.get_double("slit_length", c.slit_length);
  c.lattice_nx = static_cast<int>(kv.get_int("lattice_nx", c.lattice_nx));
  c.lattice_ny = static_cast<int>(kv.get_int("lattice_ny", c.lattice_ny));
  c.lattice_nz = static_cast<int>(kv.get_int("lattice_nz", c.lattice_nz));
  c.lattice_padding = kv.get_double("lattice_padding", c.lattice_padding);
  c.channels = static_cast<int>(kv.get_int("channels", c.channels));
  c.bump_center_x = kv.get_doubles("bump_center_x", c.bump_center_x);
  c.bump_center_y = kv.get_doubles("bump_center_y", c.bump_center_y);
  c.bump_width = kv.get_doubles("bump_width", c.bump_width);
  c.bump_amplitude = kv.get_double("bump_amplitude", c.bump_amplitude);
  c.opening_channel = static_cast<int>(kv.get_int("opening_channel", c.opening_channel));
  c.wrinkle_wavelength = kv.get_double("wrinkle_wavelength", c.wrinkle_wavelength);
  c.wrinkle_amplitude = kv.get_double("wrinkle_amplitude", c.wrinkle_amplitude);
  c.wrinkle_width = kv.get_double("wrinkle_width", c.wrinkle_width);
  c.wrinkle_center_x = kv.get_double("wrinkle_center_x", c.wrinkle_center_x);
  c.wrinkle_center_y = kv.get_double("wrinkle_center_y", c.wrinkle_center_y);
  if (kv.has("wrinkle_gate")) c.wrinkle_gate = to_ints(kv.get_doubles("wrinkle_gate", {}));
  c.bias_amplitude = kv.get_double("bias_amplitude", c.bias_amplitude);
  c.families = static_cast<int>(kv.get_int("families", c.families));
  c.frames_per_family = static_cast<int>(kv.get_int("frames_per_family", c.frames_per_family));
  if (kv.has("train_families")) c.train_families = to_ints(kv.get_doubles("train_families", {}));
  if (kv.has("test_families")) c.test_families = to_ints(kv.get_doubles("test_families", {}));
  c.walk_step = kv.get_double("walk_step", c.walk_step);
  c.walk_smoothing = kv.get_double("walk_smoothing", c.walk_smoothing);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

KeyValues GenConfig::to_key_values() const {
  KeyValues kv;
  auto num = [](double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  };
  kv.set("hr_nx", std::to_string(hr_nx));
  kv.set("hr_ny", std::to_string(hr_ny));
  kv.set("patch_size", num(patch_size));
  kv.set("curvature_radius", num(curvature_radius));
  kv.set("slit_length", num(slit_length));
  kv.set("lattice_nx", std::to_string(lattice_nx));
  kv.set("lattice_ny", std::to_string(lattice_ny));
  kv.set("lattice_nz", std::to_string(lattice_nz));
  kv.set("lattice_padding", num(lattice_padding));
  kv.set("channels", std::to_string(channels));
  kv.set("bump_center_x", join(bump_center_x));
  kv.set("bump_center_y", join(bump_center_y));
  kv.set("bump_width", join(bump_width));
  kv.set("bump_amplitude", num(bump_amplitude));
  kv.set("opening_channel", std::to_string(opening_channel));
  kv.set("wrinkle_wavelength", num(wrinkle_wavelength));
  kv.set("wrinkle_amplitude", num(wrinkle_amplitude));
  kv.set("wrinkle_width", num(wrinkle_width));
  kv.set("wrinkle_center_x", num(wrinkle_center_x));
  kv.set("wrinkle_center_y", num(wrinkle_center_y));
  kv.set("wrinkle_gate", join(wrinkle_gate));
  kv.set("bias_amplitude", num(bias_amplitude));
  kv.set("families", std::to_string(families));
  kv.set("frames_per_family", std::to_string(frames_per_family));
  kv.set("train_families", join(train_families));
  kv.set("test_families", join(test_families));
  kv.set("walk_step", num(walk_step));
  kv.set("walk_smoothing", num(walk_smoothing));
  kv.set("seed", std::to_string(seed));
  return kv;
}

std::pair<SurfaceMesh, LatticeMesh> generate_meshes(const GenConfig& c) {
  c.validate();
  Points p(c.hr_nx * c.hr_ny, 3);
  const double half = c.patch_size / 2.0;
  for (int j = 0; j < c.hr_ny; ++j)
    for (int i = 0; i < c.hr_nx; ++i) {
      const double x = -half + c.patch_size * i / (c.hr_nx - 1);
      const double y = -half + c.patch_size * j / (c.hr_ny - 1);
      p.row(j * c.hr_nx + i) = Vec3(x, y, sag(c, x, y));
    }
  std::vector<Triangle> tris;
  auto grid_x = [&](int i) { return -half + c.patch_size * i / (c.hr_nx - 1); };
  auto grid_y = [&](int j) { return -half + c.patch_size * j / (c.hr_ny - 1); };
  for (int j = 0; j + 1 < c.hr_ny; ++j)
    for (int i = 0; i + 1 < c.hr_nx; ++i) {
      const bool straddles = grid_y(j) < 0.0 && grid_y(j + 1) >= 0.0;
      if (straddles && std::abs(grid_x(i)) <= c.slit_length / 2 && std::abs(grid_x(i + 1)) <= c.slit_length / 2)
        continue;
      const auto a = static_cast<std::uint32_t>(j * c.hr_nx + i);
      const auto b = a + 1, d = a + static_cast<std::uint32_t>(c.hr_nx), e = d + 1;
      // Alternate the quad diagonal to avoid a directional bias.
      if ((i + j) % 2 == 0) {
        tris.push_back({a, b, e});
        tris.push_back({a, e, d});
      } else {
        tris.push_back({a, b, d});
        tris.push_back({b, e, d});
      }
    }
  SurfaceMesh surface(std::move(p), std::move(tris));
  const auto box = bounding_box(surface.vertices());
  const Vec3 pad = Vec3::Constant(c.lattice_padding);
  auto lattice = box_lattice(c.lattice_nx, c.lattice_ny, c.lattice_nz, box.lo - pad, box.hi + pad);
  embed_surface(surface, lattice);
  return {std::move(surface), std::move(lattice)};
}

Points bulk_field(const GenConfig& c, const Points& rest, const std::vector<double>& p) {
  check_activation(c, p);
  Points out = Points::Zero(rest.rows(), 3);
  const double half = c.patch_size / 2.0;
  for (int a = 0; a < c.channels; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (p[ua] == 0.0) continue;
    const double cx = c.bump_center_x[ua] * half, cy = c.bump_center_y[ua] * half;
    const Vec3 center(cx, cy, sag(c, cx, cy));
    const double phi = 2.0 * pi * a / c.channels;
    const Vec3 dir = Vec3(0.4 * std::cos(phi), 0.4 * std::sin(phi), 1.0).normalized();
    const double w2 = c.bump_width[ua] * c.bump_width[ua];
    const bool opening = a == c.opening_channel;
    for (Eigen::Index r = 0; r < rest.rows(); ++r) {
      const Vec3 x = rest.row(r);
      // Opening moves each side of y = 0 away from the other.
      const Vec3 d = opening ? Vec3(0.0, 0.6 * std::tanh(x.y()), std::tanh(x.y())) : dir;
      out.row(r) += p[ua] * c.bump_amplitude * std::exp(-(x - center).squaredNorm() / w2) * d;
    }
  }
  return out;
}

Points wrinkle_field(const GenConfig& c, const Points& rest, const std::vector<double>& p) {
  check_activation(c, p);
  double g = 1.0;
  for (int ch : c.wrinkle_gate) g *= p[static_cast<std::size_t>(ch)];
  Points out = Points::Zero(rest.rows(), 3);
  const Eigen::Vector2d u(std::cos(0.5), std::sin(0.5));
  const Eigen::Vector2d center(c.wrinkle_center_x * c.patch_size / 2.0, c.wrinkle_center_y * c.patch_size / 2.0);
  const double w2 = c.wrinkle_width * c.wrinkle_width;
  for (Eigen::Index r = 0; r < rest.rows(); ++r) {
    const Eigen::Vector2d xy(rest(r, 0), rest(r, 1));
    const double env = std::exp(-(xy - center).squaredNorm() / w2);
    out(r, 2) = c.wrinkle_amplitude * g * env * std::sin(2.0 * pi * xy.dot(u) / c.wrinkle_wavelength);
  }
  return out;
}

Points bias_field(const GenConfig& c, const Points& rest, const std::vector<double>& p) {
  check_activation(c, p);
  const double s = c.bias_amplitude * activation_norm(p);
  Points out = Points::Zero(rest.rows(), 3);
  const double half = c.patch_size / 2.0;
  for (Eigen::Index r = 0; r < rest.rows(); ++r) {
    const double x = rest(r, 0) / half, y = rest(r, 1) / half;
    const double cx = std::cos(pi * x / 2.0), cy = std::cos(pi * y / 2.0);
    out.row(r) = s * Vec3(0.4 * cx * y, -0.4 * x * cy, cx * cy);
  }
  return out;
}

std::vector<std::vector<double>> activation_trajectory(const GenConfig& c, int family) {
  std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                    static_cast<std::uint32_t>(family)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto a = static_cast<std::size_t>(c.channels);
  const auto t_count = static_cast<std::size_t>(c.frames_per_family);

  // Mean-reverting random walk, then a forward-backward low-pass filter.
  std::vector<std::vector<double>> walk(t_count, std::vector<double>(a));
  for (std::size_t ch = 0; ch < a; ++ch) {
    double x = normal(rng);
    for (std::size_t t = 0; t < t_count; ++t) {
      x = 0.9 * x + c.walk_step * normal(rng);
      walk[t][ch] = x;
    }
  }
  const double s = c.walk_smoothing;
  for (std::size_t ch = 0; ch < a; ++ch) {
    for (std::size_t t = 1; t < t_count; ++t) walk[t][ch] = s * walk[t - 1][ch] + (1 - s) * walk[t][ch];
    for (std::size_t t = t_count - 1; t-- > 0;) walk[t][ch] = s * walk[t + 1][ch] + (1 - s) * walk[t][ch];
  }
  for (auto& row : walk)
    for (auto& v : row) v = 1.0 / (1.0 + std::exp(-3.0 * v));
  return walk;
}

Dataset generate(const GenConfig& c) {
  auto [surface, lattice] = generate_meshes(c);
  Dataset data{std::move(surface), std::move(lattice), {}, {}, {}};
  data.frames.lattice_vertices = static_cast<std::uint32_t>(data.lattice.vertex_count());
  data.frames.surface_vertices = static_cast<std::uint32_t>(data.surface.vertex_count());
  const auto& lr_rest = data.lattice.vertices();
  const auto& hr_rest = data.surface.vertices();
  auto in = [](const std::vector<int>& v, int f) { return std::find(v.begin(), v.end(), f) != v.end(); };
  for (int f = 0; f < c.families; ++f) {
    const auto trajectory = activation_trajectory(c, f);
    for (int t = 0; t < c.frames_per_family; ++t) {
      const auto& p = trajectory[static_cast<std::size_t>(t)];
      DisplacementFrame frame;
      frame.frame_id = static_cast<std::uint32_t>(f * c.frames_per_family + t);
      frame.params = p;
      frame.lr_disp = bulk_field(c, lr_rest, p) + bias_field(c, lr_rest, p);
      frame.hr_disp = bulk_field(c, hr_rest, p) + wrinkle_field(c, hr_rest, p);
      quantize_f32(frame);
      if (in(c.train_families, f)) data.train_ids.push_back(frame.frame_id);
      if (in(c.test_families, f)) data.test_ids.push_back(frame.frame_id);
      data.frames.frames.push_back(std::move(frame));
    }
  }
  return data;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format_version"] = m.format_version;
  j["surface"] = m.surface.generic_string();
  j["lattice"] = m.lattice.generic_string();
  j["frames"] = m.frames.generic_string();
  j["table"] = m.table.generic_string();
  j["train_ids"] = m.train_ids;
  j["test_ids"] = m.test_ids;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  const auto kv = KeyValues::parse(m.config_text);
  for (const auto& [k, v] : kv.entries()) cfg[k] = v;
  j["generator"] = cfg;
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.format_version = j.at("format_version").get<int>();
    m.surface = j.at("surface").get<std::string>();
    m.lattice = j.at("lattice").get<std::string>();
    m.frames = j.at("frames").get<std::string>();
    m.table = j.value("table", std::string());
    m.train_ids = j.at("train_ids").get<std::vector<std::uint32_t>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::uint32_t>>();
    KeyValues kv;
    const auto generator = j.value("generator", nlohmann::json::object());
    for (const auto& [k, v] : generator.items()) kv.set(k, v.get<std::string>());
    m.config_text = kv.str();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_failure, path.string() + ": " + e.what());
  }
  return m;
}

Manifest write_dataset(const Dataset& data, const GenConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.surface = "surface.obj";
  m.lattice = "lattice.obj";
  m.frames = "frames.ssrf";
  m.train_ids = data.train_ids;
  m.test_ids = data.test_ids;
  m.config_text = config.to_key_values().str();
  save_surface(data.surface, dir / m.surface);
  save_lattice(data.lattice, dir / m.lattice);
  write_frames(data.frames, dir / m.frames);
  write_manifest(m, dir / "manifest.json");
  return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };
  Dataset data{load_surface(resolve(m.surface)), load_lattice(resolve(m.lattice)), read_frames(resolve(m.frames)),
               m.train_ids, m.test_ids};
  if (data.frames.lattice_vertices != data.lattice.vertex_count() ||
      data.frames.surface_vertices != data.surface.vertex_count())
    throw Error(Errc::shape_mismatch, "frame container does not match the meshes");
  for (auto ids : {&data.train_ids, &data.test_ids})
    for (auto id : *ids)
      if (!data.frames.find(id)) throw Error(Errc::index_out_of_range, "manifest lists missing frame " + std::to_string(id));
  return data;
}

std::vector<DisplacementFrame> perturb_dynamics(const std::vector<DisplacementFrame>& frames,
                                                const LatticeMesh& lattice, double amplitude, double period) {
  if (frames.size() < 2) throw Error(Errc::invalid_argument, "dynamics perturbation needs at least two frames");
  if (period <= 0) throw Error(Errc::invalid_argument, "oscillation period must be positive");
  const auto& rest = lattice.vertices();
  const auto box = bounding_box(rest);
  const Vec3 center = box.center(), half = 0.5 * (box.hi - box.lo);
  const Vec3 rigid = Vec3(1.0, 0.5, 0.0).normalized();
  std::vector<DisplacementFrame> out = frames;
  double filtered = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (out[t].lr_disp.rows() != rest.rows()) throw Error(Errc::shape_mismatch, "frame does not match lattice");
    filtered = 0.7 * filtered + 0.3 * std::sin(2.0 * pi * static_cast<double>(t) / period);
    const double s = amplitude * filtered;
    for (Eigen::Index r = 0; r < rest.rows(); ++r) {
      const double x = (rest(r, 0) - center.x()) / half.x();
      const Vec3 mode(0.0, 0.0, 0.5 * std::cos(pi * x / 2.0));
      out[t].lr_disp.row(r) += s * (rigid + mode);
    }
  }
  return out;
}

DisplacementFrame perturb_force(const DisplacementFrame& frame, const LatticeMesh& lattice, const Vec3& site,
                                const Vec3& direction, double magnitude, double radius) {
  const auto& rest = lattice.vertices();
  if (frame.lr_disp.rows() != rest.rows()) throw Error(Errc::shape_mismatch, "frame does not match lattice");
  if (!bounding_box(rest).contains(site)) throw Error(Errc::outside_lattice, "force site lies outside the lattice");
  if (radius <= 0) throw Error(Errc::invalid_argument, "force radius must be positive");
  const double len = direction.norm();
  if (len == 0.0) throw Error(Errc::invalid_argument, "force direction must be non-zero");
  DisplacementFrame out = frame;
  const Vec3 dir = direction / len;
  for (Eigen::Index r = 0; r < rest.rows(); ++r) {
    const Vec3 x = rest.row(r);
    out.lr_disp.row(r) += magnitude * std::exp(-(x - site).squaredNorm() / (radius * radius)) * dir;
  }
  return out;
}

}  // namespace simsr
