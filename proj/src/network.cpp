#include "simsr/network.hpp"

#include "simsr/ad/checkpoint.hpp"
#include "simsr/error.hpp"
#include "simsr/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace simsr {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_fe: return "no-fe";
    case Variant::no_cu: return "no-cu";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "no-fe" || name == "no_fe") return Variant::no_fe;
  if (name == "no-cu" || name == "no_cu") return Variant::no_cu;
  throw Error(Errc::invalid_argument, "unknown model variant '" + name + "'");
}

int ModelConfig::encoded_width() const {
  int w = input_width();
  if (variant != Variant::no_fe)
    for (int d : widths) w += d;
  return w;
}

double ModelConfig::beta_at(int epoch) const {
  if (epochs <= 1) return beta_start;
  const double t = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
  return beta_start + (beta_max - beta_start) * t;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::invalid_argument, "model config: " + what); };
  if (variant != Variant::no_fe && widths.empty()) fail("at least one submodule is required");
  for (int d : widths)
    if (d < 1) fail("feature widths must be positive");
  if (pe_levels < 0) fail("pe_levels must be non-negative");
  if (k_graph < 1 || k_interp < 1) fail("neighbor counts must be positive");
  if (alpha < 0 || beta_start < 0 || beta_max < 0) fail("loss weights must be non-negative");
  if (!(lr > 0)) fail("learning rate must be positive");
  if (batch_size < 1) fail("batch size must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (!(omega0 > 0)) fail("omega0 must be positive");
  if (weight_hidden < 1 || weight_layers < 1 || recon_hidden < 1 || recon_layers < 1)
    fail("MLP widths and depths must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
}

ModelConfig ModelConfig::from(const KeyValues& kv) {
  kv.require_known({"variant", "pe_levels", "widths", "k_graph", "k_interp", "alpha", "beta_start", "beta_max", "lr",
                    "batch_size", "epochs", "seed", "leaky_slope", "omega0", "weight_hidden", "weight_layers",
                    "recon_hidden", "recon_layers", "checkpoint_every"});
  ModelConfig c;
  c.variant = parse_variant(kv.get_string("variant", variant_name(c.variant)));
  c.pe_levels = static_cast<int>(kv.get_int("pe_levels", c.pe_levels));
  if (kv.has("widths")) {
    c.widths.clear();
    for (double d : kv.get_doubles("widths", {})) c.widths.push_back(static_cast<int>(d));
  }
  c.k_graph = static_cast<int>(kv.get_int("k_graph", c.k_graph));
  c.k_interp = static_cast<int>(kv.get_int("k_interp", c.k_interp));
  c.alpha = kv.get_double("alpha", c.alpha);
  c.beta_start = kv.get_double("beta_start", c.beta_start);
  c.beta_max = kv.get_double("beta_max", c.beta_max);
  c.lr = kv.get_double("lr", c.lr);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.leaky_slope = kv.get_double("leaky_slope", c.leaky_slope);
  c.omega0 = kv.get_double("omega0", c.omega0);
  c.weight_hidden = static_cast<int>(kv.get_int("weight_hidden", c.weight_hidden));
  c.weight_layers = static_cast<int>(kv.get_int("weight_layers", c.weight_layers));
  c.recon_hidden = static_cast<int>(kv.get_int("recon_hidden", c.recon_hidden));
  c.recon_layers = static_cast<int>(kv.get_int("recon_layers", c.recon_layers));
  c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", c.checkpoint_every));
  c.validate();
  return c;
}

KeyValues ModelConfig::to_key_values() const {
  auto num = [](double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  };
  KeyValues kv;
  kv.set("variant", variant_name(variant));
  kv.set("pe_levels", std::to_string(pe_levels));
  std::string w;
  for (std::size_t i = 0; i < widths.size(); ++i) w += (i ? ", " : "") + std::to_string(widths[i]);
  kv.set("widths", w);
  kv.set("k_graph", std::to_string(k_graph));
  kv.set("k_interp", std::to_string(k_interp));
  kv.set("alpha", num(alpha));
  kv.set("beta_start", num(beta_start));
  kv.set("beta_max", num(beta_max));
  kv.set("lr", num(lr));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("leaky_slope", num(leaky_slope));
  kv.set("omega0", num(omega0));
  kv.set("weight_hidden", std::to_string(weight_hidden));
  kv.set("weight_layers", std::to_string(weight_layers));
  kv.set("recon_hidden", std::to_string(recon_hidden));
  kv.set("recon_layers", std::to_string(recon_layers));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  return kv;
}

Tensor positional_encode(const Points& positions, int levels) {
  const auto n = static_cast<std::size_t>(positions.rows());
  const auto l = static_cast<std::size_t>(levels);
  Tensor out(Shape{n, 6 * l});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t f = 0; f < l; ++f) {
        const double arg = std::ldexp(std::numbers::pi, static_cast<int>(f)) * positions(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a));
        out.at(r, a * 2 * l + 2 * f) = std::sin(arg);
        out.at(r, a * 2 * l + 2 * f + 1) = std::cos(arg);
      }
  return out;
}

Normalizer Normalizer::of(const AxisBox& box) {
  Normalizer n;
  n.center = box.center();
  n.half = 0.5 * (box.hi - box.lo);
  const double widest = n.half.maxCoeff();
  if (!(widest > 0)) throw Error(Errc::degenerate_element, "cannot normalize a point-sized bounding box");
  // Flat axes borrow the widest extent so they map to 0 instead of dividing by 0.
  for (int a = 0; a < 3; ++a)
    if (n.half[a] <= 1e-12 * widest) n.half[a] = widest;
  return n;
}

Points Normalizer::apply(const Points& p) const {
  Points out(p.rows(), 3);
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (int a = 0; a < 3; ++a) out(r, a) = (p(r, a) - center[a]) / half[a];
  return out;
}

std::vector<std::uint32_t> feature_knn(const Tensor& features, std::size_t k) {
  if (features.rank() != 2) throw Error(Errc::shape_mismatch, "feature_knn expects a rank-2 tensor");
  const std::size_t n = features.rows(), d = features.cols();
  if (k == 0 || k >= n)
    throw Error(Errc::invalid_argument, "feature_knn: k=" + std::to_string(k) + " needs 1 <= k < " + std::to_string(n));
  std::vector<std::uint32_t> out(n * k);
  std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double* zi = features.data() + i * d;
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* zj = features.data() + j * d;
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += (zi[e] - zj[e]) * (zi[e] - zj[e]);
      cand[c++] = {s, static_cast<std::uint32_t>(j)};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t s = 0; s < k; ++s) out[i * k + s] = cand[s].second;
  }
  return out;
}

Var edge_conv(const Var& z, const std::vector<std::uint32_t>& idx, std::size_t k, const Var& w, const Var& b,
              double slope) {
  const std::size_t n = z.value().rows();
  if (idx.size() != n * k) throw Error(Errc::shape_mismatch, "edge_conv: neighbor list does not match k * rows");
  std::vector<std::uint32_t> self(n * k);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(self.begin() + static_cast<std::ptrdiff_t>(i * k), k, static_cast<std::uint32_t>(i));
  Var zi = ad::gather_rows(z, std::move(self));
  Var zj = ad::gather_rows(z, idx);
  Var edge = ad::concat({zi, zj - zi}, 1);
  Var h = ad::leaky_relu(ad::linear(edge, w, b), slope);
  const std::size_t width = h.value().cols();
  return ad::reduce_max(ad::reshape(h, {n, k, width}), 1);
}

Var normalize_weights(const Var& logits, std::size_t rows, std::size_t k) {
  return ad::softmax(ad::reshape(logits, {rows, k}), 1);
}

Var upsample(const Var& weights, const std::vector<std::uint32_t>& idx, const Var& z_low) {
  return ad::weighted_gather(weights, idx, z_low);
}

LossTerms deformation_loss(const Var& pred, const Points& target, const SurfaceMesh& surface,
                           const std::vector<Var>& regularized, double alpha, double beta) {
  Tape& tape = *pred.tape();
  const auto m = surface.vertex_count();
  if (pred.value().rank() != 2 || pred.value().rows() != m || pred.value().cols() != 3 ||
      static_cast<std::size_t>(target.rows()) != m)
    throw Error(Errc::shape_mismatch, "loss: prediction and target must both be " + std::to_string(m) + " x 3");

  Tensor target_t(Shape{m, 3}), rest_t(Shape{m, 3});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      target_t.at(r, c) = target(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      rest_t.at(r, c) = surface.vertices()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  LossTerms out;
  Var recon = ad::l1_distance(pred, tape.constant(target_t));
  out.recon = recon.value().item();

  // Face normal term over faces that are non-degenerate in both prediction and target.
  const auto& pv = pred.value();
  std::vector<std::uint32_t> ia, ib, ic;
  std::vector<double> target_normals;
  for (const auto& t : surface.triangles()) {
    auto pos = [&](std::uint32_t v, bool predicted) {
      Vec3 p = surface.vertices().row(v);
      for (int c = 0; c < 3; ++c) p[c] += predicted ? pv.at(v, static_cast<std::size_t>(c)) : target(v, c);
      return p;
    };
    const Vec3 np = (pos(t[1], true) - pos(t[0], true)).cross(pos(t[2], true) - pos(t[0], true));
    const Vec3 nt = (pos(t[1], false) - pos(t[0], false)).cross(pos(t[2], false) - pos(t[0], false));
    if (0.5 * np.norm() < 1e-12 || 0.5 * nt.norm() < 1e-12) {
      ++out.skipped_faces;
      continue;
    }
    ia.push_back(t[0]);
    ib.push_back(t[1]);
    ic.push_back(t[2]);
    target_normals.insert(target_normals.end(), {nt.x(), nt.y(), nt.z()});
  }
  Var total = recon;
  if (!ia.empty()) {
    Var positions = pred + tape.constant(rest_t);
    Var pa = ad::gather_rows(positions, std::move(ia));
    Var normals = ad::cross3(ad::gather_rows(positions, std::move(ib)) - pa, ad::gather_rows(positions, std::move(ic)) - pa);
    const std::size_t f = normals.value().rows();
    Var cosines = ad::cosine_similarity(normals, tape.constant(Tensor(Shape{f, 3}, std::move(target_normals))), 1);
    Var fn = ad::add_scalar(ad::neg(ad::sum(cosines)), static_cast<double>(f));
    out.normal = fn.value().item();
    total = total + ad::scale(fn, alpha);
  }
  if (!regularized.empty()) {
    std::vector<Var> norms;
    for (const auto& z : regularized) norms.push_back(ad::sum(ad::l2_norm(z, 1)));
    Var reg = norms.front();
    for (std::size_t s = 1; s < norms.size(); ++s) reg = reg + norms[s];
    out.reg = reg.value().item();
    total = total + ad::scale(reg, beta);
  }
  out.total = total;
  return out;
}

Model::Model(ModelConfig config, const SurfaceMesh& surface, const LatticeMesh& lattice, const NeighborhoodTable& table)
    : config_(std::move(config)), surface_(surface), lattice_(lattice) {
  config_.validate();
  configure_allocator();
  const std::size_t m = surface_.vertex_count(), n = lattice_.vertex_count();
  k_ = static_cast<std::size_t>(config_.k_interp);
  normalizer_ = Normalizer::of(bounding_box(surface_.vertices()));
  const Points hr = normalizer_.apply(surface_.vertices());
  const Points lr = normalizer_.apply(lattice_.vertices());

  if (config_.variant == Variant::no_cu) {
    if (k_ > n) throw Error(Errc::invalid_argument, "k_interp exceeds the lattice vertex count");
    interp_idx_ = euclidean_knn(surface_.vertices(), lattice_.vertices(), k_).index;
  } else {
    table.validate(n);
    if (table.rows != m) throw Error(Errc::shape_mismatch, "neighbor table rows do not match the surface");
    if (table.k < k_)
      throw Error(Errc::shape_mismatch, "neighbor table has k=" + std::to_string(table.k) + ", need " + std::to_string(k_));
    interp_idx_.resize(m * k_);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t s = 0; s < k_; ++s) interp_idx_[j * k_ + s] = table.neighbor(j, s);
    pair_input_ = Tensor(Shape{m * k_, 7});
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t s = 0; s < k_; ++s) {
        const std::size_t row = j * k_ + s;
        const Vec3 xh = hr.row(static_cast<Eigen::Index>(j));
        const Vec3 xl = lr.row(interp_idx_[row]);
        for (int c = 0; c < 3; ++c) {
          pair_input_.at(row, static_cast<std::size_t>(c)) = xh[c];
          pair_input_.at(row, 3 + static_cast<std::size_t>(c)) = xl[c];
        }
        pair_input_.at(row, 6) = (xl - xh).norm();
      }
  }
  if (config_.variant != Variant::no_fe) {
    if (static_cast<std::size_t>(config_.k_graph) >= n)
      throw Error(Errc::invalid_argument, "k_graph must be smaller than the lattice vertex count");
    rest_graph_ = lattice_geodesic_knn(lattice_, static_cast<std::size_t>(config_.k_graph)).index;
  }
  pe_ = positional_encode(lr, config_.pe_levels);
  init_params();
}

void Model::init_params() {
  std::mt19937_64 rng(config_.seed);
  auto uniform = [&](Shape shape, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return t;
  };
  const double slope = config_.leaky_slope;
  auto he = [&](std::size_t fan_in) { return std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in))); };

  if (config_.variant != Variant::no_fe) {
    std::size_t prev = static_cast<std::size_t>(config_.input_width());
    for (int s = 0; s < config_.submodules(); ++s) {
      const auto d = static_cast<std::size_t>(config_.widths[static_cast<std::size_t>(s)]);
      const std::string p = "encoder." + std::to_string(s + 1) + ".";
      params_.add(p + "edge.weight", uniform({2 * prev, d}, he(2 * prev)));
      params_.add(p + "edge.bias", Tensor(Shape{d}));
      params_.add(p + "fc.weight", uniform({3 * d + prev, d}, he(3 * d + prev)));
      params_.add(p + "fc.bias", Tensor(Shape{d}));
      prev = d;
    }
  }
  const double w0 = config_.omega0;
  auto add_siren = [&](const std::string& prefix, std::size_t in, std::size_t hidden, int layers, std::size_t out) {
    std::size_t fan = in;
    for (int l = 0; l <= layers; ++l) {
      const std::size_t width = l == layers ? out : hidden;
      const double bound = l == 0 ? 1.0 / static_cast<double>(fan) : std::sqrt(6.0 / static_cast<double>(fan)) / w0;
      const std::string p = prefix + "." + std::to_string(l) + ".";
      params_.add(p + "weight", uniform({fan, width}, bound));
      params_.add(p + "bias", uniform({width}, 1.0 / std::sqrt(static_cast<double>(fan))));
      fan = width;
    }
  };
  const std::size_t m = surface_.vertex_count();
  if (config_.variant == Variant::no_cu)
    params_.add("upsample.weights", Tensor(Shape{m, k_}, 1.0 / static_cast<double>(k_)));
  else
    add_siren("weight_net", 7, static_cast<std::size_t>(config_.weight_hidden), config_.weight_layers, 1);
  add_siren("recon", static_cast<std::size_t>(config_.encoded_width()), static_cast<std::size_t>(config_.recon_hidden),
            config_.recon_layers, 3);
  params_.add("norm.scale", Tensor::scalar(1.0), false);
  ad::round_to_f32(params_);
}

double Model::displacement_scale() const { return params_.get("norm.scale").value.item(); }

void Model::set_displacement_scale(double s) {
  if (!(s > 0) || !std::isfinite(s)) throw Error(Errc::invalid_argument, "displacement scale must be positive");
  params_.get("norm.scale").value[0] = static_cast<double>(static_cast<float>(s));
}

Var Model::param(Tape& tape, const std::string& name, bool track) const {
  auto& p = params_.get(name);
  return track ? tape.parameter(p) : tape.constant(p.value);
}

Var Model::siren(Tape& tape, const Var& x, const std::string& prefix, int layers, bool track) const {
  Var h = x;
  for (int l = 0; l <= layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l) + ".";
    h = ad::linear(h, param(tape, p + "weight", track), param(tape, p + "bias", track));
    if (l < layers) h = ad::sine(h, config_.omega0);
  }
  return h;
}

Var Model::interpolation_weights(Tape& tape, bool track) const {
  const std::size_t m = surface_.vertex_count();
  if (config_.variant == Variant::no_cu) return param(tape, "upsample.weights", track);
  Var logits = siren(tape, tape.constant(pair_input_), "weight_net", config_.weight_layers, track);
  return normalize_weights(logits, m, k_);
}

Var Model::encode(Tape& tape, const Points& lr_disp, bool track, std::vector<Var>* features) const {
  const std::size_t n = lattice_.vertex_count();
  if (static_cast<std::size_t>(lr_disp.rows()) != n)
    throw Error(Errc::shape_mismatch, "LR displacement has " + std::to_string(lr_disp.rows()) + " rows, lattice has " +
                                          std::to_string(n));
  const double inv = 1.0 / displacement_scale();
  const std::size_t d0 = static_cast<std::size_t>(config_.input_width());
  Tensor z0(Shape{n, d0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) z0.at(i, c) = lr_disp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * inv;
    for (std::size_t c = 3; c < d0; ++c) z0.at(i, c) = pe_.at(i, c - 3);
  }
  Var z = tape.constant(std::move(z0));
  if (config_.variant == Variant::no_fe) return z;

  std::vector<Var> levels{z};
  const auto k = static_cast<std::size_t>(config_.k_graph);
  for (int s = 0; s < config_.submodules(); ++s) {
    const std::string p = "encoder." + std::to_string(s + 1) + ".";
    const auto idx = s == 0 ? rest_graph_ : feature_knn(z.value(), k);
    Var e = edge_conv(z, idx, k, param(tape, p + "edge.weight", track), param(tape, p + "edge.bias", track),
                      config_.leaky_slope);
    Var pooled_max = ad::broadcast_rows(ad::reduce_max(e, 0), n);
    Var pooled_mean = ad::broadcast_rows(ad::reduce_mean(e, 0), n);
    Var cat = ad::concat({e, pooled_max, pooled_mean, z}, 1);
    z = ad::leaky_relu(ad::linear(cat, param(tape, p + "fc.weight", track), param(tape, p + "fc.bias", track)),
                       config_.leaky_slope);
    levels.push_back(z);
    if (features) features->push_back(z);
  }
  return ad::concat(std::span<const Var>(levels), 1);
}

Forward Model::forward(Tape& tape, const Points& lr_disp, bool track, const Var* weights) const {
  Forward f;
  f.encoded = encode(tape, lr_disp, track, &f.features);
  f.weights = weights ? *weights : interpolation_weights(tape, track);
  f.upsampled = upsample(f.weights, interp_idx_, f.encoded);
  Var out = siren(tape, f.upsampled, "recon", config_.recon_layers, track);
  f.displacement = ad::scale(out, displacement_scale());
  return f;
}

Points Model::predict_displacement(const Points& lr_disp) const {
  Tape tape;
  const auto f = forward(tape, lr_disp, false);
  const auto& v = f.displacement.value();
  Points out(static_cast<Eigen::Index>(v.rows()), 3);
  std::copy(v.data(), v.data() + v.size(), out.data());
  return out;
}

Points Model::infer(const Points& lr_disp) const { return surface_.vertices() + predict_displacement(lr_disp); }

LossTerms Model::frame_loss(Tape& tape, const DisplacementFrame& frame, double beta) {
  if (!frame.hr_disp) throw Error(Errc::invalid_argument, "frame " + std::to_string(frame.frame_id) + " has no target");
  const auto f = forward(tape, frame.lr_disp, true);
  return deformation_loss(f.displacement, *frame.hr_disp, surface_, f.features, config_.alpha, beta);
}

std::vector<std::uint32_t> epoch_order(const std::vector<std::uint32_t>& ids, std::uint64_t seed, int epoch) {
  std::vector<std::uint32_t> order = ids;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<EpochLog> Model::train(const FrameSet& frames, const std::vector<std::uint32_t>& ids,
                                   const TrainOptions& options) {
  if (ids.empty()) throw Error(Errc::invalid_argument, "no training frames");
  std::vector<const DisplacementFrame*> data;
  double sq = 0.0;
  std::size_t count = 0;
  for (auto id : ids) {
    const auto* f = frames.find(id);
    if (!f) throw Error(Errc::index_out_of_range, "training frame " + std::to_string(id) + " not in the container");
    if (!f->hr_disp) throw Error(Errc::invalid_argument, "training frame " + std::to_string(id) + " has no target");
    data.push_back(f);
    sq += f->lr_disp.squaredNorm();
    count += static_cast<std::size_t>(f->lr_disp.size());
  }
  const double rms = std::sqrt(sq / static_cast<double>(count));
  set_displacement_scale(rms > 0 ? rms : 1.0);

  ad::AdamState adam;
  adam.config.lr = config_.lr;
  std::vector<EpochLog> log;
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    EpochLog entry;
    entry.epoch = epoch;
    entry.beta = config_.beta_at(epoch);
    const auto order = epoch_order(ids, config_.seed, epoch);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      params_.zero_grad();
      Tape tape;
      Var weights = interpolation_weights(tape, true);
      Var total;
      double recon = 0.0, normal = 0.0, reg = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto* frame = frames.find(order[b]);
        const auto f = forward(tape, frame->lr_disp, true, &weights);
        auto terms = deformation_loss(f.displacement, *frame->hr_disp, surface_, f.features, config_.alpha, entry.beta);
        total = total.valid() ? total + terms.total : terms.total;
        recon += terms.recon;
        normal += terms.normal;
        reg += terms.reg;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      total = ad::scale(total, inv);
      tape.backward(total);
      ad::adam_step(params_, adam);
      ad::round_to_f32(params_);
      entry.total += total.value().item();
      entry.recon += recon * inv;
      entry.normal += normal * inv;
      entry.reg += reg * inv;
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    entry.total /= nb;
    entry.recon /= nb;
    entry.normal /= nb;
    entry.reg /= nb;
    log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (!options.checkpoint_dir.empty() && config_.checkpoint_every > 0 && (epoch + 1) % config_.checkpoint_every == 0) {
      std::filesystem::create_directories(options.checkpoint_dir);
      save(options.checkpoint_dir / ("epoch_" + std::to_string(epoch + 1) + ".ssck"));
    }
  }
  return log;
}

void Model::save(const std::filesystem::path& checkpoint) const { ad::write_checkpoint(params_, checkpoint); }

void Model::load(const std::filesystem::path& checkpoint) { ad::load_checkpoint(params_, checkpoint); }

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out.precision(10);
  out << "epoch,L_total,L_recon,L_fn,L_reg,beta\n";
  for (const auto& e : log)
    out << e.epoch << ',' << e.total << ',' << e.recon << ',' << e.normal << ',' << e.reg << ',' << e.beta << '\n';
}

}  // namespace simsr
