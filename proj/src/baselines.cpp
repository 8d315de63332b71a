#include "simsr/baselines.hpp"

#include "simsr/ad/adam.hpp"
#include "simsr/ad/checkpoint.hpp"
#include "simsr/ad/ops.hpp"
#include "simsr/error.hpp"
#include "simsr/network.hpp"
#include "simsr/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace simsr {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Points embedded_predict(const EmbeddingWeights& weights, const Points& lr_disp) {
  return apply_embedding(weights, lr_disp);
}

Eigen::MatrixXd center_distances(const Eigen::MatrixXd& mapped_distances, const AssignmentMap& mapped) {
  const auto n = static_cast<Eigen::Index>(mapped.size());
  if (mapped_distances.rows() != n)
    throw Error(Errc::shape_mismatch, "distance rows do not match the assignment size");
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index l = 0; l < n; ++l) {
      const auto hl = static_cast<Eigen::Index>(mapped.hr_index[static_cast<std::size_t>(l)]);
      if (hl >= mapped_distances.cols()) throw Error(Errc::index_out_of_range, "mapped vertex outside the surface");
      d(k, l) = mapped_distances(k, hl);
    }
  Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
  sym.diagonal().setZero();
  if (!sym.allFinite()) throw Error(Errc::disconnected_surface, "mapped vertices are not mutually reachable");
  return sym;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) throw Error(Errc::invalid_argument, "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

double median_spacing(const Eigen::MatrixXd& center_dist) {
  const auto n = center_dist.rows();
  if (n < 2) throw Error(Errc::invalid_argument, "spacing needs at least two centers");
  std::vector<double> nearest;
  for (Eigen::Index k = 0; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < n; ++l)
      if (l != k) best = std::min(best, center_dist(k, l));
    nearest.push_back(best);
  }
  return median(std::move(nearest));
}

RbfInterpolator::RbfInterpolator(const Eigen::MatrixXd& mapped_distances, const AssignmentMap& mapped, double sigma) {
  const Eigen::MatrixXd cd = center_distances(mapped_distances, mapped);
  sigma_ = sigma > 0 ? sigma : median_spacing(cd);
  if (!(sigma_ > 0) || !std::isfinite(sigma_)) throw Error(Errc::invalid_argument, "RBF width must be positive");
  const double inv = 1.0 / (sigma_ * sigma_);
  phi_ = (-(cd.array().square()) * inv).exp().matrix();
  eval_ = (-(mapped_distances.transpose().array().square()) * inv).exp().matrix();
  lu_.compute(phi_);
  rcond_ = lu_.rcond();
  if (!(rcond_ > 1e-18) || !std::isfinite(rcond_))
    throw Error(Errc::singular_system, "RBF kernel matrix is singular (rcond " + std::to_string(rcond_) + ")");
}

double RbfInterpolator::residual(const Eigen::MatrixXd& w, const Points& lr_disp) const {
  return (phi_ * w - Eigen::MatrixXd(lr_disp)).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd RbfInterpolator::fit(const Points& lr_disp) const {
  if (lr_disp.rows() != phi_.rows())
    throw Error(Errc::shape_mismatch, "LR displacement rows do not match the RBF centers");
  const Eigen::MatrixXd rhs = lr_disp;
  Eigen::MatrixXd w = lu_.solve(rhs);
  double res = (phi_ * w - rhs).cwiseAbs().maxCoeff();
  for (int it = 0; it < 8 && res >= 1e-10; ++it) {
    const Eigen::MatrixXd next = w + lu_.solve(rhs - phi_ * w);
    const double r = (phi_ * next - rhs).cwiseAbs().maxCoeff();
    if (!(r < res)) break;
    w = next;
    res = r;
  }
  if (!w.allFinite()) throw Error(Errc::non_finite, "RBF weights are not finite");
  return w;
}

Points RbfInterpolator::evaluate(const Eigen::MatrixXd& w) const {
  if (w.rows() != phi_.rows() || w.cols() != 3) throw Error(Errc::shape_mismatch, "RBF weights must be N x 3");
  return eval_ * w;
}

double table_spacing(const NeighborhoodTable& table) {
  std::vector<double> nearest;
  for (std::size_t j = 0; j < table.rows; ++j)
    for (std::size_t s = 0; s < table.k; ++s)
      if (table.dist(j, s) > 0) {
        nearest.push_back(table.dist(j, s));
        break;
      }
  if (nearest.empty()) throw Error(Errc::invalid_argument, "table has no positive distances");
  return median(std::move(nearest));
}

namespace {

// Exponents of the trivariate monomials up to total degree r.
std::vector<std::array<int, 3>> monomials(int r) {
  std::vector<std::array<int, 3>> out;
  for (int d = 0; d <= r; ++d)
    for (int a = d; a >= 0; --a)
      for (int b = d - a; b >= 0; --b) out.push_back({a, b, d - a - b});
  return out;
}

// Weighted least squares min |sqrt(theta) (b c - y)|^2 via QR of the weighted
// basis. When the normal matrix condition exceeds 1e12, ridge rows 1e-9 |c_t|^2
// are appended for every non-constant term, so constant data stays exact.
Eigen::MatrixXd weighted_fit(const Eigen::MatrixXd& b, const Eigen::VectorXd& theta, const Eigen::MatrixXd& y) {
  const Eigen::VectorXd sw = theta.cwiseSqrt();
  const Eigen::MatrixXd bw = sw.asDiagonal() * b;
  const Eigen::MatrixXd yw = sw.asDiagonal() * y;
  const Eigen::VectorXd sv = bw.jacobiSvd().singularValues();
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0 ? (sv(0) / smin) * (sv(0) / smin) : std::numeric_limits<double>::infinity();
  if (!(cond > 1e12)) return bw.colPivHouseholderQr().solve(yw);
  const Eigen::Index p = b.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(bw.rows() + p - 1, p);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(bw.rows() + p - 1, y.cols());
  aug.topRows(bw.rows()) = bw;
  rhs.topRows(bw.rows()) = yw;
  for (Eigen::Index t = 1; t < p; ++t) aug(bw.rows() + t - 1, t) = std::sqrt(1e-9);
  return aug.colPivHouseholderQr().solve(rhs);
}

}  // namespace

Points mls_reconstruct(const LatticeMesh& lattice, const Points& lr_disp, const SurfaceMesh& surface,
                       const NeighborhoodTable& table, const MlsConfig& config) {
  if (config.degree < 0) throw Error(Errc::invalid_argument, "MLS degree must be non-negative");
  const std::size_t m = surface.vertex_count();
  if (table.rows != m) throw Error(Errc::shape_mismatch, "neighbor table rows do not match the surface");
  if (lr_disp.rows() != static_cast<Eigen::Index>(lattice.vertex_count()))
    throw Error(Errc::shape_mismatch, "LR displacement rows do not match the lattice");
  const std::size_t k = std::min<std::size_t>(config.neighbors, table.k);
  const auto terms = config.trivariate ? monomials(config.degree) : std::vector<std::array<int, 3>>{};
  const std::size_t basis = config.trivariate ? terms.size() : static_cast<std::size_t>(config.degree) + 1;
  if (k < basis)
    throw Error(Errc::invalid_argument, "MLS needs at least " + std::to_string(basis) + " neighbors, got " +
                                            std::to_string(k));
  const double sigma = config.sigma > 0 ? config.sigma : table_spacing(table);
  const double inv2 = 1.0 / (sigma * sigma);
  const Points& lr = lattice.vertices();
  const Points& hr = surface.vertices();

  Points out(static_cast<Eigen::Index>(m), 3);
  parallel_for(m, [&](std::size_t j) {
    const auto row = static_cast<Eigen::Index>(j);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(k));
    for (std::size_t s = 0; s < k; ++s) {
      const double d = table.dist(j, s);
      theta(static_cast<Eigen::Index>(s)) = std::exp(-d * d * inv2);
    }
    auto neighbor = [&](std::size_t s) { return static_cast<Eigen::Index>(table.neighbor(j, s)); };
    if (config.trivariate) {
      Eigen::MatrixXd b(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(basis));
      for (std::size_t s = 0; s < k; ++s) {
        const Vec3 d = (lr.row(neighbor(s)) - hr.row(row)).transpose() / sigma;
        for (std::size_t t = 0; t < basis; ++t)
          b(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) =
              std::pow(d.x(), terms[t][0]) * std::pow(d.y(), terms[t][1]) * std::pow(d.z(), terms[t][2]);
      }
      Eigen::MatrixXd y(static_cast<Eigen::Index>(k), 3);
      for (std::size_t s = 0; s < k; ++s) y.row(static_cast<Eigen::Index>(s)) = lr_disp.row(neighbor(s));
      out.row(row) = weighted_fit(b, theta, y).row(0);
      return;
    }
    for (int c = 0; c < 3; ++c) {
      Eigen::MatrixXd b(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(basis));
      Eigen::VectorXd y(static_cast<Eigen::Index>(k));
      for (std::size_t s = 0; s < k; ++s) {
        const auto i = static_cast<Eigen::Index>(s);
        const double d = (lr(neighbor(s), c) - hr(row, c)) / sigma;
        double p = 1.0;
        for (std::size_t t = 0; t < basis; ++t, p *= d) b(i, static_cast<Eigen::Index>(t)) = p;
        y(i) = lr_disp(neighbor(s), c);
      }
      out(row, c) = weighted_fit(b, theta, y)(0, 0);
    }
  });
  if (!out.allFinite()) throw Error(Errc::non_finite, "MLS produced non-finite values");
  return out;
}

std::vector<int> scaled_decoder_widths(const BetaVaeConfig& config, std::size_t surface_vertices) {
  std::vector<int> out;
  const double factor = 3.0 * static_cast<double>(surface_vertices) / 106911.0;
  for (int w : config.decoder)
    out.push_back(config.scale_decoder ? std::max(32, static_cast<int>(std::lround(w * factor))) : w);
  return out;
}

double gaussian_kl(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) throw Error(Errc::shape_mismatch, "mu and logvar shapes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    kl += -0.5 * (1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]));
  return kl;
}

BetaVae::BetaVae(BetaVaeConfig config, std::size_t lattice_vertices, std::size_t surface_vertices)
    : config_(std::move(config)), n_(lattice_vertices), m_(surface_vertices) {
  if (n_ == 0 || m_ == 0) throw Error(Errc::invalid_argument, "empty meshes");
  if (config_.latent <= 0 || config_.batch_size <= 0 || config_.epochs < 0 || !(config_.lr > 0) || config_.beta < 0)
    throw Error(Errc::invalid_argument, "invalid beta-VAE configuration");
  for (int w : config_.encoder)
    if (w <= 0) throw Error(Errc::invalid_argument, "encoder widths must be positive");
  configure_allocator();

  std::mt19937_64 rng(config_.seed);
  const double slope = config_.leaky_slope;
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out, double gain) {
    const double bound = gain * std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(in)));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w(Shape{in, out});
    for (auto& v : w.values()) v = u(rng);
    params_.add(prefix + ".weight", std::move(w));
    params_.add(prefix + ".bias", Tensor(Shape{out}));
  };
  std::size_t prev = 3 * n_;
  for (int w : config_.encoder) {
    dense("encoder." + std::to_string(encoder_layers_++), prev, static_cast<std::size_t>(w), 1.0);
    prev = static_cast<std::size_t>(w);
  }
  const auto latent = static_cast<std::size_t>(config_.latent);
  dense("encoder.mu", prev, latent, 0.1);
  dense("encoder.logvar", prev, latent, 0.1);
  prev = latent;
  for (int w : scaled_decoder_widths(config_, m_)) {
    dense("decoder." + std::to_string(decoder_layers_++), prev, static_cast<std::size_t>(w), 1.0);
    prev = static_cast<std::size_t>(w);
  }
  dense("decoder." + std::to_string(decoder_layers_++), prev, 3 * m_, 0.1);
  params_.add("norm.scale", Tensor::scalar(1.0), false);
  ad::round_to_f32(params_);
}

Var BetaVae::param(Tape& tape, const std::string& name, bool track) const {
  auto& p = params_.get(name);
  return track ? tape.parameter(p) : tape.constant(p.value);
}

Var BetaVae::mlp(Tape& tape, Var h, const std::string& prefix, std::size_t layers, bool last_linear, bool track) const {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l) + ".";
    h = ad::linear(h, param(tape, p + "weight", track), param(tape, p + "bias", track));
    if (!(last_linear && l + 1 == layers)) h = ad::leaky_relu(h, config_.leaky_slope);
  }
  return h;
}

Var BetaVae::encode(Tape& tape, const Var& x, bool track, Var* logvar) const {
  Var h = mlp(tape, x, "encoder", encoder_layers_, false, track);
  if (logvar) *logvar = ad::linear(h, param(tape, "encoder.logvar.weight", track), param(tape, "encoder.logvar.bias", track));
  return ad::linear(h, param(tape, "encoder.mu.weight", track), param(tape, "encoder.mu.bias", track));
}

Var BetaVae::decode(Tape& tape, const Var& z, bool track) const {
  return mlp(tape, z, "decoder", decoder_layers_, true, track);
}

namespace {

Tensor stack(const std::vector<const Points*>& rows, double inv) {
  const std::size_t width = static_cast<std::size_t>(rows.front()->size());
  Tensor t(Shape{rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* src = rows[r]->data();
    for (std::size_t i = 0; i < width; ++i) t.at(r, i) = src[i] * inv;
  }
  return t;
}

}  // namespace

std::vector<BetaVae::EpochLoss> BetaVae::train(const FrameSet& frames, const std::vector<std::uint32_t>& ids) {
  if (ids.empty()) throw Error(Errc::invalid_argument, "no training frames");
  std::vector<const DisplacementFrame*> data;
  double sq = 0.0;
  std::size_t count = 0;
  for (auto id : ids) {
    const auto* f = frames.find(id);
    if (!f) throw Error(Errc::index_out_of_range, "training frame " + std::to_string(id) + " not in the container");
    if (!f->hr_disp) throw Error(Errc::invalid_argument, "training frame " + std::to_string(id) + " has no target");
    if (static_cast<std::size_t>(f->lr_disp.rows()) != n_ || static_cast<std::size_t>(f->hr_disp->rows()) != m_)
      throw Error(Errc::shape_mismatch, "frame sizes do not match the model");
    data.push_back(f);
    sq += f->lr_disp.squaredNorm();
    count += static_cast<std::size_t>(f->lr_disp.size());
  }
  const double rms = std::sqrt(sq / static_cast<double>(count));
  const double s = static_cast<double>(static_cast<float>(rms > 0 ? rms : 1.0));
  params_.get("norm.scale").value[0] = s;

  ad::AdamState adam;
  adam.config.lr = config_.lr;
  std::mt19937_64 noise(config_.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss;
  std::vector<EpochLoss> log;
  const auto batch = static_cast<std::size_t>(config_.batch_size);
  const auto latent = static_cast<std::size_t>(config_.latent);
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    EpochLoss entry;
    const auto order = epoch_order(ids, config_.seed, epoch);
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<const Points*> in, target;
      for (std::size_t b = start; b < end; ++b) {
        const auto* f = frames.find(order[b]);
        in.push_back(&f->lr_disp);
        target.push_back(&*f->hr_disp);
      }
      const std::size_t rows = end - start;
      params_.zero_grad();
      Tape tape;
      Var logvar;
      Var mu = encode(tape, tape.constant(stack(in, 1.0 / s)), true, &logvar);
      Tensor eps(Shape{rows, latent});
      for (auto& v : eps.values()) v = gauss(noise);
      Var z = mu + tape.constant(std::move(eps)) * ad::exp(ad::scale(logvar, 0.5));
      Var pred = ad::scale(decode(tape, z, true), s);
      Var recon = ad::sum(ad::square(pred - tape.constant(stack(target, 1.0))));
      Var kl = ad::scale(ad::sum(ad::add_scalar(logvar, 1.0) - ad::square(mu) - ad::exp(logvar)), -0.5);
      const double inv = 1.0 / static_cast<double>(rows);
      Var total = ad::scale(recon + ad::scale(kl, config_.beta), inv);
      tape.backward(total);
      ad::adam_step(params_, adam);
      ad::round_to_f32(params_);
      entry.recon += recon.value().item() * inv;
      entry.kl += kl.value().item() * inv;
      ++batches;
    }
    entry.recon /= static_cast<double>(batches);
    entry.kl /= static_cast<double>(batches);
    log.push_back(entry);
  }
  return log;
}

Points BetaVae::predict(const Points& lr_disp) const {
  if (static_cast<std::size_t>(lr_disp.rows()) != n_)
    throw Error(Errc::shape_mismatch, "LR displacement rows do not match the model");
  const double s = params_.get("norm.scale").value.item();
  Tape tape;
  Var mu = encode(tape, tape.constant(stack({&lr_disp}, 1.0 / s)), false, nullptr);
  const Tensor& out = decode(tape, mu, false).value();
  Points p(static_cast<Eigen::Index>(m_), 3);
  for (std::size_t i = 0; i < 3 * m_; ++i) p.data()[i] = out[i] * s;
  return p;
}

void BetaVae::save(const std::filesystem::path& path) const { ad::write_checkpoint(params_, path); }

void BetaVae::load(const std::filesystem::path& path) { ad::load_checkpoint(params_, path); }

}  // namespace simsr
