#pragma once

#include "simsr/ad/tape.hpp"
#include "simsr/frames.hpp"
#include "simsr/geodesy.hpp"
#include "simsr/mesh.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace simsr {

/// Barycentric interpolation of the lattice displacement (the embedded baseline).
Points embedded_predict(const EmbeddingWeights& weights, const Points& lr_disp);

/// Symmetric center-to-center geodesic distances through the mapped surface vertices.
Eigen::MatrixXd center_distances(const Eigen::MatrixXd& mapped_distances, const AssignmentMap& mapped);

/// Median over centers of the distance to the nearest other center.
double median_spacing(const Eigen::MatrixXd& center_dist);

/// Gaussian RBF interpolation over lattice centers with geodesic distances.
/// The kernel matrix depends only on rest geometry and is factored once.
class RbfInterpolator {
 public:
  /// mapped_distances: N x M geodesic distances from mapped_geodesic_distances.
  /// sigma <= 0 selects the median center spacing.
  RbfInterpolator(const Eigen::MatrixXd& mapped_distances, const AssignmentMap& mapped, double sigma);

  double sigma() const { return sigma_; }
  /// Reciprocal condition estimate of the kernel matrix.
  double rcond() const { return rcond_; }
  const Eigen::MatrixXd& kernel() const { return phi_; }

  /// Weights W (N x 3) with kernel * W = lr_disp, refined until the max-norm
  /// residual is below 1e-8 or refinement stalls.
  Eigen::MatrixXd fit(const Points& lr_disp) const;
  /// Residual max-norm of a fit.
  double residual(const Eigen::MatrixXd& w, const Points& lr_disp) const;
  Points evaluate(const Eigen::MatrixXd& w) const;
  Points predict(const Points& lr_disp) const { return evaluate(fit(lr_disp)); }

 private:
  double sigma_ = 0.0;
  double rcond_ = 0.0;
  Eigen::MatrixXd phi_;   // N x N
  Eigen::MatrixXd eval_;  // M x N
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

struct MlsConfig {
  int degree = 2;
  double sigma = 0.0;  // <= 0 selects the median neighbor spacing
  std::size_t neighbors = 20;
  bool trivariate = false;
};

/// Weighted least squares per surface vertex over its geodesic neighbors,
/// basis re-centered at the vertex; the prediction is the constant term.
/// Univariate mode fits each component in its own coordinate.
Points mls_reconstruct(const LatticeMesh& lattice, const Points& lr_disp, const SurfaceMesh& surface,
                       const NeighborhoodTable& table, const MlsConfig& config);

/// Median nearest-neighbor spacing read from a geodesic table (first nonzero column).
double table_spacing(const NeighborhoodTable& table);

struct BetaVaeConfig {
  std::vector<int> encoder = {1024, 512};
  int latent = 128;
  std::vector<int> decoder = {256, 1024, 4096};
  bool scale_decoder = true;  // scale decoder widths by 3M / 106911
  double beta = 0.01;
  double lr = 1e-4;
  int epochs = 100;
  int batch_size = 6;
  double leaky_slope = 0.2;
  std::uint64_t seed = 1;
};

/// Decoder widths actually used for an output of 3 * surface_vertices values.
std::vector<int> scaled_decoder_widths(const BetaVaeConfig& config, std::size_t surface_vertices);

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries.
double gaussian_kl(const ad::Tensor& mu, const ad::Tensor& logvar);

class BetaVae {
 public:
  BetaVae(BetaVaeConfig config, std::size_t lattice_vertices, std::size_t surface_vertices);

  const BetaVaeConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }

  struct EpochLoss {
    double recon = 0.0;
    double kl = 0.0;
  };
  std::vector<EpochLoss> train(const FrameSet& frames, const std::vector<std::uint32_t>& ids);
  /// Decodes the mean latent.
  Points predict(const Points& lr_disp) const;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  ad::Var encode(ad::Tape& tape, const ad::Var& x, bool track, ad::Var* logvar) const;
  ad::Var decode(ad::Tape& tape, const ad::Var& z, bool track) const;
  ad::Var param(ad::Tape& tape, const std::string& name, bool track) const;
  ad::Var mlp(ad::Tape& tape, ad::Var h, const std::string& prefix, std::size_t layers, bool last_linear,
              bool track) const;

  BetaVaeConfig config_;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t encoder_layers_ = 0;
  std::size_t decoder_layers_ = 0;
  mutable ad::ParamSet params_;
};

}  // namespace simsr
