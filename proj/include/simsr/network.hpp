#pragma once

#include "simsr/ad/adam.hpp"
#include "simsr/ad/ops.hpp"
#include "simsr/config.hpp"
#include "simsr/frames.hpp"
#include "simsr/geodesy.hpp"
#include "simsr/mesh.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace simsr {

enum class Variant {
  full,   // feature encoder + coordinate-based upsampling
  no_fe,  // position-encoded input fed straight to upsampling
  no_cu,  // free per-pair weights over Euclidean neighbors
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::full;
  int pe_levels = 5;                 // D0 = 3 + 6 * pe_levels
  std::vector<int> widths = {64, 128};  // D1..DS, one per submodule
  int k_graph = 5;
  int k_interp = 20;
  double alpha = 0.001;
  double beta_start = 0.001;
  double beta_max = 20.0;
  double lr = 1e-4;
  int batch_size = 6;
  int epochs = 40;
  std::uint64_t seed = 1;
  double leaky_slope = 0.2;
  double omega0 = 30.0;
  int weight_hidden = 32;  // f_theta hidden width
  int weight_layers = 2;
  int recon_hidden = 128;
  int recon_layers = 2;
  int checkpoint_every = 0;  // epochs; 0 disables

  int submodules() const { return static_cast<int>(widths.size()); }
  int input_width() const { return 3 + 6 * pe_levels; }
  /// Width of the per-vertex encoding handed to upsampling.
  int encoded_width() const;
  /// Linear ramp from beta_start at epoch 0 to beta_max at the last epoch.
  double beta_at(int epoch) const;

  void validate() const;
  static ModelConfig from(const KeyValues& kv);
  KeyValues to_key_values() const;
};

/// sin(2^l pi p) and cos(2^l pi p) per axis and level as an [N, 6L] tensor;
/// column axis * 2L + 2l holds the sine, the next column the cosine.
ad::Tensor positional_encode(const Points& positions, int levels);

/// Affine map of a box onto [-1, 1]^3, per axis.
struct Normalizer {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Ones();
  static Normalizer of(const AxisBox& box);
  Points apply(const Points& p) const;
};

/// Euclidean k nearest other rows of a feature matrix; ties go to the lower index.
std::vector<std::uint32_t> feature_knn(const ad::Tensor& features, std::size_t k);

/// Max-aggregated EdgeConv: row i of the result is
/// max_s act([z_i, z_j - z_i] W + b) over the k neighbors j = idx[i*k + s].
ad::Var edge_conv(const ad::Var& z, const std::vector<std::uint32_t>& idx, std::size_t k, const ad::Var& w,
                  const ad::Var& b, double slope);

/// Per-row softmax over the k logits of an [M*k, 1] or [M, k] tensor.
ad::Var normalize_weights(const ad::Var& logits, std::size_t rows, std::size_t k);

/// z_H = sum_s w[j, s] z_L[idx[j*k + s]].
ad::Var upsample(const ad::Var& weights, const std::vector<std::uint32_t>& idx, const ad::Var& z_low);

struct LossTerms {
  ad::Var total;
  double recon = 0.0;
  double normal = 0.0;
  double reg = 0.0;
  std::size_t skipped_faces = 0;
};

/// L1 reconstruction + alpha * sum(1 - cos) of face normals + beta * sum of
/// row norms of the regularized features. pred and target are displacements
/// on the surface rest positions.
LossTerms deformation_loss(const ad::Var& pred, const Points& target, const SurfaceMesh& surface,
                           const std::vector<ad::Var>& regularized, double alpha, double beta);

/// Everything one forward pass produces.
struct Forward {
  ad::Var encoded;                  // [N, encoded width]
  std::vector<ad::Var> features;    // Z_1..Z_S
  ad::Var weights;                  // [M, k]
  ad::Var upsampled;                // [M, encoded width]
  ad::Var displacement;             // [M, 3] in mm
};

struct EpochLog {
  int epoch = 0;
  double total = 0.0;
  double recon = 0.0;
  double normal = 0.0;
  double reg = 0.0;
  double beta = 0.0;
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints
  std::function<void(const EpochLog&)> on_epoch;
};

class Model {
 public:
  /// table: geodesic neighbors of each surface vertex with k >= k_interp
  /// (only the first k_interp columns are used).
  Model(ModelConfig config, const SurfaceMesh& surface, const LatticeMesh& lattice, const NeighborhoodTable& table);

  const ModelConfig& config() const { return config_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  const SurfaceMesh& surface() const { return surface_; }
  const LatticeMesh& lattice() const { return lattice_; }
  std::size_t interp_k() const { return k_; }
  const std::vector<std::uint32_t>& interp_index() const { return interp_idx_; }

  /// Scale dividing LR input and multiplying network output (mm).
  double displacement_scale() const;
  void set_displacement_scale(double s);

  /// Per-pair interpolation weights [M, k] (softmax of f_theta, or the free table).
  ad::Var interpolation_weights(ad::Tape& tape, bool track) const;
  ad::Var encode(ad::Tape& tape, const Points& lr_disp, bool track, std::vector<ad::Var>* features) const;
  Forward forward(ad::Tape& tape, const Points& lr_disp, bool track, const ad::Var* weights = nullptr) const;

  /// Predicted surface displacement (M x 3, mm).
  Points predict_displacement(const Points& lr_disp) const;
  /// Predicted surface positions: rest + displacement.
  Points infer(const Points& lr_disp) const;

  /// Loss of one frame for gradient checks and diagnostics.
  LossTerms frame_loss(ad::Tape& tape, const DisplacementFrame& frame, double beta);

  std::vector<EpochLog> train(const FrameSet& frames, const std::vector<std::uint32_t>& ids,
                              const TrainOptions& options = {});

  void save(const std::filesystem::path& checkpoint) const;
  void load(const std::filesystem::path& checkpoint);

 private:
  ad::Var param(ad::Tape& tape, const std::string& name, bool track) const;
  ad::Var siren(ad::Tape& tape, const ad::Var& x, const std::string& prefix, int layers, bool track) const;
  void init_params();

  ModelConfig config_;
  SurfaceMesh surface_;
  LatticeMesh lattice_;
  Normalizer normalizer_;
  std::size_t k_ = 0;
  std::vector<std::uint32_t> interp_idx_;
  std::vector<std::uint32_t> rest_graph_;
  ad::Tensor pe_;          // [N, 6L]
  ad::Tensor pair_input_;  // [M*k, 7]
  mutable ad::ParamSet params_;
};

/// Shuffled frame order of one training epoch.
std::vector<std::uint32_t> epoch_order(const std::vector<std::uint32_t>& ids, std::uint64_t seed, int epoch);

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace simsr
