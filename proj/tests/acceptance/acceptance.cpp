// End-to-end acceptance run. Prints one line per criterion:
//   criterion <n> <PASS|FAIL>: <name> (<measurements>)
// Usage: acceptance --cli <simsr binary> --model-config <file> [--work <dir>] [criteria...]

#include "simsr/ad/ops.hpp"
#include "simsr/baselines.hpp"
#include "simsr/datagen.hpp"
#include "simsr/eval.hpp"
#include "simsr/geodesy.hpp"
#include "simsr/network.hpp"
#include "simsr/parallel.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

using namespace simsr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_bits(const Points& a, const Points& b) {
  return a.rows() == b.rows() && std::equal(a.data(), a.data() + a.size(), b.data());
}

// ---------------------------------------------------------------------------
// 1-4: property suites

Outcome autodiff_soundness() {
  const auto t0 = Clock::now();
  double worst_primitive = 0.0;
  std::string worst_name;
  std::uint64_t seed = 1000;
  const auto cases = testing::primitive_cases();
  for (const auto& c : cases) {
    const double e = testing::primitive_fd_error(c, 20, seed++);
    if (e > worst_primitive) {
      worst_primitive = e;
      worst_name = c.name;
    }
  }

  // Ten-vertex surface in an eight-vertex box; every trainable entry checked.
  const auto surface = testing::grid_surface(4, 1, 8.0, 1.0);
  const auto lattice = box_lattice(1, 1, 1, Vec3(-1, -1, 0), Vec3(9, 3, 2));
  const auto pre = precompute(surface, lattice, 4);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.5);
  DisplacementFrame frame;
  frame.lr_disp = Points(8, 3);
  frame.hr_disp = Points(10, 3);
  for (Eigen::Index i = 0; i < frame.lr_disp.size(); ++i) frame.lr_disp.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < frame.hr_disp->size(); ++i) frame.hr_disp->data()[i] = g(rng);
  double worst_loss = 0.0, worst_small = 0.0;
  std::size_t entries_checked = 0, loss_failures = 0;
  for (const auto v : {Variant::full, Variant::no_fe, Variant::no_cu}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.pe_levels = 2;
    cfg.widths = {4, 4};
    cfg.k_graph = 3;
    cfg.k_interp = 4;
    cfg.weight_hidden = 4;
    cfg.recon_hidden = 5;
    cfg.omega0 = 3.0;
    cfg.alpha = 0.5;
    Model model(cfg, surface, lattice, pre.table);
    std::vector<ad::ParamEntry> entries;
    const auto& all = model.params().all();
    for (std::size_t p = 0; p < all.size(); ++p)
      if (all[p].trainable)
        for (std::size_t e = 0; e < all[p].value.size(); ++e) entries.push_back({p, e});
    entries_checked += entries.size();
    ad::LossFn loss = [&](ad::Tape& tape) { return model.frame_loss(tape, frame, 0.1).total; };
    const auto r = ad::grad_check_params(loss, model.params(), entries, 1e-6);
    // Entries whose exact gradient vanishes are judged against the finite-difference round-off floor.
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const double diff = std::abs(r.analytic[e] - r.numeric[e]);
      if (diff > 1e-4 * std::abs(r.analytic[e]) + 1e-8) ++loss_failures;
      if (std::abs(r.analytic[e]) > 1e-4) worst_loss = std::max(worst_loss, diff / std::abs(r.analytic[e]));
      else worst_small = std::max(worst_small, diff);
    }
  }
  const double secs = seconds_since(t0);
  return {worst_primitive < 1e-5 && loss_failures == 0 && secs < 60,
          std::to_string(cases.size()) + " primitives x 20 points, worst " + fmt(worst_primitive, 3) + " (" +
              worst_name + "); full loss over " + std::to_string(entries_checked) + " parameters, " +
              std::to_string(loss_failures) + " outside 1e-4 relative + 1e-8 absolute, worst relative " +
              fmt(worst_loss, 3) + ", worst absolute below 1e-4 gradients " + fmt(worst_small, 3) + "; " +
              fmt(secs, 3) + " s"};
}

Outcome geodesic_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cost(0, 20);
  int assignment_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 8);
    const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::min(m, 7)));
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = cost(rng);
    const auto r = linear_assignment(c);
    double recomputed = 0.0;
    for (int i = 0; i < n; ++i) recomputed += c(i, r.hr_index[static_cast<std::size_t>(i)]);
    std::set<std::uint32_t> used(r.hr_index.begin(), r.hr_index.end());
    if (r.total_cost != testing::brute_force_assignment(c) || recomputed != r.total_cost ||
        used.size() != r.hr_index.size())
      ++assignment_mismatch;
  }

  int knn_mismatch = 0;
  std::size_t rows_checked = 0;
  for (std::uint64_t seed : {99u, 100u, 101u}) {
    const auto sphere = testing::jittered_icosphere(2, 1.0, seed);
    std::vector<std::uint32_t> pool(sphere.vertex_count());
    std::iota(pool.begin(), pool.end(), 0u);
    std::shuffle(pool.begin(), pool.end(), rng);
    AssignmentMap mapped;
    mapped.hr_index.assign(pool.begin(), pool.begin() + 40);
    const std::size_t k = 8;
    const auto table = geodesic_knn(sphere, mapped, k);
    std::vector<std::vector<double>> dist;
    for (auto src : mapped.hr_index) dist.push_back(testing::dense_dijkstra(sphere, src));
    for (std::size_t j = 0; j < sphere.vertex_count(); ++j) {
      std::vector<std::pair<double, std::uint32_t>> all;
      for (std::uint32_t i = 0; i < mapped.size(); ++i) all.emplace_back(dist[i][j], i);
      std::sort(all.begin(), all.end());
      for (std::size_t s = 0; s < k; ++s)
        if (table.neighbor(j, s) != all[s].second || table.dist(j, s) != all[s].first) ++knn_mismatch;
      ++rows_checked;
    }
  }
  const double secs = seconds_since(t0);
  return {assignment_mismatch == 0 && knn_mismatch == 0 && secs < 60,
          "assignment mismatches " + std::to_string(assignment_mismatch) + "/200; geodesic_knn mismatches " +
              std::to_string(knn_mismatch) + " over " + std::to_string(rows_checked) + " rows of 162-vertex meshes; " +
              fmt(secs, 3) + " s"};
}

Outcome interpolation_exactness() {
  const auto t0 = Clock::now();
  auto surface = testing::grid_surface(14, 14, 40.0, 5.0);
  const auto box = box_lattice(4, 4, 2, Vec3(-2, -2, 0), Vec3(42, 42, 10));
  Points v = box.vertices();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.6, 0.6), u(-1.0, 1.0);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (int c = 0; c < 3; ++c) v(r, c) += jitter(rng);
  const LatticeMesh lattice(v, box.tetrahedra());
  const auto pre = precompute(surface, lattice, 20);
  const auto n = static_cast<Eigen::Index>(lattice.vertex_count());

  // RBF at its centers over several kernel widths.
  const auto dist = mapped_geodesic_distances(surface, pre.assignment);
  const double spacing = median_spacing(center_distances(dist, pre.assignment));
  double rbf_worst = 0.0;
  for (double factor : {0.5, 1.0, 2.0, 4.0}) {
    const RbfInterpolator rbf(dist, pre.assignment, factor * spacing);
    Points field(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) field(i, c) = 3.0 * u(rng);
    const Points at = rbf.predict(field);
    for (Eigen::Index i = 0; i < n; ++i)
      rbf_worst = std::max(rbf_worst, (at.row(pre.assignment.hr_index[static_cast<std::size_t>(i)]) - field.row(i))
                                          .cwiseAbs()
                                          .maxCoeff());
  }

  // MLS on quadratic fields in both bases.
  double mls_worst = 0.0;
  for (bool trivariate : {false, true}) {
    std::array<double, 10> a;
    for (auto& x : a) x = 0.05 * u(rng);
    auto poly = [&](const Vec3& p, int c) {
      if (!trivariate) return a[0] + a[1] * p[c] + 0.01 * a[2] * p[c] * p[c];
      return a[0] + a[1] * p.x() + a[2] * p.y() + a[3] * p.z() + 0.01 * (a[4] * p.x() * p.y() + a[5] * p.y() * p.z() +
                                                                        a[6] * p.x() * p.z() + a[7] * p.x() * p.x() +
                                                                        a[8] * p.y() * p.y() + a[9] * p.z() * p.z()) +
             0.1 * c;
    };
    Points field(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) field(i, c) = poly(lattice.vertices().row(i), c);
    MlsConfig cfg;
    cfg.trivariate = trivariate;
    if (trivariate) cfg.sigma = 20.0;
    const Points out = mls_reconstruct(lattice, field, surface, pre.table, cfg);
    for (Eigen::Index j = 0; j < out.rows(); ++j)
      for (int c = 0; c < 3; ++c) mls_worst = std::max(mls_worst, std::abs(out(j, c) - poly(surface.vertices().row(j), c)));
  }

  // Embedded baseline on a global affine field.
  Eigen::Matrix3d A;
  for (int i = 0; i < 9; ++i) A.data()[i] = u(rng);
  const Vec3 b(u(rng), u(rng), u(rng));
  auto affine = [&](const Points& p) {
    Points out = p * A.transpose();
    out.rowwise() += b.transpose();
    return out;
  };
  const auto weights = embed_surface(surface, lattice);
  const double emb_worst = (embedded_predict(weights, affine(lattice.vertices())) - affine(surface.vertices()))
                               .cwiseAbs()
                               .maxCoeff();
  const double secs = seconds_since(t0);
  return {rbf_worst < 1e-8 && mls_worst < 1e-6 && emb_worst < 1e-9 && secs < 60,
          "rbf at centers " + fmt(rbf_worst, 3) + ", mls quadratic " + fmt(mls_worst, 3) + ", embedded affine " +
              fmt(emb_worst, 3) + "; " + fmt(secs, 3) + " s"};
}

Outcome upsampling_invariants() {
  GenConfig g;
  g.hr_nx = 20;
  g.hr_ny = 20;
  g.lattice_nx = 3;
  g.lattice_ny = 3;
  g.lattice_nz = 1;
  g.families = 1;
  g.frames_per_family = 2;
  g.train_families = {0};
  g.test_families = {};
  const auto data = generate(g);
  const auto pre = precompute(data.surface, data.lattice, 20);
  double worst_sum = 0.0, worst_bound = 0.0;
  bool positive = true;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    ModelConfig cfg;
    cfg.seed = seed;
    cfg.widths = {16, 16};
    cfg.weight_hidden = 16;
    cfg.recon_hidden = 8;
    const Model model(cfg, data.surface, data.lattice, pre.table);
    ad::Tape tape;
    const auto f = model.forward(tape, data.frames.frames[seed % 2].lr_disp, false);
    const auto& w = f.weights.value();
    const auto& z = f.encoded.value();
    const auto& up = f.upsampled.value();
    const auto k = model.interp_k();
    const auto& idx = model.interp_index();
    for (std::size_t j = 0; j < w.rows(); ++j) {
      // The weights are evaluated in single precision, matching stored parameters.
      float row = 0.0f;
      for (std::size_t t = 0; t < k; ++t) {
        row += static_cast<float>(w.at(j, t));
        positive = positive && w.at(j, t) > 0.0;
      }
      worst_sum = std::max(worst_sum, std::abs(static_cast<double>(row) - 1.0));
      for (std::size_t c = 0; c < z.cols(); ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t t = 0; t < k; ++t) {
          lo = std::min(lo, z.at(idx[j * k + t], c));
          hi = std::max(hi, z.at(idx[j * k + t], c));
        }
        worst_bound = std::max({worst_bound, lo - up.at(j, c), up.at(j, c) - hi});
      }
    }
  }
  return {worst_sum < 1e-6 && worst_bound <= 1e-12 && positive,
          "100 parameterizations; max |row sum - 1| " + fmt(worst_sum, 3) + " (f32 accumulation), max bound excess " +
              fmt(std::max(0.0, worst_bound), 3)};
}

// ---------------------------------------------------------------------------
// 5-10: benchmark fixture

struct Bench {
  fs::path dir;
  fs::path manifest;
  Dataset data;
  NeighborhoodTable table;
  ModelConfig base;
  double train_range = 0.0;  // largest per-vertex surface displacement in training targets

  double mean_error(const std::function<Points(const Points&)>& predict) const {
    std::vector<double> means;
    for (auto id : data.test_ids) {
      const auto* f = data.frames.find(id);
      means.push_back(per_vertex_error(predict(f->lr_disp), *f->hr_disp).mean);
    }
    return aggregate(means).mean;
  }
};

struct Trained {
  std::unique_ptr<Model> model;
  double train_seconds = 0.0;
  double test_error = 0.0;
};

std::unique_ptr<Bench> make_bench(const fs::path& work, const fs::path& model_config) {
  const GenConfig g;
  auto b = std::make_unique<Bench>(Bench{work / "bench", {}, generate(g), {}, {}, 0.0});
  fs::remove_all(b->dir);
  write_dataset(b->data, g, b->dir);
  b->manifest = b->dir / "manifest.json";
  b->table = precompute(b->data.surface, b->data.lattice, 20).table;
  write_table(b->table, b->dir / "table.ssnt");
  auto m = read_manifest(b->manifest);
  m.table = "table.ssnt";
  write_manifest(m, b->manifest);
  b->base = ModelConfig::from(KeyValues::load(model_config));
  for (auto id : b->data.train_ids)
    b->train_range = std::max(b->train_range, b->data.frames.find(id)->hr_disp->rowwise().norm().maxCoeff());
  std::cout << "# benchmark: N=" << b->data.lattice.vertex_count() << " M=" << b->data.surface.vertex_count()
            << " train frames " << b->data.train_ids.size() << " test frames " << b->data.test_ids.size()
            << "; model config " << model_config.string() << std::endl;
  return b;
}

Trained train_variant(const Bench& b, const std::string& label, const std::function<void(ModelConfig&)>& edit) {
  ModelConfig cfg = b.base;
  edit(cfg);
  Trained t;
  t.model = std::make_unique<Model>(cfg, b.data.surface, b.data.lattice, b.table);
  const auto t0 = Clock::now();
  t.model->train(b.data.frames, b.data.train_ids);
  t.train_seconds = seconds_since(t0);
  t.test_error = b.mean_error([&](const Points& lr) { return t.model->predict_displacement(lr); });
  std::cout << "# trained " << label << ": " << cfg.epochs << " epochs in " << fmt(t.train_seconds, 4)
            << " s, test mean error " << fmt(t.test_error) << " mm" << std::endl;
  return t;
}

class Context {
 public:
  Context(fs::path work, fs::path model_config, fs::path cli)
      : work_(std::move(work)), model_config_(std::move(model_config)), cli_(std::move(cli)) {}

  const Bench& bench() {
    if (!bench_) bench_ = make_bench(work_, model_config_);
    return *bench_;
  }
  const Trained& model(const std::string& label) {
    auto it = models_.find(label);
    if (it != models_.end()) return it->second;
    std::function<void(ModelConfig&)> edit = [](ModelConfig&) {};
    if (label == "no-fe") edit = [](ModelConfig& c) { c.variant = Variant::no_fe; };
    if (label == "no-cu") edit = [](ModelConfig& c) { c.variant = Variant::no_cu; };
    if (label == "k1") edit = [](ModelConfig& c) { c.k_interp = 1; };
    return models_.emplace(label, train_variant(bench(), label, edit)).first->second;
  }
  const fs::path& work() const { return work_; }
  const fs::path& cli() const { return cli_; }

 private:
  fs::path work_, model_config_, cli_;
  std::unique_ptr<Bench> bench_;
  std::map<std::string, Trained> models_;
};

Outcome benchmark_ordering(Context& ctx) {
  const auto& b = ctx.bench();
  const auto& ours = ctx.model("full");
  const auto weights = embed_surface(b.data.surface, b.data.lattice);
  const double embedded = b.mean_error([&](const Points& lr) { return embedded_predict(weights, lr); });
  AssignmentMap mapped;
  mapped.hr_index = precompute(b.data.surface, b.data.lattice, 1).assignment.hr_index;
  const RbfInterpolator rbf(mapped_geodesic_distances(b.data.surface, mapped), mapped, 0.0);
  const double rbf_error = b.mean_error([&](const Points& lr) { return rbf.predict(lr); });
  const double mls_error = b.mean_error(
      [&](const Points& lr) { return mls_reconstruct(b.data.lattice, lr, b.data.surface, b.table, {}); });
  const bool pass = ours.test_error <= 0.7 * embedded && ours.test_error < rbf_error && ours.test_error < mls_error &&
                    ours.train_seconds <= 1800.0;
  return {pass, "ours " + fmt(ours.test_error) + " mm, embedded " + fmt(embedded) + " (ratio " +
                    fmt(ours.test_error / embedded, 3) + "), rbf " + fmt(rbf_error) + ", mls " + fmt(mls_error) +
                    "; training " + fmt(ours.train_seconds, 4) + " s"};
}

Outcome ablation_ordering(Context& ctx) {
  const double full = ctx.model("full").test_error;
  const double no_fe = ctx.model("no-fe").test_error;
  const double no_cu = ctx.model("no-cu").test_error;
  return {full < no_fe && no_fe < no_cu,
          "full " + fmt(full) + " mm, w/o FE " + fmt(no_fe) + ", w/o CU " + fmt(no_cu) + "; " +
              std::to_string(ctx.bench().base.epochs) + " epochs each"};
}

Outcome neighbor_trend(Context& ctx) {
  const auto& b = ctx.bench();
  const double k20 = ctx.model("full").test_error;
  const double k1 = ctx.model("k1").test_error;
  const Points& lr = b.data.frames.find(b.data.test_ids.front())->lr_disp;
  std::vector<std::pair<int, double>> times;
  bool monotone = true;
  for (int k : {1, 5, 10, 20}) {
    ModelConfig cfg = b.base;
    cfg.k_interp = k;
    const Model model(cfg, b.data.surface, b.data.lattice, b.table);
    const auto report = simsr::bench([&] { model.predict_displacement(lr); }, 50, 5);
    if (!times.empty() && report.mean_seconds <= times.back().second) monotone = false;
    times.emplace_back(k, report.mean_seconds);
  }
  std::string detail = "k=20 " + fmt(k20) + " mm, k=1 " + fmt(k1) + " mm; inference ms";
  for (const auto& [k, s] : times) detail += " k=" + std::to_string(k) + ":" + fmt(s * 1e3);
  return {k20 <= k1 && monotone, detail};
}

Outcome determinism(Context& ctx) {
  const auto root = ctx.work() / "determinism";
  fs::remove_all(root);
  GenConfig g;
  std::vector<std::string> failed;

  std::vector<Dataset> sets;
  for (int r = 0; r < 2; ++r) {
    sets.push_back(generate(g));
    write_dataset(sets.back(), g, root / ("gen" + std::to_string(r)));
  }
  for (const char* f : {"frames.ssrf", "surface.obj", "lattice.obj", "manifest.json"})
    if (slurp(root / "gen0" / f) != slurp(root / "gen1" / f)) failed.push_back(std::string("datagen:") + f);

  const auto& data = sets[0];
  std::array<Precomputed, 2> pre = {precompute(data.surface, data.lattice, 20),
                                    precompute(data.surface, data.lattice, 20)};
  write_table(pre[0].table, root / "t0.ssnt");
  write_table(pre[1].table, root / "t1.ssnt");
  if (pre[0].assignment.hr_index != pre[1].assignment.hr_index || pre[0].table.index != pre[1].table.index ||
      pre[0].table.distance != pre[1].table.distance || slurp(root / "t0.ssnt") != slurp(root / "t1.ssnt"))
    failed.push_back("precompute");

  // Short training budget; a run is a pure function of the seed.
  ModelConfig cfg = ctx.bench().base;
  cfg.epochs = 2;
  std::array<std::unique_ptr<Model>, 2> models;
  std::array<std::vector<EpochLog>, 2> logs;
  for (int r = 0; r < 2; ++r) {
    models[static_cast<std::size_t>(r)] = std::make_unique<Model>(cfg, data.surface, data.lattice, pre[0].table);
    logs[static_cast<std::size_t>(r)] = models[static_cast<std::size_t>(r)]->train(data.frames, data.train_ids);
    models[static_cast<std::size_t>(r)]->save(root / ("m" + std::to_string(r) + ".ssck"));
  }
  bool logs_equal = logs[0].size() == logs[1].size();
  for (std::size_t e = 0; logs_equal && e < logs[0].size(); ++e)
    logs_equal = logs[0][e].total == logs[1][e].total && logs[0][e].recon == logs[1][e].recon;
  if (!logs_equal || slurp(root / "m0.ssck") != slurp(root / "m1.ssck")) failed.push_back("train");

  std::size_t inferred = 0;
  for (auto id : data.test_ids) {
    const auto& lr = data.frames.find(id)->lr_disp;
    const Points a = models[0]->infer(lr);
    if (!same_bits(a, models[0]->infer(lr)) || !same_bits(a, models[1]->infer(lr))) {
      failed.push_back("infer");
      break;
    }
    ++inferred;
  }
  std::string detail = "datagen, precompute, train (2 epochs) and infer (" + std::to_string(inferred) +
                       " frames) compared across two runs";
  if (!failed.empty()) {
    detail += "; differing:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

Outcome robustness(Context& ctx) {
  const auto& b = ctx.bench();
  const auto& model = *ctx.model("full").model;
  const double bound = 5.0 * b.train_range;
  double largest = 0.0;
  std::size_t frames = 0;
  bool finite = true;
  auto check = [&](const Points& lr) {
    const Points d = model.predict_displacement(lr);
    finite = finite && d.allFinite();
    if (d.allFinite()) largest = std::max(largest, d.rowwise().norm().maxCoeff());
    ++frames;
  };
  // Test families are stored in time order, one contiguous run per family.
  GenConfig g;
  for (int family : g.test_families) {
    std::vector<DisplacementFrame> seq;
    for (int t = 0; t < g.frames_per_family; ++t)
      seq.push_back(*b.data.frames.find(static_cast<std::uint32_t>(family * g.frames_per_family + t)));
    for (double amplitude : {2.0, 6.0})
      for (const auto& f : perturb_dynamics(seq, b.data.lattice, amplitude)) check(f.lr_disp);
  }
  const auto& lattice = b.data.lattice;
  const auto box = bounding_box(lattice.vertices());
  const std::vector<Vec3> sites = {box.center(), Vec3(box.lo.x() * 0.5, 0.0, box.center().z()),
                                   Vec3(box.hi.x() * 0.5, box.hi.y() * 0.5, box.center().z())};
  for (std::size_t s = 0; s < sites.size(); ++s)
    for (double magnitude : {3.0, 8.0})
      for (std::size_t i = 0; i < b.data.test_ids.size(); i += 10)
        check(perturb_force(*b.data.frames.find(b.data.test_ids[i]), lattice, sites[s],
                            Vec3(s == 1 ? 1.0 : 0.0, 0.0, 1.0), magnitude)
                  .lr_disp);
  return {finite && largest <= bound, std::to_string(frames) + " perturbed frames, all finite: " +
                                          (finite ? std::string("yes") : std::string("no")) +
                                          "; max predicted displacement " + fmt(largest) + " mm vs bound " +
                                          fmt(bound) + " (5x training range " + fmt(b.train_range) + ")"};
}

std::map<std::string, std::string> run_cli(const std::string& command) {
  std::map<std::string, std::string> out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"), pclose);
  if (!pipe) return out;
  std::array<char, 4096> buf;
  while (fgets(buf.data(), buf.size(), pipe.get())) {
    std::istringstream line(buf.data());
    std::string word;
    line >> word;
    if (word != "RESULT") continue;
    while (line >> word) {
      const auto eq = word.find('=');
      if (eq != std::string::npos) out[word.substr(0, eq)] = word.substr(eq + 1);
    }
  }
  return out;
}

Outcome throughput(Context& ctx) {
  const auto& b = ctx.bench();
  const auto ckpt = b.dir / "model.ssck";
  const auto& trained = ctx.model("full");
  trained.model->save(ckpt);
  std::ofstream(b.dir / "model.cfg") << trained.model->config().to_key_values().str();
  const std::string cmd = "\"" + ctx.cli().string() + "\" bench --manifest \"" + b.manifest.string() +
                          "\" --checkpoint \"" + ckpt.string() + "\" --runs 50 --warmups 5";
  std::vector<double> means;
  std::string detail;
  bool reported = true;
  for (int r = 0; r < 2; ++r) {
    const auto res = run_cli(cmd);
    if (!res.count("mean_ms") || !res.count("fps")) {
      reported = false;
      break;
    }
    means.push_back(std::stod(res.at("mean_ms")));
    detail += (r ? "; " : "") + std::string("run ") + std::to_string(r + 1) + ": " + fmt(means.back()) +
              " ms/frame, " + fmt(std::stod(res.at("fps"))) + " FPS";
  }
  if (!reported) return {false, "bench did not report mean_ms and fps"};
  const double variation = std::abs(means[0] - means[1]) / std::min(means[0], means[1]);
  return {variation < 0.2, detail + "; variation " + fmt(100.0 * variation, 3) + "%"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path cli, model_config, work = fs::temp_directory_path() / "simsr_acceptance";
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (a == "--model-config" && i + 1 < argc) model_config = argv[++i];
    else if (a == "--work" && i + 1 < argc) work = argv[++i];
    else selected.insert(std::stoi(a));
  }
  if (cli.empty() || model_config.empty()) {
    std::cerr << "usage: acceptance --cli <simsr> --model-config <file> [--work <dir>] [criteria...]\n";
    return 2;
  }
  fs::create_directories(work);
  configure_allocator();
  Context ctx(work, model_config, cli);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff soundness", autodiff_soundness},
      {"geodesic and assignment oracles", geodesic_oracles},
      {"interpolation exactness", interpolation_exactness},
      {"upsampling invariants", upsampling_invariants},
      {"benchmark ordering", [&] { return benchmark_ordering(ctx); }},
      {"ablation ordering", [&] { return ablation_ordering(ctx); }},
      {"neighbor-count trend", [&] { return neighbor_trend(ctx); }},
      {"determinism", [&] { return determinism(ctx); }},
      {"robustness to perturbed inputs", [&] { return robustness(ctx); }},
      {"throughput report", [&] { return throughput(ctx); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << " ("
              << o.detail << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
