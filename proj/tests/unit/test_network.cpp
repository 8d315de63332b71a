#include "simsr/ad/grad_check.hpp"
#include "simsr/datagen.hpp"
#include "simsr/error.hpp"
#include "simsr/geodesy.hpp"
#include "simsr/network.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace simsr;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

GenConfig tiny_gen() {
  GenConfig g;
  g.hr_nx = 10;
  g.hr_ny = 10;
  g.lattice_nx = 2;
  g.lattice_ny = 2;
  g.lattice_nz = 1;
  g.families = 2;
  g.frames_per_family = 3;
  g.train_families = {0};
  g.test_families = {1};
  return g;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.pe_levels = 2;
  c.widths = {8, 8};
  c.k_graph = 3;
  c.k_interp = 4;
  c.weight_hidden = 8;
  c.recon_hidden = 16;
  c.lr = 1e-3;
  c.batch_size = 1;
  return c;
}

struct Scene {
  Dataset data;
  Precomputed pre;
};

const Scene& tiny_scene() {
  static const Scene s = [] {
    auto data = generate(tiny_gen());
    auto pre = precompute(data.surface, data.lattice, 6);
    return Scene{std::move(data), std::move(pre)};
  }();
  return s;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

double diagonal(const Points& p) {
  const auto box = bounding_box(p);
  return (box.hi - box.lo).norm();
}

}  // namespace

TEST_CASE("positional encoding examples") {
  Points p(2, 3);
  p << 0, 0, 0, 1, 0, 0.5;
  const auto pe = positional_encode(p, 2);
  REQUIRE(pe.cols() == 12);
  for (std::size_t c = 0; c < 12; c += 2) {
    CHECK(pe.at(0, c) == 0.0);
    CHECK(pe.at(0, c + 1) == 1.0);
  }
  CHECK(pe.at(1, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pe.at(1, 1) == doctest::Approx(-1.0));
  CHECK(pe.at(1, 3) == doctest::Approx(1.0));
  // z = 0.5: sin(pi/2) = 1, cos(pi) = -1
  CHECK(pe.at(1, 8) == doctest::Approx(1.0));
  CHECK(pe.at(1, 11) == doctest::Approx(-1.0));
  CHECK(positional_encode(Points::Zero(4, 3), 5).cols() == 30);
  ModelConfig c;
  CHECK(c.input_width() == 33);
  CHECK(c.encoded_width() == 33 + 64 + 128);
}

TEST_CASE("normalizer maps the box onto [-1, 1]") {
  Points p(3, 3);
  p << 0, 10, 5, 4, 30, 5, 2, 20, 5;
  const auto n = Normalizer::of(bounding_box(p));
  const Points q = n.apply(p);
  CHECK(q(0, 0) == -1.0);
  CHECK(q(1, 0) == 1.0);
  CHECK(q(2, 1) == 0.0);
  CHECK(q.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(Normalizer::of(bounding_box(Points::Zero(2, 3))), Error);
}

TEST_CASE("toy edge conv") {
  Tape tape;
  Var z = tape.constant(Tensor::matrix(2, 1, {1, 3}));
  Var w = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  Var b = tape.constant(Tensor(Shape{1}));
  const auto out = edge_conv(z, {1, 0}, 1, w, b, 0.2).value();
  CHECK(out.at(0, 0) == 3.0);
  CHECK(out.at(1, 0) == 1.0);
  CHECK_THROWS_AS(edge_conv(z, {1}, 1, w, b, 0.2), Error);
}

TEST_CASE("edge conv and feature knn are equivariant under relabeling") {
  std::mt19937_64 rng(4);
  const std::size_t n = 9, d = 4, k = 3, width = 5;
  const Tensor z = random_tensor({n, d}, rng);
  const Tensor w = random_tensor({2 * d, width}, rng);
  const Tensor b = random_tensor({width}, rng);
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Row i of the permuted set is row perm[i] of the original.
  std::vector<std::uint32_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = static_cast<std::uint32_t>(i);
  Tensor zp(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) zp.at(i, c) = z.at(perm[i], c);

  const auto idx = feature_knn(z, k);
  const auto idxp = feature_knn(zp, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < k; ++s) CHECK(idxp[i * k + s] == inv[idx[perm[i] * k + s]]);

  Tape tape;
  const auto out = edge_conv(tape.constant(z), idx, k, tape.constant(w), tape.constant(b), 0.2).value();
  const auto outp = edge_conv(tape.constant(zp), idxp, k, tape.constant(w), tape.constant(b), 0.2).value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < width; ++c) CHECK(outp.at(i, c) == out.at(perm[i], c));
  CHECK_THROWS_AS(feature_knn(z, n), Error);
}

TEST_CASE("feature encoding is equivariant under lattice relabeling") {
  const auto& s = tiny_scene();
  const auto n = s.data.lattice.vertex_count();
  // Jitter so the rest graph has no distance ties.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Points v = s.data.lattice.vertices();
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (int c = 0; c < 3; ++c) v(i, c) += u(rng);
  const LatticeMesh lattice(v, s.data.lattice.tetrahedra());

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint32_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = static_cast<std::uint32_t>(i);
  Points vp(v.rows(), 3);
  for (std::size_t i = 0; i < n; ++i) vp.row(static_cast<Eigen::Index>(i)) = v.row(perm[i]);
  auto tets = lattice.tetrahedra();
  for (auto& t : tets)
    for (auto& x : t) x = inv[x];
  const LatticeMesh permuted(vp, tets);

  const Model a(tiny_model(), s.data.surface, lattice, precompute(s.data.surface, lattice, 4).table);
  const Model b(tiny_model(), s.data.surface, permuted, precompute(s.data.surface, permuted, 4).table);
  const Points disp = s.data.frames.frames[1].lr_disp;
  Points dispp(disp.rows(), 3);
  for (std::size_t i = 0; i < n; ++i) dispp.row(static_cast<Eigen::Index>(i)) = disp.row(perm[i]);

  Tape tape;
  std::vector<Var> fa, fb;
  const auto ea = a.encode(tape, disp, false, &fa).value();
  const auto eb = b.encode(tape, dispp, false, &fb).value();
  REQUIRE(ea.cols() == static_cast<std::size_t>(tiny_model().encoded_width()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < ea.cols(); ++c) CHECK(eb.at(i, c) == doctest::Approx(ea.at(perm[i], c)).epsilon(1e-9));
}

TEST_CASE("upsampling examples") {
  Tape tape;
  const std::size_t m = 2, k = 3;
  const std::vector<std::uint32_t> idx{0, 1, 2, 2, 3, 1};
  std::mt19937_64 rng(6);
  Var logits = tape.constant(random_tensor({m * k, 1}, rng));
  Var w = normalize_weights(logits, m, k);

  Tensor same(Shape{4, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    same.at(i, 0) = 1.5;
    same.at(i, 1) = -0.25;
  }
  const auto out = upsample(w, idx, tape.constant(same)).value();
  for (std::size_t j = 0; j < m; ++j) {
    CHECK(out.at(j, 0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out.at(j, 1) == doctest::Approx(-0.25).epsilon(1e-15));
  }

  const Tensor z = random_tensor({4, 2}, rng);
  const auto mean = upsample(normalize_weights(tape.constant(Tensor(Shape{m * k, 1}, 0.7)), m, k), idx, tape.constant(z));
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(mean.value().at(0, c) == doctest::Approx((z.at(0, c) + z.at(1, c) + z.at(2, c)) / 3));
    CHECK(mean.value().at(1, c) == doctest::Approx((z.at(2, c) + z.at(3, c) + z.at(1, c)) / 3));
  }

  const auto one = upsample(normalize_weights(tape.constant(Tensor(Shape{2, 1}, -3.0)), 2, 1), {3, 0}, tape.constant(z));
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(one.value().at(0, c) == z.at(3, c));
    CHECK(one.value().at(1, c) == z.at(0, c));
  }
}

TEST_CASE("interpolation weights are convex for random parameters") {
  const auto& s = tiny_scene();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto cfg = tiny_model();
    cfg.seed = seed;
    const Model model(cfg, s.data.surface, s.data.lattice, s.pre.table);
    Tape tape;
    const auto f = model.forward(tape, s.data.frames.frames[0].lr_disp, false);
    const auto& w = f.weights.value();
    const auto& z = f.encoded.value();
    const auto& up = f.upsampled.value();
    const auto k = model.interp_k();
    const auto& idx = model.interp_index();
    for (std::size_t j = 0; j < w.rows(); ++j) {
      double row = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        CHECK(w.at(j, t) > 0.0);
        row += w.at(j, t);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t c = 0; c < z.cols(); ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t t = 0; t < k; ++t) {
          lo = std::min(lo, z.at(idx[j * k + t], c));
          hi = std::max(hi, z.at(idx[j * k + t], c));
        }
        CHECK(up.at(j, c) >= lo - 1e-12);
        CHECK(up.at(j, c) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("loss examples") {
  const auto surface = testing::grid_surface(3, 3, 3.0);
  const auto m = surface.vertex_count();
  const Points zero = Points::Zero(static_cast<Eigen::Index>(m), 3);
  Tape tape;
  auto terms = deformation_loss(tape.constant(Tensor(Shape{m, 3})), zero, surface, {}, 1.0, 1.0);
  CHECK(terms.recon == 0.0);
  CHECK(terms.normal == doctest::Approx(0.0));
  CHECK(terms.reg == 0.0);

  // Pure in-plane shift of one vertex keeps every normal.
  Tensor shifted(Shape{m, 3});
  shifted.at(5, 0) = 0.1;
  terms = deformation_loss(tape.constant(shifted), zero, surface, {}, 1.0, 1.0);
  CHECK(terms.recon == doctest::Approx(0.1));
  CHECK(terms.normal == doctest::Approx(0.0).epsilon(1e-12));

  // Mirroring z -> -z of a flat grid keeps normals; mirroring x flips them all.
  Tensor flip(Shape{m, 3});
  for (std::size_t v = 0; v < m; ++v) flip.at(v, 0) = -2.0 * surface.vertices()(static_cast<Eigen::Index>(v), 0);
  terms = deformation_loss(tape.constant(flip), zero, surface, {}, 1.0, 0.0);
  CHECK(terms.normal == doctest::Approx(2.0 * static_cast<double>(surface.triangles().size())));

  Tensor collapse(Shape{m, 3});
  for (std::size_t v = 0; v < m; ++v)
    for (std::size_t c = 0; c < 2; ++c) collapse.at(v, c) = -surface.vertices()(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
  terms = deformation_loss(tape.constant(collapse), zero, surface, {}, 1.0, 0.0);
  CHECK(terms.skipped_faces == surface.triangles().size());
  CHECK(terms.normal == 0.0);

  Var feat = tape.constant(Tensor::matrix(2, 2, {3, 4, 0, 1}));
  terms = deformation_loss(tape.constant(Tensor(Shape{m, 3})), zero, surface, {feat}, 1.0, 0.5);
  CHECK(terms.reg == doctest::Approx(6.0));
  CHECK(terms.total.value().item() == doctest::Approx(3.0));
  CHECK_THROWS_AS(deformation_loss(tape.constant(Tensor(Shape{m - 1, 3})), zero, surface, {}, 1.0, 1.0), Error);
}

TEST_CASE("full loss gradient matches finite differences") {
  // Tiny surface and lattice keep the finite-difference loop short.
  auto g = tiny_gen();
  g.hr_nx = 5;
  g.hr_ny = 5;
  g.lattice_nx = 1;
  g.lattice_ny = 1;
  g.slit_length = 0.0;
  const auto data = generate(g);
  const auto pre = precompute(data.surface, data.lattice, 4);
  for (const char* variant : {"full", "no-fe", "no-cu"}) {
    auto cfg = tiny_model();
    cfg.variant = parse_variant(variant);
    cfg.widths = {4, 4};
    cfg.recon_hidden = 6;
    cfg.weight_hidden = 6;
    cfg.omega0 = 3.0;
    cfg.alpha = 0.3;
    Model model(cfg, data.surface, data.lattice, pre.table);
    const auto& frame = data.frames.frames[2];
    ad::LossFn loss = [&](Tape& tape) { return model.frame_loss(tape, frame, 0.05).total; };
    std::mt19937_64 rng(12);
    std::vector<ad::ParamEntry> entries;
    auto& all = model.params().all();
    for (std::size_t p = 0; p < all.size(); ++p) {
      if (!all[p].trainable) continue;
      std::uniform_int_distribution<std::size_t> pick(0, all[p].value.size() - 1);
      for (int t = 0; t < 3; ++t) entries.push_back({p, pick(rng)});
    }
    const auto r = ad::grad_check_params(loss, model.params(), entries, 1e-6);
    INFO(variant);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("zero reconstructor output layer gives the rest pose") {
  const auto& s = tiny_scene();
  Model model(tiny_model(), s.data.surface, s.data.lattice, s.pre.table);
  const auto last = std::to_string(model.config().recon_layers);
  for (auto& v : model.params().get("recon." + last + ".weight").value.values()) v = 0.0;
  for (auto& v : model.params().get("recon." + last + ".bias").value.values()) v = 0.0;
  const Points out = model.infer(s.data.frames.frames[3].lr_disp);
  CHECK((out - s.data.surface.vertices()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(model.infer(Points::Zero(3, 3)), Error);
}

TEST_CASE("beta ramp is linear and monotone") {
  ModelConfig c;
  c.epochs = 11;
  CHECK(c.beta_at(0) == doctest::Approx(0.001));
  CHECK(c.beta_at(10) == doctest::Approx(20.0));
  for (int e = 1; e < 11; ++e) CHECK(c.beta_at(e) >= c.beta_at(e - 1));
  c.epochs = 1;
  CHECK(std::isfinite(c.beta_at(0)));
}

TEST_CASE("model config validation and key-value round trip") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.widths.clear();
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.k_interp = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.alpha = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  c.variant = Variant::no_cu;
  c.widths = {16, 24, 32};
  c.lr = 3e-4;
  const auto back = ModelConfig::from(c.to_key_values());
  CHECK(back.variant == Variant::no_cu);
  CHECK(back.widths == c.widths);
  CHECK(back.lr == c.lr);
  CHECK(back.to_key_values().str() == c.to_key_values().str());
  CHECK_THROWS_AS(ModelConfig::from(KeyValues::parse("depth = 3\n")), Error);
  CHECK_THROWS_AS(parse_variant("transposed"), Error);
}

TEST_CASE("overfitting one frame reaches a small error") {
  const auto& s = tiny_scene();
  auto cfg = tiny_model();
  cfg.pe_levels = 5;
  cfg.widths = {32, 32};
  cfg.weight_hidden = 16;
  cfg.recon_hidden = 64;
  cfg.epochs = 1500;
  cfg.beta_start = 0.0;
  cfg.beta_max = 0.0;
  Model model(cfg, s.data.surface, s.data.lattice, s.pre.table);
  const auto& frame = s.data.frames.frames[2];
  const auto log = model.train(s.data.frames, {frame.frame_id});
  REQUIRE(log.size() == 1500);
  CHECK(log.back().total < 0.05 * log.front().total);
  const Points pred = model.predict_displacement(frame.lr_disp);
  const double mean = (pred - *frame.hr_disp).rowwise().norm().mean();
  CHECK(mean < 0.005 * diagonal(s.data.surface.vertices()));
}

TEST_CASE("training is deterministic and checkpoints round trip") {
  const auto& s = tiny_scene();
  auto cfg = tiny_model();
  cfg.epochs = 4;
  cfg.batch_size = 2;
  cfg.checkpoint_every = 2;
  const auto dir = testing::scratch_dir("net");
  Model a(cfg, s.data.surface, s.data.lattice, s.pre.table);
  Model b(cfg, s.data.surface, s.data.lattice, s.pre.table);
  TrainOptions opts;
  opts.checkpoint_dir = dir / "ckpt";
  const auto la = a.train(s.data.frames, s.data.train_ids, opts);
  const auto lb = b.train(s.data.frames, s.data.train_ids);
  REQUIRE(la.size() == lb.size());
  for (std::size_t e = 0; e < la.size(); ++e) {
    CHECK(la[e].total == lb[e].total);
    CHECK(la[e].beta == doctest::Approx(cfg.beta_at(static_cast<int>(e))));
  }
  CHECK(std::filesystem::exists(dir / "ckpt" / "epoch_2.ssck"));
  CHECK(std::filesystem::exists(dir / "ckpt" / "epoch_4.ssck"));

  const auto& lr = s.data.frames.frames[4].lr_disp;
  const Points pa = a.infer(lr);
  CHECK((pa - a.infer(lr)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pa - b.infer(lr)).cwiseAbs().maxCoeff() == 0.0);

  a.save(dir / "m.ssck");
  Model c(cfg, s.data.surface, s.data.lattice, s.pre.table);
  c.load(dir / "m.ssck");
  CHECK((c.infer(lr) - pa).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.displacement_scale() == a.displacement_scale());

  write_loss_log(la, dir / "loss.csv");
  CHECK(std::filesystem::file_size(dir / "loss.csv") > 0);
}

TEST_CASE("epoch order is a seeded permutation") {
  const std::vector<std::uint32_t> ids{1, 4, 9, 16, 25, 36};
  const auto a = epoch_order(ids, 3, 0);
  CHECK(a == epoch_order(ids, 3, 0));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == ids);
  bool differs = false;
  for (int e = 1; e < 5; ++e) differs |= epoch_order(ids, 3, e) != a;
  CHECK(differs);
}

TEST_CASE("model rejects inconsistent tables") {
  const auto& s = tiny_scene();
  auto cfg = tiny_model();
  cfg.k_interp = 8;
  CHECK_THROWS_AS(Model(cfg, s.data.surface, s.data.lattice, s.pre.table), Error);
  cfg = tiny_model();
  cfg.k_graph = 100;
  CHECK_THROWS_AS(Model(cfg, s.data.surface, s.data.lattice, s.pre.table), Error);
}
