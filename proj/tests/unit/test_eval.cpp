#include "simsr/error.hpp"
#include "simsr/eval.hpp"
#include "simsr/pipeline.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <thread>

using namespace simsr;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("per-vertex error examples") {
  Points t = Points::Zero(3, 3);
  Points p = t;
  auto e = per_vertex_error(p, t);
  CHECK(e.errors.cwiseAbs().maxCoeff() == 0.0);
  p(2, 1) = 3.0;
  e = per_vertex_error(p, t);
  CHECK(e.errors(0) == 0.0);
  CHECK(e.errors(1) == 0.0);
  CHECK(e.errors(2) == 3.0);
  CHECK(e.mean == doctest::Approx(1.0));
  CHECK(e.max == 3.0);
  p = t;
  p.rowwise() += Eigen::RowVector3d(1.0, 2.0, 2.0);
  e = per_vertex_error(p, t);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(e.errors(j) == doctest::Approx(3.0));
  CHECK_THROWS_AS(per_vertex_error(Points::Zero(2, 3), t), Error);
}

TEST_CASE("per-vertex error is invariant under common translation") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    Points p(20, 3), t(20, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p.data()[i] = u(rng);
      t.data()[i] = u(rng);
    }
    const Eigen::RowVector3d shift(u(rng), u(rng), u(rng));
    Points ps = p, ts = t;
    ps.rowwise() += shift;
    ts.rowwise() += shift;
    CHECK((per_vertex_error(p, t).errors - per_vertex_error(ps, ts).errors).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("aggregate examples") {
  auto s = aggregate({1.0, 2.0, 3.0});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.median == 2.0);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.min == 1.0);
  CHECK(s.max == 3.0);
  s = aggregate({0.4, 0.4, 0.4, 0.4});
  CHECK(s.mean == doctest::Approx(0.4));
  CHECK(s.median == 0.4);
  CHECK(s.std == doctest::Approx(0.0));
  s = aggregate({0.7});
  CHECK(s.min == 0.7);
  CHECK(s.max == 0.7);
  CHECK(s.mean == 0.7);
  CHECK(aggregate({4.0, 1.0, 3.0, 2.0}).median == 2.5);
  CHECK_THROWS_AS(aggregate({}), Error);
  CHECK_THROWS_AS(aggregate({1.0, NAN}), Error);
}

TEST_CASE("aggregate ordering holds for random inputs") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    for (auto& x : v) x = u(rng);
    const auto s = aggregate(v);
    CHECK(s.min <= s.mean);
    CHECK(s.mean <= s.max);
    CHECK(s.min <= s.median);
    CHECK(s.median <= s.max);
    CHECK(s.std >= 0.0);
  }
}

TEST_CASE("error csv round trip is deterministic") {
  const auto dir = testing::scratch_dir("csv");
  const std::vector<FrameError> rows = {{3, "ours", 0.1}, {7, "rbf", 1.0 / 3.0}, {9, "no-fe", 2.5e-7}};
  write_error_csv(rows, dir / "a.csv");
  write_error_csv(rows, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv").rfind("frame_id,method,mean_error\n", 0) == 0);
  const auto back = read_error_csv(dir / "a.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].frame_id == rows[i].frame_id);
    CHECK(back[i].method == rows[i].method);
    CHECK(back[i].mean_error == rows[i].mean_error);
  }
  CHECK_THROWS_AS(write_error_csv({{1, "a,b", 0.0}}, dir / "c.csv"), Error);
}

TEST_CASE("heat colors") {
  CHECK(heat_color(0.0, 0.0) == Rgb{0, 0, 255});
  CHECK(heat_color(5.0, 0.0) == Rgb{0, 0, 255});
  CHECK(heat_color(0.0, 2.0) == Rgb{0, 0, 255});
  CHECK(heat_color(2.0, 2.0) == Rgb{255, 0, 0});
  CHECK(heat_color(1.0, 2.0) == Rgb{128, 0, 127});
}

TEST_CASE("heatmap export round trips") {
  const auto surface = testing::grid_surface(5, 4, 3.0);
  const auto dir = testing::scratch_dir("ply");
  const auto n = static_cast<Eigen::Index>(surface.vertex_count());
  Eigen::VectorXd values = Eigen::VectorXd::LinSpaced(n, 0.0, 1.9);
  export_heatmap(surface, values, dir / "h.ply");
  const auto mesh = read_heatmap(dir / "h.ply");
  REQUIRE(mesh.colors.size() == surface.vertex_count());
  CHECK(mesh.colors.back() == Rgb{255, 0, 0});
  CHECK(mesh.colors.front() == Rgb{0, 0, 255});
  for (Eigen::Index i = 0; i < n; ++i) CHECK(mesh.colors[static_cast<std::size_t>(i)] == heat_color(values(i), 1.9));
  CHECK((mesh.vertices - surface.vertices()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mesh.triangles == surface.triangles());

  export_heatmap(surface, Eigen::VectorXd::Zero(n), dir / "z.ply");
  for (const auto& c : read_heatmap(dir / "z.ply").colors) CHECK(c == Rgb{0, 0, 255});
  CHECK_THROWS_AS(export_heatmap(surface, Eigen::VectorXd::Zero(3), dir / "bad.ply"), Error);
  CHECK_THROWS_AS(export_heatmap(surface, values, dir / "missing" / "x.ply"), Error);
}

TEST_CASE("bench reports fps as the reciprocal mean") {
  std::size_t calls = 0;
  const auto r = bench(
      [&] {
        ++calls;
        std::this_thread::sleep_for(std::chrono::microseconds(200));
      },
      50, 5);
  CHECK(calls == 55);
  CHECK(r.runs == 50);
  CHECK(r.warmups == 5);
  CHECK(r.fps == doctest::Approx(1.0 / r.mean_seconds));
  CHECK(r.mean_seconds >= 2e-4);
  CHECK(r.min_seconds <= r.mean_seconds);
  CHECK(r.mean_seconds <= r.max_seconds);
  CHECK_THROWS_AS(bench([] {}, 0, 5), Error);
}

TEST_CASE("frame prediction and evaluation") {
  FrameSet truth;
  truth.lattice_vertices = 2;
  truth.surface_vertices = 3;
  for (std::uint32_t id : {4u, 5u}) {
    DisplacementFrame f;
    f.frame_id = id;
    f.lr_disp = Points::Constant(2, 3, id);
    f.hr_disp = Points::Constant(3, 3, 0.5 * id);
    truth.frames.push_back(f);
  }
  const auto same = evaluate_frames(truth, truth, "self");
  CHECK(summarize(same).mean == 0.0);
  const auto pred = predict_frames(truth, {5}, [](const Points& lr) { return Points::Constant(3, 3, lr(0, 0) / 2); });
  REQUIRE(pred.frames.size() == 1);
  CHECK(pred.frames[0].frame_id == 5);
  const auto rows = evaluate_frames(pred, truth, "half");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mean_error == 0.0);
  CHECK(rows[0].method == "half");
  CHECK_THROWS_AS(predict_frames(truth, {6}, [](const Points& lr) { return lr; }), Error);
  CHECK_THROWS_AS(predict_frames(truth, {4}, [](const Points& lr) { return lr; }), Error);
}
