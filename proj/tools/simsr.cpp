#include "simsr/baselines.hpp"
#include "simsr/datagen.hpp"
#include "simsr/error.hpp"
#include "simsr/eval.hpp"
#include "simsr/network.hpp"
#include "simsr/pipeline.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace simsr;

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".einn") == std::string::npos) s += ".0";
  return s;
}

struct Result {
  std::ostringstream line{"RESULT", std::ios::ate};
  template <typename T>
  Result& operator()(const std::string& key, const T& value) {
    line << ' ' << key << '=';
    if constexpr (std::is_floating_point_v<T>)
      line << num(value);
    else
      line << value;
    return *this;
  }
  ~Result() { std::cout << line.str() << std::endl; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

KeyValues with_overrides(const std::string& config, const std::vector<std::string>& sets) {
  KeyValues kv = config.empty() ? KeyValues{} : KeyValues::load(config);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::invalid_argument, "--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

fs::path table_path(const fs::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  if (m.table.empty()) throw Error(Errc::invalid_argument, manifest_path.string() + " has no table; run precompute");
  return m.table.is_absolute() ? m.table : manifest_path.parent_path() / m.table;
}

std::vector<std::uint32_t> split_ids(const Dataset& data, const std::string& split) {
  if (split == "test") return data.test_ids;
  if (split == "train") return data.train_ids;
  if (split == "all") {
    std::vector<std::uint32_t> ids;
    for (const auto& f : data.frames.frames) ids.push_back(f.frame_id);
    return ids;
  }
  throw Error(Errc::invalid_argument, "unknown split '" + split + "' (expected test, train or all)");
}

fs::path config_beside(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".cfg");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!(out << text)) throw Error(Errc::io_failure, "cannot write " + path.string());
}

void report_stats(Result& r, const ErrorStats& st) {
  r("mean", st.mean)("median", st.median)("std", st.std)("max", st.max)("min", st.min)("frames", st.frames);
}

Model load_model(const Dataset& data, const fs::path& manifest, const fs::path& checkpoint, std::string config) {
  if (config.empty()) config = config_beside(checkpoint).string();
  const auto mc = ModelConfig::from(KeyValues::load(config));
  Model model(mc, data.surface, data.lattice, read_table(table_path(manifest)));
  model.load(checkpoint);
  return model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned super-resolution of coarse lattice simulations onto a detailed surface"};
  app.require_subcommand(1);

  std::string manifest, out, config, checkpoint, split = "test", csv, log_path, input;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("datagen", "Generate a paired synthetic dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--config", config, "Generator config (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--set", sets, "Override a generator key (key=value)");
  std::optional<std::uint64_t> seed;
  gen->add_option("--seed", seed, "Generator seed (overrides the config)");

  std::size_t k = 20;
  auto* pre = app.add_subcommand("precompute", "Assign lattice vertices and build the geodesic neighbor table");
  pre->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  pre->add_option("-k,--k", k, "Neighbors per surface vertex")->check(CLI::PositiveNumber);
  pre->add_option("--out", out, "Table path (default: table.ssnt beside the manifest)");

  auto* train = app.add_subcommand("train", "Train the super-resolution network");
  train->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Checkpoint path; the config is written beside it as .cfg")->required();
  train->add_option("--config", config, "Model config (key = value)")->check(CLI::ExistingFile);
  train->add_option("--set", sets, "Override a model key (key=value)");
  train->add_option("--log", log_path, "Loss log CSV");
  std::string checkpoint_dir;
  train->add_option("--checkpoint-dir", checkpoint_dir, "Directory for periodic checkpoints");

  auto* infer = app.add_subcommand("infer", "Predict surface displacements");
  infer->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  infer->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--config", config, "Model config (default: .cfg beside the checkpoint)");
  infer->add_option("--input", input, "Frame container with LR inputs (default: the dataset frames)");
  infer->add_option("--split", split, "Frames to predict: test, train or all");
  infer->add_option("--out", out, "Prediction frame container")->required();

  std::string pred_path, target_path, method = "model", heatmap;
  auto* ev = app.add_subcommand("eval", "Compare predicted and target surface displacements");
  ev->add_option("--pred", pred_path, "Predicted frame container")->required()->check(CLI::ExistingFile);
  ev->add_option("--target", target_path, "Target frame container")->required()->check(CLI::ExistingFile);
  ev->add_option("--method", method, "Method label for the CSV");
  ev->add_option("--csv", csv, "Per-frame error CSV");
  ev->add_option("--heatmap", heatmap, "PLY heatmap of the first frame's errors (needs --manifest)");
  ev->add_option("--manifest", manifest, "Dataset manifest for the heatmap surface")->check(CLI::ExistingFile);

  double sigma = 0.0;
  int epochs = -1;
  bool trivariate = false;
  auto* base = app.add_subcommand("baseline", "Run a comparison method on the test frames");
  base->add_option("--method", method, "embedded | rbf | mls | bvae | no-fe | no-cu")
      ->required()
      ->check(CLI::IsMember({"embedded", "rbf", "mls", "bvae", "no-fe", "no-cu"}));
  base->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  base->add_option("--out", out, "Prediction frame container")->required();
  base->add_option("--csv", csv, "Per-frame error CSV");
  base->add_option("--sigma", sigma, "Kernel width in mm for rbf and mls (default: median spacing)");
  base->add_flag("--trivariate", trivariate, "Trivariate polynomial basis for mls");
  base->add_option("--epochs", epochs, "Training epochs for bvae, no-fe and no-cu");
  base->add_option("--config", config, "Model config for no-fe and no-cu")->check(CLI::ExistingFile);
  base->add_option("--set", sets, "Override a model key (key=value)");

  std::size_t runs = 50, warmups = 5;
  auto* bench_cmd = app.add_subcommand("bench", "Time per-frame inference");
  bench_cmd->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--config", config, "Model config (default: .cfg beside the checkpoint)");
  bench_cmd->add_option("--runs", runs, "Timed runs")->check(CLI::Range(50, 100000));
  bench_cmd->add_option("--warmups", warmups, "Untimed warmup runs")->check(CLI::Range(5, 100000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (*gen) {
      auto gc = GenConfig::from(with_overrides(config, sets));
      if (seed) gc.seed = *seed;
      const auto data = generate(gc);
      write_dataset(data, gc, out);
      Result()("manifest", (fs::path(out) / "manifest.json").string())("frames", data.frames.frames.size())(
          "train", data.train_ids.size())("test", data.test_ids.size())("lattice_vertices",
                                                                       data.lattice.vertex_count())(
          "surface_vertices", data.surface.vertex_count());
    } else if (*pre) {
      const fs::path mpath = manifest;
      auto m = read_manifest(mpath);
      const auto base_dir = mpath.parent_path();
      auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base_dir / p; };
      const auto surface = load_surface(resolve(m.surface));
      const auto lattice = load_lattice(resolve(m.lattice));
      const auto pc = precompute(surface, lattice, k);
      const fs::path table = out.empty() ? base_dir / "table.ssnt" : fs::path(out);
      write_table(pc.table, table);
      m.table = out.empty() ? fs::path("table.ssnt") : fs::absolute(table);
      write_manifest(m, mpath);
      Result()("table", table.string())("k", pc.table.k)("rows", pc.table.rows)("assignment_cost",
                                                                                pc.assignment.total_cost);
    } else if (*train) {
      const auto data = load_dataset(manifest);
      const auto mc = ModelConfig::from(with_overrides(config, sets));
      Model model(mc, data.surface, data.lattice, read_table(table_path(manifest)));
      TrainOptions opt;
      opt.checkpoint_dir = checkpoint_dir;
      opt.on_epoch = [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " total " << num(e.total) << " recon " << num(e.recon) << " normal "
                  << num(e.normal) << " reg " << num(e.reg) << " beta " << num(e.beta) << std::endl;
      };
      const auto log = model.train(data.frames, data.train_ids, opt);
      model.save(out);
      write_text(config_beside(out), mc.to_key_values().str());
      if (!log_path.empty()) write_loss_log(log, log_path);
      Result r;
      r("checkpoint", out)("epochs", log.size())("seconds", seconds_since(t0));
      if (!log.empty()) r("final_loss", log.back().total);
    } else if (*infer) {
      const auto data = load_dataset(manifest);
      const Model model = load_model(data, manifest, checkpoint, config);
      const FrameSet source = input.empty() ? data.frames : read_frames(input);
      std::vector<std::uint32_t> ids;
      if (input.empty())
        ids = split_ids(data, split);
      else
        for (const auto& f : source.frames) ids.push_back(f.frame_id);
      const auto pred =
          predict_frames(source, ids, [&](const Points& lr) { return model.predict_displacement(lr); });
      write_frames(pred, out);
      Result()("out", out)("frames", pred.frames.size())("seconds", seconds_since(t0));
    } else if (*ev) {
      const auto pred = read_frames(pred_path);
      const auto truth = read_frames(target_path);
      const auto rows = evaluate_frames(pred, truth, method);
      if (!csv.empty()) write_error_csv(rows, csv);
      if (!heatmap.empty()) {
        if (manifest.empty()) throw Error(Errc::invalid_argument, "--heatmap needs --manifest");
        const auto data = load_dataset(manifest);
        const auto id = rows.front().frame_id;
        export_heatmap(data.surface, per_vertex_error(*pred.find(id)->hr_disp, *truth.find(id)->hr_disp).errors,
                       heatmap);
      }
      Result r;
      r("method", method);
      report_stats(r, summarize(rows));
    } else if (*base) {
      const auto data = load_dataset(manifest);
      const auto& ids = data.test_ids;
      FrameSet pred;
      Result r;
      r("method", method);
      if (method == "embedded") {
        const auto w = embed_surface(data.surface, data.lattice);
        pred = predict_frames(data.frames, ids, [&](const Points& lr) { return embedded_predict(w, lr); });
      } else if (method == "rbf") {
        const auto pc = precompute(data.surface, data.lattice, 1);
        const RbfInterpolator rbf(mapped_geodesic_distances(data.surface, pc.assignment), pc.assignment, sigma);
        r("sigma", rbf.sigma())("rcond", rbf.rcond());
        pred = predict_frames(data.frames, ids, [&](const Points& lr) { return rbf.predict(lr); });
      } else if (method == "mls") {
        const auto table = read_table(table_path(manifest));
        MlsConfig mc;
        mc.sigma = sigma > 0 ? sigma : table_spacing(table);
        mc.trivariate = trivariate;
        r("sigma", mc.sigma);
        pred = predict_frames(data.frames, ids, [&](const Points& lr) {
          return mls_reconstruct(data.lattice, lr, data.surface, table, mc);
        });
      } else if (method == "bvae") {
        BetaVaeConfig vc;
        if (epochs >= 0) vc.epochs = epochs;
        BetaVae vae(vc, data.lattice.vertex_count(), data.surface.vertex_count());
        vae.train(data.frames, data.train_ids);
        pred = predict_frames(data.frames, ids, [&](const Points& lr) { return vae.predict(lr); });
      } else {
        auto kv = with_overrides(config, sets);
        kv.set("variant", method);
        if (epochs >= 0) kv.set("epochs", std::to_string(epochs));
        Model model(ModelConfig::from(kv), data.surface, data.lattice, read_table(table_path(manifest)));
        model.train(data.frames, data.train_ids);
        pred = predict_frames(data.frames, ids, [&](const Points& lr) { return model.predict_displacement(lr); });
      }
      write_frames(pred, out);
      const auto rows = evaluate_frames(pred, data.frames, method, ids);
      if (!csv.empty()) write_error_csv(rows, csv);
      report_stats(r, summarize(rows));
      r("seconds", seconds_since(t0));
    } else if (*bench_cmd) {
      const auto data = load_dataset(manifest);
      const Model model = load_model(data, manifest, checkpoint, config);
      if (data.test_ids.empty() && data.train_ids.empty()) throw Error(Errc::invalid_argument, "dataset has no frames");
      const auto id = data.test_ids.empty() ? data.train_ids.front() : data.test_ids.front();
      const Points& lr = data.frames.find(id)->lr_disp;
      const double setup = seconds_since(t0);
      const auto report = bench([&] { model.predict_displacement(lr); }, runs, warmups);
      Result()("runs", report.runs)("warmups", report.warmups)("mean_ms", report.mean_seconds * 1e3)(
          "std_ms", report.std_seconds * 1e3)("min_ms", report.min_seconds * 1e3)("max_ms", report.max_seconds * 1e3)(
          "fps", report.fps)("end_to_end_s", setup + report.mean_seconds);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
