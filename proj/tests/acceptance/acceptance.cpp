// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "v2v/gradcheck.hpp"
#include "v2v/heatmap.hpp"
#include "v2v/metrics.hpp"
#include "v2v/ops.hpp"
#include "v2v/optimizer.hpp"
#include "v2v/parallel.hpp"
#include "v2v/refine.hpp"
#include "v2v/synth.hpp"
#include "v2v/train.hpp"

namespace fs = std::filesystem;
using namespace v2v;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Criterion 4 is the full desk setting. 5 and 6 train several networks each,
// so they use fewer frames, and 5 also a narrower network.
struct Protocol {
  std::size_t train_count, test_count;
  std::uint64_t train_seed, test_seed;
  bool clutter;
  std::size_t grid, base_channels, epochs;
};

constexpr Protocol kDesk{2000, 200, 11, 12, false, 32, 16, 10};
constexpr Protocol kAblation{600, 100, 21, 22, false, 32, 8, 10};
constexpr Protocol kClutter{1000, 100, 31, 32, true, 32, 16, 10};
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct Data {
  std::vector<Frame> train, test;
};

std::vector<Frame> dataset(const fs::path& dir, std::size_t count, std::uint64_t seed, bool clutter) {
  const fs::path manifest = dir / "manifest.jsonl";
  if (!fs::exists(manifest)) {
    SynthOptions o;
    o.count = count;
    o.seed = seed;
    o.clutter = clutter;
    generate_dataset(dir, o);
  }
  return load_frames(manifest);
}

Data load(const fs::path& work, const char* name, const Protocol& p) {
  const fs::path root = work / name;
  return {dataset(root / "train", p.train_count, p.train_seed, p.clutter),
          dataset(root / "test", p.test_count, p.test_seed, p.clutter)};
}

TrainConfig config_for(const Protocol& p, Variant v, std::uint64_t seed) {
  TrainConfig c;
  c.sample.net.input_grid = p.grid;
  c.sample.net.base_channels = p.base_channels;
  c.sample.net.variant = v;
  c.optim.epochs = p.epochs;
  c.optim.seed = seed;
  c.optim.deterministic = true;
  return c;
}

std::vector<KeypointSet> ground_truth(const std::vector<Frame>& frames) {
  std::vector<KeypointSet> gt;
  for (const auto& f : frames) gt.push_back(f.keypoints);
  return gt;
}

double mean_error(const std::vector<KeypointSet>& pred, const std::vector<Frame>& frames) {
  return mean_3d_error(pred, ground_truth(frames)).overall;
}

double mean_ref_error(const std::vector<Point3>& refs, const std::vector<Frame>& frames) {
  double s = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) s += (refs[i] - frames[i].gt_ref).norm();
  return s / static_cast<double>(frames.size());
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  std::size_t cases = 0;
  bool ok = true;
  for (const auto& c : gradcheck_suite()) {
    ++cases;
    ok = ok && c.report.max_rel_error < 1e-4 && c.seeds >= 20 && c.report.checked > 0;
    if (c.report.max_rel_error >= worst) {
      worst = c.report.max_rel_error;
      worst_case = c.name + " " + c.report.worst;
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 300.0;
  return {ok, fmt("%zu layer/network cases x 20 seeds, max rel. err %.3g at %s, %.0f s (limits 1e-4, 300 s)", cases,
                  worst, worst_case.c_str(), secs)};
}

double scalar_gaussian(const Eigen::Vector3d& cell, const Eigen::Vector3d& peak, double sigma) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) d2 += (cell[a] - peak[a]) * (cell[a] - peak[a]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

Outcome heatmap_fidelity() {
  std::mt19937_64 rng(2024);
  const std::size_t G = 16, N = 16;
  const CubicCrop crop{{30.0, -12.0, 650.0}, 300.0, 32};
  std::uniform_real_distribution<double> off(-145.0, 145.0);
  KeypointSet kps;
  for (std::size_t n = 0; n < N; ++n) kps.push_back(crop.center + Point3{off(rng), off(rng), off(rng)});
  const HeatmapVolume vol = encode(kps, crop, HeatmapSpec{1.7, G, N});
  std::uniform_int_distribution<std::size_t> cell(0, G - 1), kp(0, N - 1);
  double enc_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = kp(rng), i = cell(rng), j = cell(rng), k = cell(rng);
    const double ref = scalar_gaussian(Eigen::Vector3d(i, j, k), heatmap_coordinate(kps[n], crop, G), 1.7);
    enc_err = std::max(enc_err, std::abs(vol.at(n, i, j, k) - ref));
  }

  const CubicCrop unit{{0.0, 0.0, 0.0}, 160.0, 32};
  const Point3 p = voxel_to_world(Eigen::Vector3d{7.0, 8.0, 9.0}, unit, G);
  const HeatmapVolume one = encode({p}, unit, HeatmapSpec{1.7, G, 1});
  const double face = one.at(0, 8, 8, 9), corner = one.at(0, 8, 9, 10);
  const double nb_err = std::max(std::abs(face - std::exp(-1.0 / (2 * 1.7 * 1.7))),
                                 std::abs(corner - std::exp(-3.0 / (2 * 1.7 * 1.7))));
  const bool printed = std::abs(face - 0.8411) < 5e-5 && std::abs(corner - 0.5951) < 5e-5;

  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> pred({2, 4, 5, 5, 5}), target({2, 4, 5, 5, 5});
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = g(rng), target[i] = g(rng);
  const auto loss = mse_loss(pred, target);
  double brute = 0.0, grad_err = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    brute += d * d;
    grad_err = std::max(grad_err, std::abs(loss.grad[i] - 2.0 * d));
  }
  const double loss_err = std::abs(loss.loss - brute);

  const bool ok = enc_err <= 1e-7 && nb_err <= 1e-7 && printed && loss_err <= 1e-9 && grad_err <= 1e-9;
  return {ok, fmt("encode max |diff| %.2e over 1000 cells, neighbors %.4f/%.4f (|diff| %.1e), mse |diff| %.1e, grad "
                  "|diff| %.1e",
                  enc_err, face, corner, nb_err, loss_err, grad_err)};
}

Outcome geometry_round_trips() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pix(0.0, 640.0), dep(100.0, 3000.0), c(-500.0, 500.0), f(-0.5, 31.5),
      in(-149.9, 149.9);
  const CameraIntrinsics k{475.0, 480.0, 315.5, 245.25};
  double pin = 0.0, warp = 0.0, decode_ratio = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double u = pix(rng), v = pix(rng), d = dep(rng);
    const PixelDepth q = project(reproject_pixel(u, v, d, k), k);
    pin = std::max({pin, std::abs(q.u - u), std::abs(q.v - v), std::abs(q.depth - d)});

    const CubicCrop crop{{c(rng), c(rng), 700.0 + c(rng)}, 300.0, 32};
    const Eigen::Vector3d vox{f(rng), f(rng), f(rng)};
    warp = std::max(warp, (world_to_voxel(voxel_to_world(vox, crop), crop) - vox).cwiseAbs().maxCoeff());
    const Point3 p = crop.center + Point3{in(rng), in(rng), in(rng)};
    warp = std::max(warp, (voxel_to_world(world_to_voxel(p, crop), crop) - p).cwiseAbs().maxCoeff());

    const std::size_t G = crop.grid_size / 2;
    const auto r = decode(encode({p}, crop, HeatmapSpec{1.7, G, 1}), crop);
    const double half = crop.side / static_cast<double>(G) / 2.0;
    decode_ratio = std::max(decode_ratio, (r.keypoints[0] - p).cwiseAbs().maxCoeff() / half);
  }
  const bool ok = pin <= 1e-6 && warp <= 1e-6 && decode_ratio <= 1.0 + 1e-9;
  return {ok, fmt("pinhole %.1e, voxel<->world %.1e, decode(encode) max %.3f half-voxels over 1000 keypoints", pin, warp,
                  decode_ratio)};
}

Outcome desk_training(const fs::path& work) {
  const Data d = load(work, "desk", kDesk);
  const TrainConfig cfg = config_for(kDesk, Variant::v2v, 1);
  const auto refs = references(d.test, RefSource::gt);

  auto untrained = build_network<float>(cfg.sample.net);
  std::mt19937_64 init_rng(cfg.optim.seed);
  init_weights(untrained, cfg.optim.init_std, init_rng);
  const double before = mean_error(predict(untrained, cfg.sample, d.test, refs), d.test);

  auto net = build_network<float>(cfg.sample.net);
  const auto t0 = Clock::now();
  const TrainRun run = train(cfg, d.train, net, work / "desk" / "run");
  const double secs = seconds_since(t0);
  const double after = mean_error(predict(net, cfg.sample, d.test, refs), d.test);

  const double voxel = cfg.sample.cube_mm / static_cast<double>(cfg.sample.net.input_grid);
  const bool ok = after <= 2.0 * voxel && after <= 0.25 * before && secs <= 45.0 * 60.0;
  return {ok, fmt("held-out error %.2f mm (limit %.2f), untrained %.2f mm (ratio %.3f, limit 0.25), training %.0f s "
                  "(limit 2700), final loss %.3f",
                  after, 2.0 * voxel, before, after / before, secs, run.log.back().mean_loss)};
}

Outcome variant_ordering(const fs::path& work) {
  const Data d = load(work, "ablation", kAblation);
  const auto refs = references(d.test, RefSource::com);
  bool ok = true;
  std::string detail;
  std::size_t params[2] = {0, 0};
  for (std::uint64_t seed : kSeeds) {
    double err[2];
    for (int v = 0; v < 2; ++v) {
      const TrainConfig cfg = config_for(kAblation, v == 0 ? Variant::v2v : Variant::v2c, seed);
      auto net = build_network<float>(cfg.sample.net);
      params[v] = net.parameter_count();
      train(cfg, d.train, net);
      err[v] = mean_error(predict(net, cfg.sample, d.test, refs), d.test);
    }
    ok = ok && err[0] < err[1];
    detail += fmt("seed %llu v2v %.2f / v2c %.2f mm; ", static_cast<unsigned long long>(seed), err[0], err[1]);
  }
  ok = ok && params[0] < params[1];
  return {ok, detail + fmt("parameters v2v %zu / v2c %zu", params[0], params[1])};
}

Outcome clutter_refinement(const fs::path& work) {
  const Data d = load(work, "clutter", kClutter);

  RefineConfig rc;
  auto refiner = build_refinement_net<float>(rc.net);
  train_refiner(rc, d.train, refiner);
  const auto com = references(d.test, RefSource::com);
  const auto refined = refine_references(refiner, rc, d.test);
  const double com_err = mean_ref_error(com, d.test), ref_err = mean_ref_error(refined, d.test);
  bool ok = ref_err <= 0.8 * com_err;
  std::string detail = fmt("reference error com %.2f -> refined %.2f mm (ratio %.3f, limit 0.8); ", com_err, ref_err,
                           ref_err / com_err);

  const auto gt = ground_truth(d.test);
  std::size_t ensemble_wins = 0;
  bool bound = true;
  for (std::uint64_t seed : kSeeds) {
    const TrainConfig cfg = config_for(kClutter, Variant::v2v, seed);
    auto net = build_network<float>(cfg.sample.net);
    const fs::path dir = work / "clutter" / ("seed" + std::to_string(seed));
    const TrainRun run = train(cfg, d.train, net, dir);

    const double pose_com = mean_error(predict(net, cfg.sample, d.test, com), d.test);
    const double pose_ref = mean_error(predict(net, cfg.sample, d.test, refined), d.test);
    ok = ok && pose_ref < pose_com;

    std::vector<std::vector<KeypointSet>> members;
    for (const auto& p : run.checkpoints) {
      Model m = load_model(p);
      members.push_back(predict(m.net, m.config.sample, d.test, refined));
    }
    const auto ens = average_keypoints(members);
    const auto ens_err = joint_errors(ens, gt);
    std::vector<std::vector<std::vector<double>>> member_err;
    for (const auto& m : members) member_err.push_back(joint_errors(m, gt));
    for (std::size_t i = 0; i < gt.size(); ++i) {
      double e = 0.0, mean = 0.0;
      for (std::size_t j = 0; j < gt[i].size(); ++j) {
        e += ens_err[i][j];
        for (const auto& me : member_err) mean += me[i][j];
      }
      bound = bound && e <= mean / static_cast<double>(members.size()) + 1e-9;
    }
    const double ens_mean = mean_3d_error(ens, gt).overall, last = mean_3d_error(members.back(), gt).overall;
    if (ens_mean < last) ++ensemble_wins;
    detail += fmt("seed %llu pose com %.2f -> refined %.2f, final epoch %.2f -> ensemble %.2f mm; ",
                  static_cast<unsigned long long>(seed), pose_com, pose_ref, last, ens_mean);
  }
  ok = ok && bound && ensemble_wins >= 2;
  return {ok, detail + fmt("ensemble <= member mean on every frame: %s, ensemble beats final epoch in %zu/3 seeds",
                           bound ? "yes" : "no", ensemble_wins)};
}

double brute_distance(const Point3& a, const Point3& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

Outcome metric_oracles() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> pos(0.0, 200.0), err(0.0, 30.0);
  const std::size_t F = 100, J = 16;
  std::vector<KeypointSet> pred(F), gt(F);
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const Point3 q{pos(rng), pos(rng), 700.0 + pos(rng)};
      gt[i].push_back(q);
      pred[i].push_back(q + Point3{err(rng), err(rng), err(rng)});
    }

  double mean_dev = 0.0, total = 0.0;
  std::vector<double> per(J, 0.0);
  for (std::size_t i = 0; i < F; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double d = brute_distance(pred[i][j], gt[i][j]);
      total += d;
      per[j] += d;
    }
  const auto m = mean_3d_error(pred, gt);
  mean_dev = std::abs(m.overall - total / (F * J));
  for (std::size_t j = 0; j < J; ++j) mean_dev = std::max(mean_dev, std::abs(m.per_joint[j] - per[j] / F));

  const auto thr = threshold_range(80.0, 1.0);
  const auto curve = success_frame_curve(pred, gt, thr);
  double curve_dev = 0.0;
  bool monotone = true;
  for (std::size_t t = 0; t < thr.size(); ++t) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < F; ++i) {
      double worst = 0.0;
      for (std::size_t j = 0; j < J; ++j) worst = std::max(worst, brute_distance(pred[i][j], gt[i][j]));
      ok += worst < thr[t];
    }
    curve_dev = std::max(curve_dev, std::abs(curve[t] - static_cast<double>(ok) / F));
    if (t > 0 && curve[t] < curve[t - 1]) monotone = false;
  }

  const auto mp = map_at_threshold(pred, gt, 100.0);
  double map_dev = 0.0, map_mean = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < F; ++i) hit += brute_distance(pred[i][j], gt[i][j]) < 100.0;
    map_dev = std::max(map_dev, std::abs(mp.per_joint[j] - static_cast<double>(hit) / F));
    map_mean += static_cast<double>(hit) / F;
  }
  map_dev = std::max(map_dev, std::abs(mp.mean - map_mean / J));

  const double two_joint = map_at_threshold({{{50, 0, 0}, {0, 150, 0}}}, {{{0, 0, 0}, {0, 0, 0}}}, 100.0).mean;
  const bool ok = mean_dev <= 1e-9 && curve_dev <= 1e-9 && map_dev <= 1e-9 && monotone && two_joint == 0.5;
  return {ok, fmt("mean error |diff| %.1e, success curve |diff| %.1e (monotone %s), mAP |diff| %.1e, two-joint mAP %g",
                  mean_dev, curve_dev, monotone ? "yes" : "no", map_dev, two_joint)};
}

Outcome overfit(const fs::path& work) {
  std::vector<Frame> frames = load(work, "desk", kDesk).train;
  frames.resize(10);
  TrainConfig cfg = config_for(kDesk, Variant::v2v, 5);
  cfg.optim.epochs = 200;
  cfg.optim.batch = 2;
  cfg.augment_enabled = false;
  auto net = build_network<float>(cfg.sample.net);
  train(cfg, frames, net);
  const auto pred = predict(net, cfg.sample, frames, references(frames, RefSource::gt));
  const auto gt = ground_truth(frames);
  const double voxel = cfg.sample.cube_mm / static_cast<double>(cfg.sample.net.input_grid);
  // Per-keypoint error is the worst axis, as in the decode(encode) bound.
  double axis_mean = 0.0, worst_frame = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    double frame = 0.0;
    for (std::size_t j = 0; j < gt[i].size(); ++j) frame += (pred[i][j] - gt[i][j]).cwiseAbs().maxCoeff() / voxel;
    frame /= static_cast<double>(gt[i].size());
    axis_mean += frame / static_cast<double>(frames.size());
    worst_frame = std::max(worst_frame, frame);
  }
  return {axis_mean < 1.0, fmt("mean worst-axis decode error %.3f input voxels (limit 1), worst frame %.3f, "
                               "Euclidean %.2f mm",
                               axis_mean, worst_frame, mean_3d_error(pred, gt).overall)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work) {
  std::vector<Frame> frames = load(work, "desk", kDesk).train;
  frames.resize(24);
  TrainConfig cfg = config_for(kDesk, Variant::v2v, 9);
  cfg.sample.net.base_channels = 4;
  cfg.optim.epochs = 3;
  const auto refs = references(frames, RefSource::com);
  const auto prediction_text = [&](Network<float>& net, const SampleSpec& spec) {
    std::ostringstream out;
    std::vector<PredictionRecord> recs;
    const auto kps = predict(net, spec, frames, refs);
    for (std::size_t i = 0; i < frames.size(); ++i) recs.push_back({frames[i].id, kps[i]});
    write_predictions(out, recs);
    return out.str();
  };
  std::vector<std::string> bytes[2];
  bool round_trip = true;
  for (int r = 0; r < 2; ++r) {
    const fs::path dir = work / "determinism" / ("repeat" + std::to_string(r));
    fs::remove_all(dir);
    auto net = build_network<float>(cfg.sample.net);
    const TrainRun run = train(cfg, frames, net, dir);
    for (const auto& p : run.checkpoints) {
      const std::string raw = slurp(p);
      bytes[r].push_back(raw);
      const fs::path copy = dir / "resaved.v2v";
      Checkpoint::deserialize(raw).save(copy);
      round_trip = round_trip && Checkpoint::load(p).serialize() == raw && slurp(copy) == raw;
    }
    bytes[r].push_back(slurp(dir / "train_log.csv"));
    bytes[r].push_back(prediction_text(net, cfg.sample));
    Model m = load_model(run.checkpoints.back());
    round_trip = round_trip && prediction_text(m.net, m.config.sample) == bytes[r].back();
  }
  const bool identical = bytes[0] == bytes[1];
  return {identical && round_trip, fmt("%zu artifacts byte-identical across repeats: %s; checkpoints round-trip "
                                       "bitwise and reload to identical predictions: %s",
                                       bytes[0].size(), identical ? "yes" : "no", round_trip ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"v2v acceptance suite"};
  fs::path work = fs::temp_directory_path() / "v2v_acceptance";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Datasets and run artifacts");
  app.add_option("--only", only, "Run just these criteria")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  configure_runtime(1);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"heatmap and loss fidelity", heatmap_fidelity},
      {"geometry round trips", geometry_round_trips},
      {"desk training", [&] { return desk_training(work); }},
      {"v2v beats v2c", [&] { return variant_ordering(work); }},
      {"reference refinement and epoch ensemble", [&] { return clutter_refinement(work); }},
      {"metric oracles", metric_oracles},
      {"overfit sanity", [&] { return overfit(work); }},
      {"determinism", [&] { return determinism(work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first << "] "
              << o.detail << fmt(" (%.0f s)", seconds_since(t0)) << std::endl;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
