#include "v2v_cli/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "v2v/gradcheck.hpp"
#include "v2v/metrics.hpp"
#include "v2v/parallel.hpp"
#include "v2v/refine.hpp"
#include "v2v/synth.hpp"
#include "v2v/train.hpp"

namespace v2v::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kRefinerFile = "refiner.v2v";

struct TrainFlags {
  std::string data;
  std::string run_dir;
  std::size_t grid = 32;
  double cube_mm = kHandCubeMm;
  double sigma = kDefaultSigma;
  double lr = kLearningRate;
  std::size_t batch = 8;
  std::size_t epochs = 10;
  std::size_t base_channels = 16;
  double init_std = kInitStd;
  std::string augment = "on";
  double aug_rot = 40.0;
  double aug_scale_min = 0.8;
  double aug_scale_max = 1.2;
  double aug_trans = 8.0;
  std::uint64_t seed = 1;
  std::string variant = "v2v";
  std::string refine = "on";
  std::size_t refine_epochs = 30;
  bool deterministic = false;
  std::size_t jobs = 0;
};

void add_model_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--grid-size", f.grid, "Input voxels per side")->check(CLI::PositiveNumber);
  app->add_option("--cube-mm", f.cube_mm, "Crop cube side (mm)")->check(CLI::PositiveNumber);
  app->add_option("--sigma", f.sigma, "Heatmap Gaussian std (heatmap voxels)")->check(CLI::PositiveNumber);
  app->add_option("--lr", f.lr, "RMSProp learning rate")->check(CLI::PositiveNumber);
  app->add_option("--batch", f.batch, "Mini-batch size")->check(CLI::Range(2, 4096));
  app->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  app->add_option("--base-channels", f.base_channels, "Channels of the front block")->check(CLI::PositiveNumber);
  app->add_option("--init-std", f.init_std, "Std of the Gaussian weight initialization")->check(CLI::PositiveNumber);
  app->add_option("--augment", f.augment, "Training-time augmentation")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--aug-rot", f.aug_rot, "Rotation range +/- (degrees)")->check(CLI::NonNegativeNumber);
  app->add_option("--aug-scale-min", f.aug_scale_min, "Lower scale bound")->check(CLI::PositiveNumber);
  app->add_option("--aug-scale-max", f.aug_scale_max, "Upper scale bound")->check(CLI::PositiveNumber);
  app->add_option("--aug-trans", f.aug_trans, "Translation range +/- (input voxels)")->check(CLI::NonNegativeNumber);
  app->add_flag("--deterministic", f.deterministic, "Single-threaded, bitwise-reproducible run");
  app->add_option("--jobs", f.jobs, "Worker threads (0: all cores)");
}

/// Every option of the subcommand, explicit or defaulted, with numbers and
/// booleans kept typed.
json flags_json(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_expected_min() == 0) {
      j[name] = opt->count() > 0;
      continue;
    }
    std::string text;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) text += (i ? "," : "") + res[i];
    } else {
      text = opt->get_default_str();
    }
    json parsed = json::parse(text, nullptr, false);
    j[name] = parsed.is_number() ? parsed : json(text);
  }
  return j;
}

/// Merges this subcommand's flags into <dir>/config.json under its name.
void record_config(const fs::path& dir, const CLI::App& app) {
  fs::create_directories(dir);
  const fs::path path = dir / "config.json";
  json config = json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    config = json::parse(in, nullptr, false);
    if (!config.is_object()) config = json::object();
  }
  config[app.get_name()] = flags_json(app);
  std::ofstream out(path, std::ios::binary);
  out << config.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void setup_threads(std::size_t jobs, bool deterministic) {
  if (deterministic) jobs = 1;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  configure_runtime(jobs);
}

TrainConfig train_config(const TrainFlags& f, std::size_t keypoints) {
  TrainConfig c;
  c.sample.net.input_grid = f.grid;
  c.sample.net.base_channels = f.base_channels;
  c.sample.net.keypoints = keypoints;
  c.sample.net.variant = variant_from_string(f.variant);
  c.sample.cube_mm = f.cube_mm;
  c.sample.sigma = f.sigma;
  c.optim.rmsprop.learning_rate = f.lr;
  c.optim.batch = f.batch;
  c.optim.epochs = f.epochs;
  c.optim.init_std = f.init_std;
  c.optim.seed = f.seed;
  c.optim.deterministic = f.deterministic;
  c.augment_enabled = f.augment == "on";
  c.augment = {-f.aug_rot, f.aug_rot, f.aug_scale_min, f.aug_scale_max, -f.aug_trans, f.aug_trans};
  c.validate();
  return c;
}

std::vector<std::string> joint_names(std::size_t n) {
  auto names = keypoint_names(HandModelSpec::default_hand());
  if (names.size() == n) return names;
  names.clear();
  for (std::size_t i = 0; i < n; ++i) names.push_back("joint" + std::to_string(i));
  return names;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<Point3> resolve_refs(const std::string& source, const fs::path& run_dir, const std::vector<Frame>& frames) {
  const bool have_refiner = !run_dir.empty() && fs::exists(run_dir / kRefinerFile);
  const std::string s = source == "auto" ? (have_refiner ? "refined" : "com") : source;
  if (s != "refined") return references(frames, ref_source_from_string(s));
  if (!have_refiner) throw std::invalid_argument("--ref refined needs " + (run_dir / kRefinerFile).string());
  Refiner r = load_refiner(run_dir / kRefinerFile);
  return refine_references(r.net, r.config, frames);
}

std::vector<KeypointSet> gt_of(const std::vector<Frame>& frames) {
  std::vector<KeypointSet> gt;
  for (const auto& f : frames) gt.push_back(f.keypoints);
  return gt;
}

void write_predictions_file(const fs::path& path, const std::vector<Frame>& frames,
                            const std::vector<KeypointSet>& pred) {
  std::vector<PredictionRecord> records;
  for (std::size_t i = 0; i < frames.size(); ++i) records.push_back({frames[i].id, pred[i]});
  std::ofstream out(path, std::ios::binary);
  write_predictions(out, records);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ---- synth ----

struct SynthFlags {
  std::string out_dir;
  std::size_t count = 100;
  bool clutter = false;
  std::uint64_t seed = 1;
  std::size_t jobs = 0;
};

void cmd_synth(const CLI::App& app, const SynthFlags& f, std::ostream& out) {
  setup_threads(f.jobs, false);
  SynthOptions o;
  o.count = f.count;
  o.clutter = f.clutter;
  o.seed = f.seed;
  const auto entries = generate_dataset(f.out_dir, o);
  record_config(f.out_dir, app);
  out << "wrote " << entries.size() << " frames to " << (fs::path(f.out_dir) / "manifest.jsonl").string() << '\n';
}

// ---- train ----

void train_run(const TrainFlags& f, const std::vector<Frame>& frames, const fs::path& dir, bool refine,
               std::ostream& out) {
  const TrainConfig config = train_config(f, frames.front().keypoints.size());
  if (refine) {
    RefineConfig rc;
    rc.cube_mm = f.cube_mm;
    rc.optim.seed = f.seed;
    rc.optim.epochs = f.refine_epochs;
    rc.optim.deterministic = f.deterministic;
    Network<float> rnet = build_refinement_net<float>(rc.net);
    train_refiner(rc, frames, rnet, [&](const EpochLog& e) {
      out << "refine epoch " << e.epoch << " loss " << fmt(e.mean_loss, 6) << '\n';
    });
    save_refiner(dir / kRefinerFile, rnet, rc);
  }
  Network<float> net = build_network<float>(config.sample.net);
  out << to_string(config.sample.net.variant) << " parameters " << net.parameter_count() << '\n';
  const TrainRun run = train(config, frames, net, dir, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << fmt(e.mean_loss, 6);
    if (!f.deterministic) out << " time " << fmt(e.wall_seconds, 1) << "s";
    out << std::endl;
  });
  out << "checkpoints " << run.checkpoints.size() << '\n';
}

void cmd_train(const CLI::App& app, const TrainFlags& f, std::ostream& out) {
  setup_threads(f.jobs, f.deterministic);
  train_config(f, 1);  // reject bad flags before touching the dataset
  const fs::path dir = f.run_dir;
  const auto frames = load_frames(f.data);
  record_config(dir, app);
  train_run(f, frames, dir, f.refine == "on", out);
}

// ---- eval ----

struct EvalFlags {
  std::string run_dir;
  std::string data;
  std::string checkpoint;
  std::string out_dir;
  std::string ref = "auto";
  bool ensemble = false;
  double map_radius = 100.0;
  std::string success = "max";
  std::size_t jobs = 0;
};

void cmd_eval(const CLI::App& app, const EvalFlags& f, std::ostream& out) {
  setup_threads(f.jobs, false);
  const fs::path run_dir = f.run_dir;
  const fs::path out_dir = f.out_dir.empty() ? run_dir : fs::path(f.out_dir);
  const auto checkpoints = list_checkpoints(run_dir);
  if (checkpoints.empty()) throw std::invalid_argument("no checkpoints in " + run_dir.string());
  const auto frames = load_frames(f.data);
  const auto refs = resolve_refs(f.ref, run_dir, frames);
  const auto gt = gt_of(frames);

  std::vector<KeypointSet> pred;
  std::ostringstream ensemble_csv;
  if (f.ensemble) {
    std::vector<std::vector<KeypointSet>> members;
    ensemble_csv << "checkpoint,mean_error_mm\n";
    double member_sum = 0.0;
    for (const auto& path : checkpoints) {
      Model m = load_model(path);
      members.push_back(predict(m.net, m.config.sample, frames, refs));
      const double e = mean_3d_error(members.back(), gt).overall;
      member_sum += e;
      ensemble_csv << path.filename().string() << ',' << fmt(e, 6) << '\n';
      out << path.filename().string() << " mean error " << fmt(e) << " mm\n";
    }
    pred = average_keypoints(members);
    const double ens = mean_3d_error(pred, gt).overall;
    ensemble_csv << "member_mean," << fmt(member_sum / members.size(), 6) << '\n' << "ensemble," << fmt(ens, 6) << '\n';
    out << "member mean " << fmt(member_sum / members.size()) << " mm, ensemble " << fmt(ens) << " mm\n";
  } else {
    const fs::path ck = f.checkpoint.empty() ? checkpoints.back() : fs::path(f.checkpoint);
    Model m = load_model(ck);
    pred = predict(m.net, m.config.sample, frames, refs);
  }

  const auto rule = f.success == "mean" ? SuccessRule::mean_joint : SuccessRule::max_joint;
  const MetricsReport report = evaluate(pred, gt, joint_names(gt.front().size()), f.map_radius, rule);
  fs::create_directories(out_dir);
  std::ostringstream metrics, curve;
  write_metrics_csv(metrics, report);
  write_curve_csv(curve, report);
  write_file(out_dir / "metrics.csv", metrics.str());
  write_file(out_dir / "curve.csv", curve.str());
  if (f.ensemble) write_file(out_dir / "ensemble.csv", ensemble_csv.str());
  write_predictions_file(out_dir / "predictions.txt", frames, pred);
  record_config(out_dir, app);
  out << format_table(report);
  out << "mean error " << fmt(report.error.overall) << " mm over " << frames.size() << " frames\n";
}

// ---- predict ----

struct PredictFlags {
  std::string run_dir;
  std::string checkpoint;
  std::string depth;
  std::string id;
  std::string ref = "auto";
  std::vector<double> ref_point;
  std::string out_file;
};

void cmd_predict(const CLI::App& app, const PredictFlags& f, std::ostream& out) {
  configure_runtime(1);
  if (f.run_dir.empty() && f.checkpoint.empty()) throw std::invalid_argument("predict needs --run or --checkpoint");
  const fs::path run_dir = f.run_dir;
  fs::path ck = f.checkpoint;
  if (ck.empty()) {
    const auto all = list_checkpoints(run_dir);
    if (all.empty()) throw std::invalid_argument("no checkpoints in " + run_dir.string());
    ck = all.back();
  }
  const DepthFrame df = read_depth_frame(f.depth);
  const std::string id = f.id.empty() ? fs::path(f.depth).stem().string() : f.id;
  const std::vector<Frame> frames{frame_from_depth(id, df)};
  std::vector<Point3> refs;
  if (!f.ref_point.empty()) {
    if (f.ref_point.size() != 3) throw std::invalid_argument("--ref-point takes x y z");
    refs.push_back({f.ref_point[0], f.ref_point[1], f.ref_point[2]});
  } else {
    if (f.ref == "gt") throw std::invalid_argument("a single depth frame carries no ground-truth reference");
    refs = resolve_refs(f.ref, run_dir, frames);
  }
  Model m = load_model(ck);
  const auto pred = predict(m.net, m.config.sample, frames, refs);
  const fs::path target = !f.out_file.empty() ? fs::path(f.out_file)
                          : run_dir.empty()   ? fs::path("predict-" + id + ".txt")
                                              : run_dir / ("predict-" + id + ".txt");
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_predictions_file(target, frames, pred);
  if (!run_dir.empty()) record_config(run_dir, app);
  out << "wrote " << target.string() << '\n';
}

// ---- gradcheck ----

struct GradcheckFlags {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  std::size_t coords = 50;
  double tolerance = 1e-4;
  double step = 1e-3;
  std::string stencil = "central4";
};

void cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  configure_runtime(1);
  GradcheckSuiteOptions o;
  o.seeds = f.seeds;
  o.base_seed = f.base_seed;
  o.network_coords = f.coords;
  o.step = f.step;
  o.stencil = f.stencil == "central2" ? Stencil::central2 : Stencil::central4;
  double worst = 0.0;
  std::vector<std::string> failed;
  gradcheck_suite(o, [&](const GradcheckCase& c) {
    const bool ok = c.report.passed(f.tolerance);
    if (!ok) failed.push_back(c.name);
    worst = std::max(worst, c.report.max_rel_error);
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %-4s max_rel_err=%.3e checked=%zu kinks=%zu worst=%s\n", c.name.c_str(),
                  ok ? "ok" : "FAIL", c.report.max_rel_error, c.report.checked, c.report.skipped_kinks,
                  c.report.worst.c_str());
    out << line << std::flush;
  });
  char line[128];
  std::snprintf(line, sizeof line, "max rel. err = %.3e (tolerance %.1e)\n", worst, f.tolerance);
  out << line;
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ",") + n;
    throw CheckFailed("gradient check failed: " + names);
  }
}

// ---- ablate ----

struct AblateFlags {
  TrainFlags train;
  std::string test;
  std::vector<std::uint64_t> seeds{1};
  std::string ref = "com";
};

void cmd_ablate(const CLI::App& app, AblateFlags& f, std::ostream& out) {
  setup_threads(f.train.jobs, f.train.deterministic);
  train_config(f.train, 1);
  const fs::path dir = f.train.run_dir;
  const auto train_frames = load_frames(f.train.data);
  const auto test_frames = load_frames(f.test);
  record_config(dir, app);
  const auto refs = references(test_frames, ref_source_from_string(f.ref));
  const auto gt = gt_of(test_frames);

  std::ostringstream csv;
  csv << "variant,seed,parameters,mean_error_mm\n";
  struct Row {
    std::size_t params = 0;
    std::vector<double> errors;
  };
  std::map<std::string, Row> rows;
  for (const std::uint64_t seed : f.seeds) {
    for (const std::string variant : {"v2v", "v2c"}) {
      TrainFlags tf = f.train;
      tf.seed = seed;
      tf.variant = variant;
      const fs::path sub = dir / (variant + "-seed" + std::to_string(seed));
      out << "== " << variant << " seed " << seed << '\n';
      train_run(tf, train_frames, sub, false, out);
      Model m = load_model(list_checkpoints(sub).back());
      const double e = mean_3d_error(predict(m.net, m.config.sample, test_frames, refs), gt).overall;
      const std::size_t params = m.net.parameter_count();
      rows[variant].params = params;
      rows[variant].errors.push_back(e);
      csv << variant << ',' << seed << ',' << params << ',' << fmt(e, 6) << '\n';
    }
  }
  write_file(dir / "ablation.csv", csv.str());
  std::ostringstream table;
  table << std::left << std::setw(8) << "variant" << std::right << std::setw(14) << "parameters" << std::setw(18)
        << "mean error (mm)" << '\n';
  for (const std::string variant : {"v2c", "v2v"}) {
    const Row& r = rows[variant];
    const double mean = std::accumulate(r.errors.begin(), r.errors.end(), 0.0) / r.errors.size();
    table << std::left << std::setw(8) << variant << std::right << std::setw(14) << r.params << std::setw(18)
          << fmt(mean, 2) << '\n';
  }
  write_file(dir / "ablation.txt", table.str());
  out << table.str();
}

std::string error_line(const std::string& kind, const std::string& message, int code) {
  return json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voxel-to-voxel 3D keypoint estimation from depth maps", "v2v"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic depth-hand dataset");
  synth->add_option("--out", sf.out_dir, "Dataset directory")->required();
  synth->add_option("--count", sf.count, "Number of frames")->check(CLI::PositiveNumber);
  synth->add_flag("--clutter", sf.clutter, "Add a distractor object beside the hand");
  synth->add_option("--seed", sf.seed, "Random seed");
  synth->add_option("--jobs", sf.jobs, "Worker threads (0: all cores)");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train a network on a dataset manifest");
  train_cmd->add_option("--data", tf.data, "Training manifest.jsonl")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--run", tf.run_dir, "Run directory")->required();
  add_model_flags(train_cmd, tf);
  train_cmd->add_option("--seed", tf.seed, "Random seed");
  train_cmd->add_option("--variant", tf.variant, "Output head")->check(CLI::IsMember({"v2v", "v2c"}));
  train_cmd->add_option("--refine", tf.refine, "Also train the reference-point refiner")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--refine-epochs", tf.refine_epochs, "Refiner training epochs")->check(CLI::PositiveNumber);

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Evaluate a run on a dataset manifest");
  eval->add_option("--run", ef.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--data", ef.data, "Evaluation manifest.jsonl")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ef.checkpoint, "Checkpoint to evaluate (default: last epoch)");
  eval->add_option("--out", ef.out_dir, "Output directory (default: the run directory)");
  eval->add_option("--ref", ef.ref, "Crop centers")->check(CLI::IsMember({"auto", "gt", "com", "refined"}));
  eval->add_flag("--ensemble", ef.ensemble, "Average the predictions of every per-epoch checkpoint");
  eval->add_option("--map-radius", ef.map_radius, "Detection radius for mAP (mm)")->check(CLI::PositiveNumber);
  eval->add_option("--success", ef.success, "Frame success rule")->check(CLI::IsMember({"max", "mean"}));
  eval->add_option("--jobs", ef.jobs, "Worker threads (0: all cores)");

  PredictFlags pf;
  auto* predict_cmd = app.add_subcommand("predict", "Predict keypoints for one depth frame");
  predict_cmd->add_option("--run", pf.run_dir, "Run directory (last checkpoint, refiner if present)");
  predict_cmd->add_option("--checkpoint", pf.checkpoint, "Checkpoint file");
  predict_cmd->add_option("--depth", pf.depth, "Depth frame (.v2vd)")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--id", pf.id, "Frame id written to the predictions file");
  predict_cmd->add_option("--ref", pf.ref, "Crop center")->check(CLI::IsMember({"auto", "com", "refined"}));
  predict_cmd->add_option("--ref-point", pf.ref_point, "Explicit crop center x y z (mm)")->expected(3);
  predict_cmd->add_option("--out", pf.out_file, "Predictions file (default: <run>/predict-<id>.txt)");

  GradcheckFlags gf;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer and network");
  gradcheck_cmd->add_option("--seeds", gf.seeds, "Random points per case")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--base-seed", gf.base_seed, "First seed");
  gradcheck_cmd->add_option("--coords", gf.coords, "Sampled coordinates per network tensor");
  gradcheck_cmd->add_option("--tolerance", gf.tolerance, "Maximum relative error")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--step", gf.step, "Finite-difference step")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--stencil", gf.stencil, "Difference stencil")
      ->check(CLI::IsMember({"central2", "central4"}));

  AblateFlags af;
  auto* ablate = app.add_subcommand("ablate", "Train v2v and v2c on the same data and seeds and compare");
  ablate->add_option("--data", af.train.data, "Training manifest.jsonl")->required()->check(CLI::ExistingFile);
  ablate->add_option("--test", af.test, "Test manifest.jsonl")->required()->check(CLI::ExistingFile);
  ablate->add_option("--run", af.train.run_dir, "Run directory")->required();
  add_model_flags(ablate, af.train);
  ablate->add_option("--seeds", af.seeds, "Seeds; each trains both variants")->expected(1, 64);
  ablate->add_option("--ref", af.ref, "Crop centers")->check(CLI::IsMember({"gt", "com"}));

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what(), kUsage) << '\n';
    return kUsage;
  }

  try {
    if (synth->parsed()) cmd_synth(*synth, sf, out);
    if (train_cmd->parsed()) cmd_train(*train_cmd, tf, out);
    if (eval->parsed()) cmd_eval(*eval, ef, out);
    if (predict_cmd->parsed()) cmd_predict(*predict_cmd, pf, out);
    if (gradcheck_cmd->parsed()) cmd_gradcheck(gf, out);
    if (ablate->parsed()) cmd_ablate(*ablate, af, out);
  } catch (const CheckFailed& e) {
    err << error_line("check_failed", e.what(), kCheckFailed) << '\n';
    return kCheckFailed;
  } catch (const NumericError& e) {
    err << error_line("numeric", e.what(), kNumeric) << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << error_line("invalid_argument", e.what(), kInvalidArgument) << '\n';
    return kInvalidArgument;
  } catch (const fs::filesystem_error& e) {
    err << error_line("io", e.what(), kIo) << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << error_line("runtime", e.what(), kFailure) << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace v2v::cli
