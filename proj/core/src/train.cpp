#include "v2v/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "kv_text.hpp"

namespace v2v {

void OptimConfig::validate() const {
  if (!(rmsprop.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(rmsprop.alpha > 0.0 && rmsprop.alpha < 1.0)) throw std::invalid_argument("train: rmsprop alpha must be in (0, 1)");
  if (!(rmsprop.epsilon >= 0.0)) throw std::invalid_argument("train: rmsprop epsilon must be nonnegative");
  if (batch < 2) throw std::invalid_argument("train: batch size must be at least 2 (batch normalization)");
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (!(init_std > 0.0)) throw std::invalid_argument("train: init std must be positive");
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1));
}

std::vector<EpochLog> fit(Network<float>& net, RmsProp<float>& optimizer, std::size_t n, const OptimConfig& cfg,
                          const BatchFn& make_batch, const EpochFn& on_epoch) {
  cfg.validate();
  if (n == 0) throw std::invalid_argument("train: dataset is empty");
  std::vector<EpochLog> log;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t end = std::min(n, start + cfg.batch);
      if (end - start < 2) break;
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      auto [input, target] = make_batch(idx, epoch);
      net.zero_grad();
      Tensor<float> out = net.forward(input, Mode::train);
      LossResult<float> loss = mse_loss(out, target);
      const double bsz = static_cast<double>(idx.size());
      for (auto& g : loss.grad.data()) g = static_cast<float>(g / bsz);
      if (!std::isfinite(loss.loss)) {
        throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch + 1) + " at sample offset " +
                           std::to_string(start));
      }
      net.backward(loss.grad);
      try {
        optimizer.step(net);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch + 1) + " aborted: " + e.what());
      }
      loss_sum += loss.loss;
      samples += idx.size();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back({epoch + 1, samples ? loss_sum / static_cast<double>(samples) : 0.0, secs});
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

void TrainConfig::validate() const {
  optim.validate();
  sample.net.validate();
  augment.validate();
  if (!(sample.cube_mm > 0.0)) throw std::invalid_argument("train: cube size must be positive");
  if (!(sample.sigma > 0.0)) throw std::invalid_argument("train: sigma must be positive");
}

std::string TrainConfig::to_text() const {
  using detail::fmt_double;
  std::ostringstream os;
  os << "cube_mm=" << fmt_double(sample.cube_mm) << "\n"
     << "sigma=" << fmt_double(sample.sigma) << "\n"
     << "lr=" << fmt_double(optim.rmsprop.learning_rate) << "\n"
     << "rmsprop_alpha=" << fmt_double(optim.rmsprop.alpha) << "\n"
     << "rmsprop_epsilon=" << fmt_double(optim.rmsprop.epsilon) << "\n"
     << "batch=" << optim.batch << "\n"
     << "epochs=" << optim.epochs << "\n"
     << "init_std=" << fmt_double(optim.init_std) << "\n"
     << "seed=" << optim.seed << "\n"
     << "deterministic=" << (optim.deterministic ? 1 : 0) << "\n"
     << "augment=" << (augment_enabled ? 1 : 0) << "\n"
     << "aug_rot_min=" << fmt_double(augment.rot_min_deg) << "\n"
     << "aug_rot_max=" << fmt_double(augment.rot_max_deg) << "\n"
     << "aug_scale_min=" << fmt_double(augment.scale_min) << "\n"
     << "aug_scale_max=" << fmt_double(augment.scale_max) << "\n"
     << "aug_trans_min=" << fmt_double(augment.trans_min_vox) << "\n"
     << "aug_trans_max=" << fmt_double(augment.trans_max_vox) << "\n"
     << "train_ref=" << to_string(train_ref) << "\n";
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text, const NetworkConfig& net) {
  using namespace detail;
  const auto kv = parse_kv(text);
  TrainConfig c;
  c.sample.net = net;
  c.sample.cube_mm = get_double(kv, "cube_mm", c.sample.cube_mm);
  c.sample.sigma = get_double(kv, "sigma", c.sample.sigma);
  c.optim.rmsprop.learning_rate = get_double(kv, "lr", c.optim.rmsprop.learning_rate);
  c.optim.rmsprop.alpha = get_double(kv, "rmsprop_alpha", c.optim.rmsprop.alpha);
  c.optim.rmsprop.epsilon = get_double(kv, "rmsprop_epsilon", c.optim.rmsprop.epsilon);
  c.optim.batch = get_size(kv, "batch", c.optim.batch);
  c.optim.epochs = get_size(kv, "epochs", c.optim.epochs);
  c.optim.init_std = get_double(kv, "init_std", c.optim.init_std);
  c.optim.seed = std::stoull(get_string(kv, "seed", "1"));
  c.optim.deterministic = get_size(kv, "deterministic", 0) != 0;
  c.augment_enabled = get_size(kv, "augment", 1) != 0;
  c.augment.rot_min_deg = get_double(kv, "aug_rot_min", c.augment.rot_min_deg);
  c.augment.rot_max_deg = get_double(kv, "aug_rot_max", c.augment.rot_max_deg);
  c.augment.scale_min = get_double(kv, "aug_scale_min", c.augment.scale_min);
  c.augment.scale_max = get_double(kv, "aug_scale_max", c.augment.scale_max);
  c.augment.trans_min_vox = get_double(kv, "aug_trans_min", c.augment.trans_min_vox);
  c.augment.trans_max_vox = get_double(kv, "aug_trans_max", c.augment.trans_max_vox);
  c.train_ref = ref_source_from_string(get_string(kv, "train_ref", "gt"));
  return c;
}

std::string checkpoint_name(std::size_t epoch) { return "ckpt-epoch-" + std::to_string(epoch) + ".v2v"; }

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
  static const std::regex pattern(R"(ckpt-epoch-(\d+)\.v2v)");
  std::vector<std::pair<std::size_t, std::filesystem::path>> found;
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoull(m[1].str()), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

Checkpoint make_checkpoint(Network<float>& net, const TrainConfig& config, std::size_t epoch,
                           const RmsProp<float>* optimizer) {
  Checkpoint ck;
  ck.put_text("meta.kind", net.kind());
  ck.put_text("meta.config", net.config_text());
  ck.put_text("meta.train", config.to_text());
  ck.put_text("meta.epoch", std::to_string(epoch));
  for (auto& [name, t] : net.state()) ck.put(name, t);
  if (optimizer) optimizer->save_to(ck);
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  auto kind = ck.text("meta.kind");
  auto cfg = ck.text("meta.config");
  if (!kind || !cfg) throw std::runtime_error("checkpoint has no network record");
  Network<float> net = build_from_record<float>(*kind, *cfg);
  std::map<std::string, Tensor<float>> state;
  for (const auto& e : ck.entries()) state.emplace(e.name, e.tensor);
  net.load_state(state);
  const NetworkConfig nc = *kind == "refine" ? NetworkConfig{} : NetworkConfig::from_text(*cfg);
  TrainConfig tc = TrainConfig::from_text(ck.text("meta.train").value_or(""), nc);
  const std::size_t epoch = std::stoull(ck.text("meta.epoch").value_or("0"));
  return Model{std::move(net), tc, epoch};
}

Model load_model(const std::filesystem::path& path) { return model_from_checkpoint(Checkpoint::load(path)); }

TrainRun train(const TrainConfig& config, const std::vector<Frame>& frames, Network<float>& net,
               const std::filesystem::path& out_dir, const EpochFn& on_epoch) {
  config.validate();
  if (frames.empty()) throw std::invalid_argument("train: dataset is empty");
  std::mt19937_64 init_rng(config.optim.seed);
  init_weights(net, config.optim.init_std, init_rng);
  RmsProp<float> optimizer(config.optim.rmsprop);
  const auto refs = references(frames, config.train_ref);
  const AugmentSpec* aug = config.augment_enabled ? &config.augment : nullptr;

  BatchFn make_batch = [&](const std::vector<std::size_t>& idx, std::size_t epoch) {
    std::vector<Point3> r;
    for (auto i : idx) r.push_back(refs[i]);
    Batch b = assemble_batch(frames, idx, r, config.sample, aug, epoch_seed(config.optim.seed, epoch));
    return std::make_pair(std::move(b.input), std::move(b.target));
  };

  TrainRun run;
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);
  auto write_logs = [&] {
    std::ofstream log(out_dir / "train_log.csv", std::ios::binary);
    log << "epoch,mean_loss,wall_seconds\n";
    for (const auto& e : run.log) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.3f\n", e.epoch, e.mean_loss,
                    config.optim.deterministic ? 0.0 : e.wall_seconds);
      log << buf;
    }
    if (config.optim.deterministic) {
      std::ofstream timing(out_dir / "timing.csv", std::ios::binary);
      timing << "epoch,wall_seconds\n";
      for (const auto& e : run.log) timing << e.epoch << ',' << e.wall_seconds << '\n';
    }
  };

  fit(net, optimizer, frames.size(), config.optim, make_batch, [&](const EpochLog& e) {
    run.log.push_back(e);
    if (write) {
      const auto path = out_dir / checkpoint_name(e.epoch);
      make_checkpoint(net, config, e.epoch, &optimizer).save(path);
      run.checkpoints.push_back(path);
      write_logs();
    }
    if (on_epoch) on_epoch(e);
  });
  return run;
}

std::vector<KeypointSet> predict(Network<float>& net, const SampleSpec& spec, const std::vector<Frame>& frames,
                                 const std::vector<Point3>& refs, std::size_t batch) {
  if (refs.size() != frames.size()) throw std::invalid_argument("predict: one reference per frame required");
  if (batch == 0) batch = 1;
  std::vector<KeypointSet> out;
  out.reserve(frames.size());
  for (std::size_t start = 0; start < frames.size(); start += batch) {
    const std::size_t end = std::min(frames.size(), start + batch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<Point3> r(refs.begin() + start, refs.begin() + end);
    Batch b = assemble_batch(frames, idx, r, spec, nullptr, 0, false);
    Tensor<float> y = net.forward(b.input, Mode::infer);
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(decode_output(y, i, b.crops[i], spec));
  }
  return out;
}

std::vector<KeypointSet> average_keypoints(const std::vector<std::vector<KeypointSet>>& members) {
  if (members.empty()) throw std::invalid_argument("ensemble: at least one member required");
  const std::size_t frames = members.front().size();
  std::vector<KeypointSet> out = members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    if (members[m].size() != frames) throw std::invalid_argument("ensemble: members cover different frame counts");
    for (std::size_t f = 0; f < frames; ++f) {
      if (members[m][f].size() != out[f].size()) {
        throw std::invalid_argument("ensemble: members disagree on keypoint count");
      }
      for (std::size_t j = 0; j < out[f].size(); ++j) out[f][j] += members[m][f][j];
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (auto& f : out) {
    for (auto& p : f) p *= inv;
  }
  return out;
}

std::vector<KeypointSet> epoch_ensemble_predict(const std::vector<std::filesystem::path>& checkpoints,
                                                const std::vector<Frame>& frames, const std::vector<Point3>& refs) {
  if (checkpoints.empty()) throw std::invalid_argument("ensemble: no checkpoints");
  std::vector<std::vector<KeypointSet>> members;
  for (const auto& path : checkpoints) {
    Model m = load_model(path);
    members.push_back(predict(m.net, m.config.sample, frames, refs));
  }
  return average_keypoints(members);
}

}  // namespace v2v
