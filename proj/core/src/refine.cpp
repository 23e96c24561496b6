#include "v2v/refine.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "kv_text.hpp"
#include "v2v/parallel.hpp"

namespace v2v {

void RefineConfig::validate() const {
  net.validate();
  optim.validate();
  if (!(cube_mm > 0.0)) throw std::invalid_argument("refine: cube size must be positive");
  if (!(jitter_mm >= 0.0)) throw std::invalid_argument("refine: jitter must be nonnegative");
}

std::string RefineConfig::to_text() const {
  using detail::fmt_double;
  std::ostringstream os;
  os << "cube_mm=" << fmt_double(cube_mm) << "\n"
     << "lr=" << fmt_double(optim.rmsprop.learning_rate) << "\n"
     << "rmsprop_alpha=" << fmt_double(optim.rmsprop.alpha) << "\n"
     << "rmsprop_epsilon=" << fmt_double(optim.rmsprop.epsilon) << "\n"
     << "batch=" << optim.batch << "\n"
     << "epochs=" << optim.epochs << "\n"
     << "init_std=" << fmt_double(optim.init_std) << "\n"
     << "seed=" << optim.seed << "\n"
     << "jitter_mm=" << fmt_double(jitter_mm) << "\n";
  return os.str();
}

RefineConfig RefineConfig::from_text(const std::string& text, const RefineNetConfig& net) {
  using namespace detail;
  const auto kv = parse_kv(text);
  RefineConfig c;
  c.net = net;
  c.cube_mm = get_double(kv, "cube_mm", c.cube_mm);
  c.optim.rmsprop.learning_rate = get_double(kv, "lr", c.optim.rmsprop.learning_rate);
  c.optim.rmsprop.alpha = get_double(kv, "rmsprop_alpha", c.optim.rmsprop.alpha);
  c.optim.rmsprop.epsilon = get_double(kv, "rmsprop_epsilon", c.optim.rmsprop.epsilon);
  c.optim.batch = get_size(kv, "batch", c.optim.batch);
  c.optim.epochs = get_size(kv, "epochs", c.optim.epochs);
  c.optim.init_std = get_double(kv, "init_std", c.optim.init_std);
  c.optim.seed = std::stoull(get_string(kv, "seed", "1"));
  c.jitter_mm = get_double(kv, "jitter_mm", c.jitter_mm);
  return c;
}

std::vector<float> extract_patch(const Frame& f, const Point3& center, std::size_t p, double cube_mm) {
  if (!(center.z() > 0.0)) throw std::invalid_argument("refine: patch center must lie in front of the camera");
  const PixelDepth c = project(center, f.intrinsics);
  const double half = cube_mm / 2.0;
  const double half_u = half * f.intrinsics.fx / center.z();
  const double half_v = half * f.intrinsics.fy / center.z();
  std::vector<float> out(p * p);
  for (std::size_t r = 0; r < p; ++r) {
    const double v = c.v + ((static_cast<double>(r) + 0.5) / static_cast<double>(p) - 0.5) * 2.0 * half_v;
    for (std::size_t q = 0; q < p; ++q) {
      const double u = c.u + ((static_cast<double>(q) + 0.5) / static_cast<double>(p) - 0.5) * 2.0 * half_u;
      const float d = f.depth.at(std::lround(u), std::lround(v));
      out[r * p + q] = d > 0.0f ? static_cast<float>(std::clamp((d - center.z()) / half, -1.0, 1.0)) : 1.0f;
    }
  }
  return out;
}

namespace {

Tensor<float> patch_batch(const std::vector<Frame>& frames, const std::vector<std::size_t>& idx,
                          const std::vector<Point3>& centers, const RefineConfig& cfg) {
  const std::size_t p = cfg.net.patch_size;
  Tensor<float> x({idx.size(), 1, 1, p, p});
  parallel_for(idx.size(), [&](std::size_t b) {
    const auto patch = extract_patch(frames[idx[b]], centers[b], p, cfg.cube_mm);
    std::copy(patch.begin(), patch.end(), x.ptr() + b * p * p);
  });
  return x;
}

}  // namespace

std::vector<EpochLog> train_refiner(const RefineConfig& cfg, const std::vector<Frame>& frames, Network<float>& net,
                                    const EpochFn& on_epoch) {
  cfg.validate();
  if (frames.empty()) throw std::invalid_argument("refine: dataset is empty");
  std::mt19937_64 init_rng(cfg.optim.seed);
  init_weights(net, cfg.optim.init_std, init_rng);
  RmsProp<float> optimizer(cfg.optim.rmsprop);
  const double scale = cfg.offset_scale();
  BatchFn make_batch = [&](const std::vector<std::size_t>& idx, std::size_t epoch) {
    std::vector<Point3> centers;
    Tensor<float> y({idx.size(), 3});
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Frame& f = frames[idx[b]];
      auto rng = frame_rng(epoch_seed(cfg.optim.seed, epoch), idx[b]);
      std::normal_distribution<double> jitter(0.0, cfg.jitter_mm);
      Point3 c = f.com_ref;
      if (cfg.jitter_mm > 0.0) c += Point3{jitter(rng), jitter(rng), jitter(rng)};
      centers.push_back(c);
      const Point3 off = (f.gt_ref - c) / scale;
      for (int a = 0; a < 3; ++a) y[3 * b + a] = static_cast<float>(off[a]);
    }
    return std::make_pair(patch_batch(frames, idx, centers, cfg), std::move(y));
  };
  return fit(net, optimizer, frames.size(), cfg.optim, make_batch, on_epoch);
}

std::vector<Point3> refine_references(Network<float>& net, const RefineConfig& cfg, const std::vector<Frame>& frames) {
  std::vector<Point3> out;
  out.reserve(frames.size());
  const double scale = cfg.offset_scale();
  for (std::size_t start = 0; start < frames.size(); start += 16) {
    const std::size_t end = std::min(frames.size(), start + 16);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<Point3> centers;
    for (auto i : idx) centers.push_back(frames[i].com_ref);
    Tensor<float> y = net.forward(patch_batch(frames, idx, centers, cfg), Mode::infer);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      out.push_back(centers[b] + scale * Point3{y[3 * b], y[3 * b + 1], y[3 * b + 2]});
    }
  }
  return out;
}

void save_refiner(const std::filesystem::path& path, Network<float>& net, const RefineConfig& cfg) {
  Checkpoint ck;
  ck.put_text("meta.kind", net.kind());
  ck.put_text("meta.config", net.config_text());
  ck.put_text("meta.refine", cfg.to_text());
  for (auto& [name, t] : net.state()) ck.put(name, t);
  ck.save(path);
}

Refiner load_refiner(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  auto kind = ck.text("meta.kind");
  auto cfg = ck.text("meta.config");
  if (!kind || *kind != "refine" || !cfg) throw std::runtime_error(path.string() + " is not a refinement checkpoint");
  Network<float> net = build_from_record<float>(*kind, *cfg);
  std::map<std::string, Tensor<float>> state;
  for (const auto& e : ck.entries()) state.emplace(e.name, e.tensor);
  net.load_state(state);
  return {std::move(net), RefineConfig::from_text(ck.text("meta.refine").value_or(""), RefineNetConfig::from_text(*cfg))};
}

}  // namespace v2v
