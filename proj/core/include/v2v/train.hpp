#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "v2v/checkpoint.hpp"
#include "v2v/optimizer.hpp"
#include "v2v/pipeline.hpp"

namespace v2v {

/// Optimizer-side settings shared by every trained network.
struct OptimConfig {
  RmsPropOptions rmsprop{};
  std::size_t batch = 8;
  std::size_t epochs = 10;
  double init_std = kInitStd;
  std::uint64_t seed = 1;
  bool deterministic = false;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  ///< 1-based
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

/// Per-epoch seed derived from the run seed; drives shuffling and augmentation.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

/// Input/target tensors for the given dataset indices during `epoch` (0-based).
using BatchFn = std::function<std::pair<Tensor<float>, Tensor<float>>(const std::vector<std::size_t>&, std::size_t)>;
using EpochFn = std::function<void(const EpochLog&)>;

/// Epoch loop: shuffle, batch, forward, summed squared error averaged over the
/// batch, backward, RMSProp. A trailing batch of one sample is dropped
/// (batch statistics need two). Weights are not initialized here.
std::vector<EpochLog> fit(Network<float>& net, RmsProp<float>& optimizer, std::size_t dataset_size,
                          const OptimConfig& config, const BatchFn& make_batch, const EpochFn& on_epoch = {});

struct TrainConfig {
  SampleSpec sample{};
  OptimConfig optim{};
  AugmentSpec augment{};
  bool augment_enabled = true;
  /// Crop centers used while training.
  RefSource train_ref = RefSource::gt;

  void validate() const;
  /// Everything except the network block, which is stored separately.
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text, const NetworkConfig& net);
};

std::string checkpoint_name(std::size_t epoch);
/// ckpt-epoch-<k>.v2v files in `dir`, ordered by k.
std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir);

Checkpoint make_checkpoint(Network<float>& net, const TrainConfig& config, std::size_t epoch,
                           const RmsProp<float>* optimizer = nullptr);

struct Model {
  Network<float> net;
  TrainConfig config;
  std::size_t epoch = 0;
};

Model model_from_checkpoint(const Checkpoint& ck);
Model load_model(const std::filesystem::path& path);

struct TrainRun {
  std::vector<EpochLog> log;
  std::vector<std::filesystem::path> checkpoints;
};

/// Initializes `net`, trains it and, when out_dir is non-empty, writes one
/// checkpoint per epoch plus train_log.csv (epoch, mean_loss, wall_seconds).
/// Deterministic runs log wall_seconds as 0 and put timings in timing.csv.
TrainRun train(const TrainConfig& config, const std::vector<Frame>& frames, Network<float>& net,
               const std::filesystem::path& out_dir = {}, const EpochFn& on_epoch = {});

/// Decoded world keypoints for every frame, cropped at refs[i].
std::vector<KeypointSet> predict(Network<float>& net, const SampleSpec& spec, const std::vector<Frame>& frames,
                                 const std::vector<Point3>& refs, std::size_t batch = 8);

/// Per-keypoint arithmetic mean across members (coordinate space).
std::vector<KeypointSet> average_keypoints(const std::vector<std::vector<KeypointSet>>& members);

std::vector<KeypointSet> epoch_ensemble_predict(const std::vector<std::filesystem::path>& checkpoints,
                                                const std::vector<Frame>& frames, const std::vector<Point3>& refs);

}  // namespace v2v
