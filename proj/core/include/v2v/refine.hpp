#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "v2v/train.hpp"

namespace v2v {

struct RefineConfig {
  RefineNetConfig net{};
  double cube_mm = kHandCubeMm;
  OptimConfig optim{.batch = 8, .epochs = 30};
  /// Std (mm) of the random shift applied to the patch center while training.
  double jitter_mm = 15.0;

  /// Offsets are regressed in units of half the cube side.
  double offset_scale() const { return cube_mm / 2.0; }
  void validate() const;
  std::string to_text() const;
  static RefineConfig from_text(const std::string& text, const RefineNetConfig& net);
};

/// P x P depth patch around the projection of `center`, spanning cube_mm at the
/// center's depth. Values clamp((d - z) / (cube/2), -1, 1); missing depth is 1.
std::vector<float> extract_patch(const Frame& frame, const Point3& center, std::size_t patch_size, double cube_mm);

/// Trains the refiner to regress gt_ref - center from patches centered on
/// (jittered) center-of-mass points.
std::vector<EpochLog> train_refiner(const RefineConfig& config, const std::vector<Frame>& frames,
                                    Network<float>& net, const EpochFn& on_epoch = {});

/// com_ref + predicted offset for each frame.
std::vector<Point3> refine_references(Network<float>& net, const RefineConfig& config,
                                      const std::vector<Frame>& frames);

void save_refiner(const std::filesystem::path& path, Network<float>& net, const RefineConfig& config);
struct Refiner {
  Network<float> net;
  RefineConfig config;
};
Refiner load_refiner(const std::filesystem::path& path);

}  // namespace v2v
