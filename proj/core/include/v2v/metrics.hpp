#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "v2v/heatmap.hpp"

namespace v2v {

/// frames x keypoints Euclidean distances (mm). Throws std::invalid_argument
/// on length or keypoint-count mismatch.
std::vector<std::vector<double>> joint_errors(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt);

struct MeanError {
  double overall = 0.0;
  std::vector<double> per_joint;
};

MeanError mean_3d_error(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt);

/// max_joint: a frame succeeds when its worst joint error is < t.
/// mean_joint: when its mean joint error is < t. Ties at t fail.
enum class SuccessRule { max_joint, mean_joint };

std::vector<double> success_frame_curve(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                                        const std::vector<double>& thresholds_mm,
                                        SuccessRule rule = SuccessRule::max_joint);

/// 0, step, 2 step, ... up to and including max.
std::vector<double> threshold_range(double max_mm = 80.0, double step_mm = 1.0);

struct MapResult {
  std::vector<double> per_joint;
  double mean = 0.0;
};

/// A joint counts as detected when its error is < radius.
MapResult map_at_threshold(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                           double radius_mm = 100.0);

struct MetricsReport {
  std::vector<std::string> joint_names;
  MeanError error;
  MapResult map;
  std::vector<double> thresholds;
  std::vector<double> curve;
};

MetricsReport evaluate(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                       std::vector<std::string> joint_names, double map_radius_mm = 100.0,
                       SuccessRule rule = SuccessRule::max_joint);

/// joint,mean_error_mm,map_ratio rows, one per joint, then a "Mean" row.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
/// threshold_mm,success_fraction rows.
void write_curve_csv(std::ostream& out, const MetricsReport& report);
/// Aligned plain-text version of the metrics CSV.
std::string format_table(const MetricsReport& report);

}  // namespace v2v
