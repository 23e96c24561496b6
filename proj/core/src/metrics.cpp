#include "v2v/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace v2v {

std::vector<std::vector<double>> joint_errors(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(gt.size()) + " ground-truth frames");
  }
  if (pred.empty()) throw std::invalid_argument("metrics: no frames");
  const std::size_t n = gt.front().size();
  std::vector<std::vector<double>> err(pred.size());
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].size() != n || gt[f].size() != n) {
      throw std::invalid_argument("metrics: frame " + std::to_string(f) + " keypoint count mismatch");
    }
    err[f].resize(n);
    for (std::size_t j = 0; j < n; ++j) err[f][j] = (pred[f][j] - gt[f][j]).norm();
  }
  return err;
}

MeanError mean_3d_error(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt) {
  const auto err = joint_errors(pred, gt);
  const std::size_t n = err.front().size();
  MeanError out;
  out.per_joint.assign(n, 0.0);
  for (const auto& row : err) {
    for (std::size_t j = 0; j < n; ++j) out.per_joint[j] += row[j];
  }
  for (auto& v : out.per_joint) {
    out.overall += v;
    v /= static_cast<double>(err.size());
  }
  out.overall /= static_cast<double>(err.size() * n);
  return out;
}

std::vector<double> success_frame_curve(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                                        const std::vector<double>& thresholds, SuccessRule rule) {
  const auto err = joint_errors(pred, gt);
  std::vector<double> frame_score;
  for (const auto& row : err) {
    if (rule == SuccessRule::max_joint) {
      frame_score.push_back(*std::max_element(row.begin(), row.end()));
    } else {
      double s = 0.0;
      for (double e : row) s += e;
      frame_score.push_back(s / static_cast<double>(row.size()));
    }
  }
  std::vector<double> out;
  for (double t : thresholds) {
    std::size_t ok = 0;
    for (double s : frame_score) ok += s < t;
    out.push_back(static_cast<double>(ok) / static_cast<double>(frame_score.size()));
  }
  return out;
}

std::vector<double> threshold_range(double max_mm, double step_mm) {
  if (!(step_mm > 0.0) || max_mm < 0.0) throw std::invalid_argument("thresholds: need step > 0 and max >= 0");
  std::vector<double> t;
  for (std::size_t i = 0;; ++i) {
    const double v = static_cast<double>(i) * step_mm;
    if (v > max_mm + 1e-9) break;
    t.push_back(v);
  }
  return t;
}

MapResult map_at_threshold(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt, double radius) {
  const auto err = joint_errors(pred, gt);
  const std::size_t n = err.front().size();
  MapResult out;
  out.per_joint.assign(n, 0.0);
  for (const auto& row : err) {
    for (std::size_t j = 0; j < n; ++j) out.per_joint[j] += row[j] < radius;
  }
  for (auto& v : out.per_joint) {
    v /= static_cast<double>(err.size());
    out.mean += v;
  }
  out.mean /= static_cast<double>(n);
  return out;
}

MetricsReport evaluate(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt,
                       std::vector<std::string> names, double map_radius_mm, SuccessRule rule) {
  MetricsReport r;
  r.error = mean_3d_error(pred, gt);
  r.map = map_at_threshold(pred, gt, map_radius_mm);
  r.thresholds = threshold_range();
  r.curve = success_frame_curve(pred, gt, r.thresholds, rule);
  const std::size_t n = r.error.per_joint.size();
  if (names.size() != n) {
    names.clear();
    for (std::size_t j = 0; j < n; ++j) names.push_back("joint" + std::to_string(j));
  }
  r.joint_names = std::move(names);
  return r;
}

namespace {
std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}
}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
  out << "joint,mean_error_mm,map_ratio\n";
  for (std::size_t j = 0; j < r.joint_names.size(); ++j) {
    out << r.joint_names[j] << ',' << fmt(r.error.per_joint[j], "%.4f") << ',' << fmt(r.map.per_joint[j], "%.4f")
        << '\n';
  }
  out << "Mean," << fmt(r.error.overall, "%.4f") << ',' << fmt(r.map.mean, "%.4f") << '\n';
}

void write_curve_csv(std::ostream& out, const MetricsReport& r) {
  out << "threshold_mm,success_fraction\n";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    out << fmt(r.thresholds[i], "%g") << ',' << fmt(r.curve[i], "%.4f") << '\n';
  }
}

std::string format_table(const MetricsReport& r) {
  std::size_t w = 5;
  for (const auto& n : r.joint_names) w = std::max(w, n.size());
  auto row = [&](const std::string& a, const std::string& b, const std::string& c) {
    std::string s = a;
    s.append(w + 2 - a.size(), ' ');
    s.append(12 - std::min<std::size_t>(12, b.size()), ' ');
    s += b;
    s.append(12 - std::min<std::size_t>(12, c.size()), ' ');
    s += c;
    return s + '\n';
  };
  std::string out = row("joint", "error (mm)", "mAP (%)");
  for (std::size_t j = 0; j < r.joint_names.size(); ++j) {
    out += row(r.joint_names[j], fmt(r.error.per_joint[j], "%.2f"), fmt(100.0 * r.map.per_joint[j], "%.2f"));
  }
  out += row("Mean", fmt(r.error.overall, "%.2f"), fmt(100.0 * r.map.mean, "%.2f"));
  return out;
}

}  // namespace v2v
