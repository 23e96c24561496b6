#include "v2v/heatmap.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace v2v {

void HeatmapSpec::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("heatmap spec: sigma must be positive");
  if (keypoints == 0) throw std::invalid_argument("heatmap spec: at least one keypoint is required");
  if (grid_size == 0) throw std::invalid_argument("heatmap spec: grid size must be positive");
}

double gaussian_value(const Eigen::Vector3d& cell, const Eigen::Vector3d& peak, double sigma) {
  return std::exp(-(cell - peak).squaredNorm() / (2.0 * sigma * sigma));
}

Eigen::Vector3d heatmap_coordinate(const Point3& p, const CubicCrop& crop, std::size_t heatmap_grid) {
  return world_to_voxel(p, crop, heatmap_grid);
}

template <typename T>
std::vector<std::uint8_t> encode_into(const KeypointSet& keypoints, const CubicCrop& crop, const HeatmapSpec& spec,
                                      std::span<T> out) {
  spec.validate();
  const std::size_t G = spec.grid_size;
  if (keypoints.size() != spec.keypoints) {
    throw std::invalid_argument("heatmap encode: expected " + std::to_string(spec.keypoints) + " keypoints, got " +
                                std::to_string(keypoints.size()));
  }
  if (out.size() != spec.keypoints * G * G * G) throw std::invalid_argument("heatmap encode: output span has wrong size");
  std::vector<std::uint8_t> flags(spec.keypoints, 0);
  const double denom = 2.0 * spec.sigma * spec.sigma;
  std::vector<double> ex(G), ey(G), ez(G);
  for (std::size_t n = 0; n < spec.keypoints; ++n) {
    const Eigen::Vector3d c = heatmap_coordinate(keypoints[n], crop, G);
    for (int a = 0; a < 3; ++a) {
      if (!(c[a] >= -0.5) || !(c[a] < static_cast<double>(G) - 0.5)) flags[n] = 1;
    }
    // The Gaussian is separable: exp(-(di^2 + dj^2 + dk^2) / 2s^2) = ex[i] * ey[j] * ez[k].
    for (std::size_t t = 0; t < G; ++t) {
      const double v = static_cast<double>(t);
      ex[t] = std::exp(-(v - c[0]) * (v - c[0]) / denom);
      ey[t] = std::exp(-(v - c[1]) * (v - c[1]) / denom);
      ez[t] = std::exp(-(v - c[2]) * (v - c[2]) / denom);
    }
    T* dst = out.data() + n * G * G * G;
    for (std::size_t i = 0; i < G; ++i)
      for (std::size_t j = 0; j < G; ++j) {
        const double ij = ex[i] * ey[j];
        T* row = dst + (i * G + j) * G;
        for (std::size_t k = 0; k < G; ++k) row[k] = static_cast<T>(ij * ez[k]);
      }
  }
  return flags;
}

HeatmapVolume encode(const KeypointSet& keypoints, const CubicCrop& crop, const HeatmapSpec& spec) {
  HeatmapVolume vol;
  vol.grid_size = spec.grid_size;
  vol.keypoints = spec.keypoints;
  vol.values.resize(spec.keypoints * spec.grid_size * spec.grid_size * spec.grid_size);
  vol.out_of_crop = encode_into<float>(keypoints, crop, spec, vol.values);
  return vol;
}

template <typename T>
DecodeResult decode(std::span<const T> values, std::size_t keypoints, std::size_t G, const CubicCrop& crop) {
  const std::size_t vol = G * G * G;
  if (keypoints == 0 || G == 0 || values.size() != keypoints * vol) {
    throw std::invalid_argument("heatmap decode: volume size does not match keypoints x grid^3");
  }
  DecodeResult r;
  for (std::size_t n = 0; n < keypoints; ++n) {
    const T* v = values.data() + n * vol;
    std::size_t best = 0;
    bool flat = true;
    for (std::size_t i = 1; i < vol; ++i) {
      if (v[i] != v[0]) flat = false;
      if (v[i] > v[best]) best = i;
    }
    const int i = static_cast<int>(best / (G * G));
    const int j = static_cast<int>((best / G) % G);
    const int k = static_cast<int>(best % G);
    r.cells.emplace_back(i, j, k);
    r.keypoints.push_back(voxel_to_world(Eigen::Vector3d(i, j, k), crop, G));
    r.flat.push_back(flat ? 1 : 0);
  }
  return r;
}

DecodeResult decode(const HeatmapVolume& volume, const CubicCrop& crop) {
  return decode<float>(volume.values, volume.keypoints, volume.grid_size, crop);
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  char buf[64];
  for (const auto& r : records) {
    out << r.id;
    for (const auto& p : r.keypoints) {
      for (int a = 0; a < 3; ++a) {
        std::snprintf(buf, sizeof buf, "\t%.6g", p[a]);
        out << buf;
      }
    }
    out << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    PredictionRecord r;
    std::getline(ls, r.id, '\t');
    std::vector<double> vals;
    std::string tok;
    while (std::getline(ls, tok, '\t')) vals.push_back(std::stod(tok));
    if (vals.size() % 3) throw std::runtime_error("predictions: line for '" + r.id + "' has a partial triple");
    for (std::size_t i = 0; i < vals.size(); i += 3) r.keypoints.emplace_back(vals[i], vals[i + 1], vals[i + 2]);
    out.push_back(std::move(r));
  }
  return out;
}

template std::vector<std::uint8_t> encode_into<float>(const KeypointSet&, const CubicCrop&, const HeatmapSpec&,
                                                      std::span<float>);
template std::vector<std::uint8_t> encode_into<double>(const KeypointSet&, const CubicCrop&, const HeatmapSpec&,
                                                       std::span<double>);
template DecodeResult decode<float>(std::span<const float>, std::size_t, std::size_t, const CubicCrop&);
template DecodeResult decode<double>(std::span<const double>, std::size_t, std::size_t, const CubicCrop&);

}  // namespace v2v
