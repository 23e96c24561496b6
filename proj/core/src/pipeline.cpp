#include "v2v/pipeline.hpp"

#include <stdexcept>

#include "v2v/depth_io.hpp"
#include "v2v/manifest.hpp"
#include "v2v/parallel.hpp"

namespace v2v {

DepthWindow crop_to_content(const DepthMap& map) {
  std::uint32_t umin = map.width, vmin = map.height, umax = 0, vmax = 0;
  for (std::uint32_t v = 0; v < map.height; ++v) {
    for (std::uint32_t u = 0; u < map.width; ++u) {
      if (map.at(u, v) > 0.0f) {
        umin = std::min(umin, u), umax = std::max(umax, u);
        vmin = std::min(vmin, v), vmax = std::max(vmax, v);
      }
    }
  }
  DepthWindow w;
  if (umin > umax || vmin > vmax) return w;
  w.u0 = umin, w.v0 = vmin, w.width = umax - umin + 1, w.height = vmax - vmin + 1;
  w.depth.resize(static_cast<std::size_t>(w.width) * w.height);
  for (std::uint32_t v = 0; v < w.height; ++v) {
    for (std::uint32_t u = 0; u < w.width; ++u) w.depth[static_cast<std::size_t>(v) * w.width + u] = map.at(u + umin, v + vmin);
  }
  return w;
}

PointCloud reproject(const DepthWindow& w, const CameraIntrinsics& k) {
  k.validate();
  PointCloud cloud;
  for (std::uint32_t v = 0; v < w.height; ++v) {
    for (std::uint32_t u = 0; u < w.width; ++u) {
      const float d = w.depth[static_cast<std::size_t>(v) * w.width + u];
      if (d > 0.0f) cloud.push_back(reproject_pixel(u + w.u0, v + w.v0, d, k));
    }
  }
  return cloud;
}

Frame frame_from_depth(std::string id, const DepthFrame& df, double band_width) {
  Frame f;
  f.id = std::move(id);
  f.intrinsics = df.intrinsics;
  f.depth = crop_to_content(df.depth);
  try {
    f.com_ref = initial_reference_point(reproject(f.depth, f.intrinsics), std::nullopt, band_width);
  } catch (const NoTargetError& ex) {
    throw NoTargetError("frame " + f.id + ": " + ex.what());
  }
  return f;
}

std::vector<Frame> load_frames(const std::filesystem::path& manifest, double band_width) {
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw std::invalid_argument("dataset " + manifest.string() + " has no frames");
  const auto root = manifest.parent_path();
  std::vector<Frame> frames(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& e = entries[i];
    if (e.keypoints.size() != entries.front().keypoints.size()) {
      throw std::invalid_argument("frame " + e.id + ": keypoint count differs from the first frame");
    }
    DepthFrame df = read_depth_frame(root / e.depth_file);
    df.intrinsics = e.intrinsics;
    Frame& f = frames[i];
    f = frame_from_depth(e.id, df, band_width);
    f.keypoints = e.keypoints;
    f.gt_ref = e.ref_point;
  });
  return frames;
}

std::string to_string(RefSource s) {
  switch (s) {
    case RefSource::gt: return "gt";
    case RefSource::com: return "com";
    case RefSource::refined: return "refined";
  }
  return "?";
}

RefSource ref_source_from_string(const std::string& s) {
  if (s == "gt") return RefSource::gt;
  if (s == "com") return RefSource::com;
  if (s == "refined") return RefSource::refined;
  throw std::invalid_argument("unknown reference source '" + s + "' (expected gt, com or refined)");
}

Point3 reference_of(const Frame& f, RefSource s) {
  switch (s) {
    case RefSource::gt: return f.gt_ref;
    case RefSource::com: return f.com_ref;
    case RefSource::refined:
      if (!f.refined_ref) throw std::invalid_argument("frame " + f.id + ": no refined reference point");
      return *f.refined_ref;
  }
  return f.gt_ref;
}

std::vector<Point3> references(const std::vector<Frame>& frames, RefSource s) {
  std::vector<Point3> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(reference_of(f, s));
  return out;
}

Shape SampleSpec::input_shape(std::size_t batch) const {
  const std::size_t g = net.input_grid;
  return {batch, 1, g, g, g};
}

Shape SampleSpec::target_shape(std::size_t batch) const {
  if (net.variant == Variant::v2c) return {batch, 3 * net.keypoints};
  const std::size_t h = net.heatmap_grid();
  return {batch, net.keypoints, h, h, h};
}

void fill_occupancy(const PointCloud& cloud, const CubicCrop& crop, float* out) {
  const std::size_t g = crop.grid_size;
  std::fill(out, out + g * g * g, 0.0f);
  for (const auto& p : cloud) {
    if (auto c = cell_of(p, crop)) out[(static_cast<std::size_t>((*c)[0]) * g + (*c)[1]) * g + (*c)[2]] = 1.0f;
  }
}

void encode_coordinates(const KeypointSet& kps, const CubicCrop& crop, float* out) {
  const Point3 lo = crop.min_corner();
  for (std::size_t n = 0; n < kps.size(); ++n) {
    for (int a = 0; a < 3; ++a) out[3 * n + a] = static_cast<float>((kps[n][a] - lo[a]) / crop.side);
  }
}

KeypointSet decode_coordinates(const float* values, std::size_t keypoints, const CubicCrop& crop) {
  const Point3 lo = crop.min_corner();
  KeypointSet out(keypoints);
  for (std::size_t n = 0; n < keypoints; ++n) {
    for (int a = 0; a < 3; ++a) out[n][a] = lo[a] + static_cast<double>(values[3 * n + a]) * crop.side;
  }
  return out;
}

Batch assemble_batch(const std::vector<Frame>& frames, const std::vector<std::size_t>& indices,
                     const std::vector<Point3>& refs, const SampleSpec& spec, const AugmentSpec* aug,
                     std::uint64_t augment_seed, bool with_target) {
  if (refs.size() != indices.size()) throw std::invalid_argument("assemble_batch: one reference per sample required");
  const std::size_t bsz = indices.size();
  Batch batch;
  batch.input = Tensor<float>(spec.input_shape(bsz));
  if (with_target) batch.target = Tensor<float>(spec.target_shape(bsz));
  batch.crops.resize(bsz);
  const std::size_t in_stride = shape_numel(spec.input_shape(1));
  const std::size_t tg_stride = shape_numel(spec.target_shape(1));
  const HeatmapSpec hm = spec.heatmap();
  parallel_for(bsz, [&](std::size_t b) {
    const Frame& f = frames.at(indices[b]);
    if (with_target && f.keypoints.size() != spec.net.keypoints) {
      throw std::invalid_argument("frame " + f.id + ": has " + std::to_string(f.keypoints.size()) +
                                  " keypoints, network expects " + std::to_string(spec.net.keypoints));
    }
    const CubicCrop crop = spec.crop_at(refs[b]);
    crop.validate();
    PointCloud cloud = reproject(f.depth, f.intrinsics);
    KeypointSet kps = f.keypoints;
    if (aug) {
      auto rng = frame_rng(augment_seed, indices[b]);
      augment(cloud, kps, crop, sample_augment(*aug, rng));
    }
    fill_occupancy(cloud, crop, batch.input.ptr() + b * in_stride);
    if (with_target) {
      float* dst = batch.target.ptr() + b * tg_stride;
      if (spec.net.variant == Variant::v2c) {
        encode_coordinates(kps, crop, dst);
      } else {
        encode_into<float>(kps, crop, hm, std::span<float>(dst, tg_stride));
      }
    }
    batch.crops[b] = crop;
  });
  return batch;
}

KeypointSet decode_output(const Tensor<float>& output, std::size_t b, const CubicCrop& crop, const SampleSpec& spec) {
  const std::size_t stride = shape_numel(spec.target_shape(1));
  if (output.size() < (b + 1) * stride) throw ShapeError("decode_output: output has no sample " + std::to_string(b));
  const float* p = output.ptr() + b * stride;
  if (spec.net.variant == Variant::v2c) return decode_coordinates(p, spec.net.keypoints, crop);
  return decode<float>(std::span<const float>(p, stride), spec.net.keypoints, spec.net.heatmap_grid(), crop).keypoints;
}

}  // namespace v2v
