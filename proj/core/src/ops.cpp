#include "v2v/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <initializer_list>
#include <cstring>

#include "v2v/parallel.hpp"

namespace v2v {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

Dims3 spatial_of(const Shape& s) { return {s[2], s[3], s[4]}; }

void require_rank5(const Shape& s, const char* what) {
  if (s.size() != 5) throw ShapeError(std::string(what) + ": expected [B,C,D,H,W], got " + shape_str(s));
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == Dims3::cube(1) && g.stride == Dims3::cube(1) && g.pad == Dims3::cube(0);
}

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* axis) {
  if (s == 0) throw ShapeError("convolution stride must be >= 1");
  if (k == 0 || k > in + 2 * p) {
    throw ShapeError(std::string("kernel extent ") + std::to_string(k) + " exceeds padded input extent " +
                     std::to_string(in + 2 * p) + " on axis " + axis);
  }
  return (in + 2 * p - k) / s + 1;
}

template <typename T>
void check_conv_weight(const Tensor<T>& input, const Tensor<T>& weight, const ConvGeometry& g,
                       std::size_t in_axis, const char* what) {
  require_rank5(input.shape(), what);
  if (weight.rank() != 5) throw ShapeError(std::string(what) + ": weight must be rank 5, got " + shape_str(weight.shape()));
  if (weight.dim(in_axis) != input.dim(1)) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(input.dim(1)) +
                     " channels but kernel " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(in_axis)));
  }
  const Dims3 k{weight.dim(2), weight.dim(3), weight.dim(4)};
  if (!(k == g.kernel)) {
    throw ShapeError(std::string(what) + ": weight kernel " + dims_str(k) + " disagrees with geometry " +
                     dims_str(g.kernel));
  }
}

template <typename T>
std::size_t count_nonzero(const T* p, std::size_t n) {
  std::size_t nz = 0;
  for (std::size_t i = 0; i < n; ++i) nz += (p[i] != T{0});
  return nz;
}

template <typename T>
bool choose_sparse(const Tensor<T>& input, ConvPath path) {
  if (path == ConvPath::dense) return false;
  if (path == ConvPath::sparse) return true;
  const std::size_t nz = count_nonzero(input.ptr(), input.size());
  return static_cast<double>(nz) < kSparseDensityThreshold * static_cast<double>(input.size());
}

// Visits every (kernel offset, output position) pair that reads input voxel (z, y, x).
template <typename F>
void for_each_output_touching(std::size_t z, std::size_t y, std::size_t x, const ConvGeometry& g, const Dims3& out,
                              F&& f) {
  if (g.stride == Dims3::cube(1)) {
    auto span = [](std::size_t pos, std::size_t pad, std::size_t k, std::size_t n) {
      // kernel taps t with 0 <= pos + pad - t < n
      const std::size_t shifted = pos + pad;
      const std::size_t lo = shifted >= n ? shifted - n + 1 : 0;
      const std::size_t hi = std::min(k, shifted + 1);
      return std::pair<std::size_t, std::size_t>{lo, std::max(lo, hi)};
    };
    const auto [a0, a1] = span(z, g.pad.d, g.kernel.d, out.d);
    const auto [b0, b1] = span(y, g.pad.h, g.kernel.h, out.h);
    const auto [e0, e1] = span(x, g.pad.w, g.kernel.w, out.w);
    for (std::size_t a = a0; a < a1; ++a) {
      const std::size_t oz = z + g.pad.d - a;
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t oy = y + g.pad.h - b;
        const std::size_t krow = (a * g.kernel.h + b) * g.kernel.w;
        const std::size_t orow = (oz * out.h + oy) * out.w + x + g.pad.w;
        for (std::size_t e = e0; e < e1; ++e) f(krow + e, orow - e);
      }
    }
    return;
  }
  for (std::size_t a = 0; a < g.kernel.d; ++a) {
    const std::ptrdiff_t tz = static_cast<std::ptrdiff_t>(z + g.pad.d) - static_cast<std::ptrdiff_t>(a);
    if (tz < 0 || tz % static_cast<std::ptrdiff_t>(g.stride.d)) continue;
    const std::size_t oz = static_cast<std::size_t>(tz) / g.stride.d;
    if (oz >= out.d) continue;
    for (std::size_t b = 0; b < g.kernel.h; ++b) {
      const std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(y + g.pad.h) - static_cast<std::ptrdiff_t>(b);
      if (ty < 0 || ty % static_cast<std::ptrdiff_t>(g.stride.h)) continue;
      const std::size_t oy = static_cast<std::size_t>(ty) / g.stride.h;
      if (oy >= out.h) continue;
      for (std::size_t e = 0; e < g.kernel.w; ++e) {
        const std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(x + g.pad.w) - static_cast<std::ptrdiff_t>(e);
        if (tx < 0 || tx % static_cast<std::ptrdiff_t>(g.stride.w)) continue;
        const std::size_t ox = static_cast<std::size_t>(tx) / g.stride.w;
        if (ox >= out.w) continue;
        f((a * g.kernel.h + b) * g.kernel.w + e, (oz * out.h + oy) * out.w + ox);
      }
    }
  }
}

template <typename T>
void add_bias(T* y, const T* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T bv = bias[c];
    T* row = y + c * plane;
    for (std::size_t p = 0; p < plane; ++p) row[p] += bv;
  }
}

template <typename T>
Tensor<T> bias_grad(const Tensor<T>& grad_out) {
  const std::size_t B = grad_out.dim(0), C = grad_out.dim(1);
  const std::size_t plane = grad_out.size() / (B * C);
  Tensor<T> gb({C});
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const T* row = grad_out.ptr() + (b * C + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) acc += row[p];
    }
    gb[c] = static_cast<T>(acc);
  }
  return gb;
}

// Sums per-sample weight gradients in sample order so the result does not depend
// on how samples were distributed over threads.
template <typename T>
Tensor<T> ordered_sum(const std::vector<std::vector<T>>& parts, const Shape& shape) {
  Tensor<T> out(shape);
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.size(); ++i) out[i] += part[i];
  }
  return out;
}

// Double-precision reductions with independent partial sums (fixed order, so deterministic).
template <typename T>
double row_sum(const T* p, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] += p[i + k];
  for (; i < n; ++i) acc[0] += p[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double row_sq_dev(const T* p, std::size_t n, double mean) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) {
      const double d = p[i + k] - mean;
      acc[k] += d * d;
    }
  for (; i < n; ++i) {
    const double d = p[i] - mean;
    acc[0] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double row_dot(const T* a, const T* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(a[i + k]) * b[i + k];
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

Dims3 conv_output_dims(const Dims3& in, const ConvGeometry& g) {
  return {out_extent(in.d, g.kernel.d, g.stride.d, g.pad.d, "D"), out_extent(in.h, g.kernel.h, g.stride.h, g.pad.h, "H"),
          out_extent(in.w, g.kernel.w, g.stride.w, g.pad.w, "W")};
}

Dims3 deconv_output_dims(const Dims3& in, const ConvGeometry& g) {
  auto ext = [](std::size_t i, std::size_t k, std::size_t s, std::size_t p) -> std::size_t {
    if (s == 0) throw ShapeError("deconvolution stride must be >= 1");
    const std::size_t full = (i - 1) * s + k;
    if (full <= 2 * p) throw ShapeError("deconvolution padding consumes the whole output");
    return full - 2 * p;
  };
  return {ext(in.d, g.kernel.d, g.stride.d, g.pad.d), ext(in.h, g.kernel.h, g.stride.h, g.pad.h),
          ext(in.w, g.kernel.w, g.stride.w, g.pad.w)};
}

namespace {

// Output positions ox in [lo, hi) read input column ox * stride + e - pad inside [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t e,
                                                std::size_t pad) {
  std::size_t lo = 0;
  if (e < pad) lo = (pad - e + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > e) hi = std::min(out, (in + pad - e - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

// Columns for output depth slices [z0, z1); col is [C * kvol, (z1 - z0) * out.h * out.w].
template <typename T>
void im2col_slab(const T* image, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out,
                 std::size_t z0, std::size_t z1, T* col) {
  const std::size_t plane = (z1 - z0) * out.h * out.w;
  const std::size_t kvol = g.kernel.volume();
  for (std::size_t c = 0; c < channels; ++c) {
    const T* img_c = image + c * in.volume();
    for (std::size_t a = 0; a < g.kernel.d; ++a) {
      for (std::size_t b = 0; b < g.kernel.h; ++b) {
        for (std::size_t e = 0; e < g.kernel.w; ++e) {
          T* row = col + (c * kvol + (a * g.kernel.h + b) * g.kernel.w + e) * plane;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * g.stride.d + a) - static_cast<std::ptrdiff_t>(g.pad.d);
            for (std::size_t oy = 0; oy < out.h; ++oy) {
              T* dst = row + ((oz - z0) * out.h + oy) * out.w;
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * g.stride.h + b) - static_cast<std::ptrdiff_t>(g.pad.h);
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(in.d) || iy < 0 ||
                  iy >= static_cast<std::ptrdiff_t>(in.h)) {
                std::fill(dst, dst + out.w, T{0});
                continue;
              }
              const T* src = img_c + (static_cast<std::size_t>(iz) * in.h + static_cast<std::size_t>(iy)) * in.w;
              const auto [lo, hi] = valid_range(out.w, in.w, g.stride.w, e, g.pad.w);
              std::fill(dst, dst + lo, T{0});
              if (g.stride.w == 1) {
                std::copy(src + (lo + e - g.pad.w), src + (hi + e - g.pad.w), dst + lo);
              } else {
                for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride.w + e - g.pad.w];
              }
              std::fill(dst + hi, dst + out.w, T{0});
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_slab(const T* col, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out,
                 std::size_t z0, std::size_t z1, T* image) {
  const std::size_t plane = (z1 - z0) * out.h * out.w;
  const std::size_t kvol = g.kernel.volume();
  for (std::size_t c = 0; c < channels; ++c) {
    T* img_c = image + c * in.volume();
    for (std::size_t a = 0; a < g.kernel.d; ++a) {
      for (std::size_t b = 0; b < g.kernel.h; ++b) {
        for (std::size_t e = 0; e < g.kernel.w; ++e) {
          const T* row = col + (c * kvol + (a * g.kernel.h + b) * g.kernel.w + e) * plane;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * g.stride.d + a) - static_cast<std::ptrdiff_t>(g.pad.d);
            if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(in.d)) continue;
            for (std::size_t oy = 0; oy < out.h; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * g.stride.h + b) - static_cast<std::ptrdiff_t>(g.pad.h);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              const T* src = row + ((oz - z0) * out.h + oy) * out.w;
              T* dst = img_c + (static_cast<std::size_t>(iz) * in.h + static_cast<std::size_t>(iy)) * in.w;
              const auto [lo, hi] = valid_range(out.w, in.w, g.stride.w, e, g.pad.w);
              if (g.stride.w == 1) {
                T* d = dst + (e - g.pad.w);
                for (std::size_t ox = lo; ox < hi; ++ox) d[ox] += src[ox];
              } else {
                for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride.w + e - g.pad.w] += src[ox];
              }
            }
          }
        }
      }
    }
  }
}

// Output depth slices per column block, sized so the block stays cache resident.
std::size_t slab_depth(std::size_t rows, const Dims3& out, std::size_t elem) {
  constexpr std::size_t kBudget = 384 * 1024;
  const std::size_t per_slice = rows * out.h * out.w * elem;
  return std::max<std::size_t>(1, std::min(out.d, kBudget / std::max<std::size_t>(1, per_slice)));
}

}  // namespace

template <typename T>
void im2col(const T* image, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out, T* col) {
  im2col_slab(image, channels, in, g, out, 0, out.d, col);
}

template <typename T>
void col2im(const T* col, std::size_t channels, const Dims3& in, const ConvGeometry& g, const Dims3& out, T* image) {
  col2im_slab(col, channels, in, g, out, 0, out.d, image);
}

// ---------------------------------------------------------------------------
// conv3d

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias, const ConvGeometry& g,
                         ConvPath path) {
  check_conv_weight(input, weight, g, 1, "conv3d");
  const std::size_t B = input.dim(0), Cin = input.dim(1), Cout = weight.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != Cout)) {
    throw ShapeError("conv3d: bias shape " + shape_str(bias->shape()) + " does not match " + std::to_string(Cout) +
                     " output channels");
  }
  const Dims3 in = spatial_of(input.shape());
  const Dims3 out = conv_output_dims(in, g);
  const std::size_t kvol = g.kernel.volume();
  const std::size_t rows = Cin * kvol;
  const std::size_t plane = out.volume();
  Tensor<T> output({B, Cout, out.d, out.h, out.w});

  if (choose_sparse(input, path)) {
    // Wt[(ci, k)][co]
    std::vector<T> wt(rows * Cout);
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t r = 0; r < rows; ++r) wt[r * Cout + co] = weight[co * rows + r];
    parallel_for(B, [&](std::size_t b) {
      std::vector<T> acc(plane * Cout, T{0});
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* x = input.ptr() + (b * Cin + ci) * in.volume();
        for (std::size_t z = 0; z < in.d; ++z)
          for (std::size_t y = 0; y < in.h; ++y)
            for (std::size_t xx = 0; xx < in.w; ++xx) {
              const T v = x[(z * in.h + y) * in.w + xx];
              if (v == T{0}) continue;
              for_each_output_touching(z, y, xx, g, out, [&](std::size_t k, std::size_t o) {
                const T* wrow = wt.data() + (ci * kvol + k) * Cout;
                T* arow = acc.data() + o * Cout;
                for (std::size_t co = 0; co < Cout; ++co) arow[co] += v * wrow[co];
              });
            }
      }
      T* yb = output.ptr() + b * Cout * plane;
      for (std::size_t o = 0; o < plane; ++o)
        for (std::size_t co = 0; co < Cout; ++co) yb[co * plane + o] = acc[o * Cout + co];
      if (bias) add_bias(yb, bias->ptr(), Cout, plane);
    });
    return output;
  }

  const bool pointwise = is_pointwise(g);
  const std::size_t slab = slab_depth(rows, out, sizeof(T));
  const std::size_t slice = out.h * out.w;
  parallel_for(B, [&](std::size_t b) {
    const T* xb = input.ptr() + b * Cin * in.volume();
    MapConstMat<T> w(weight.ptr(), Cout, rows);
    MapMat<T> y(output.ptr() + b * Cout * plane, Cout, plane);
    if (pointwise) {
      y.noalias() = w * MapConstMat<T>(xb, rows, plane);
    } else {
      std::vector<T> col(rows * slab * slice);
      for (std::size_t z0 = 0; z0 < out.d; z0 += slab) {
        const std::size_t z1 = std::min(out.d, z0 + slab);
        const std::size_t n = (z1 - z0) * slice;
        im2col_slab(xb, Cin, in, g, out, z0, z1, col.data());
        y.middleCols(z0 * slice, n).noalias() = w * MapConstMat<T>(col.data(), rows, n);
      }
    }
    if (bias) add_bias(output.ptr() + b * Cout * plane, bias->ptr(), Cout, plane);
  });
  return output;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                             const ConvGeometry& g, bool need_input_grad, bool has_bias, ConvPath path) {
  check_conv_weight(input, weight, g, 1, "conv3d backward");
  const std::size_t B = input.dim(0), Cin = input.dim(1), Cout = weight.dim(0);
  const Dims3 in = spatial_of(input.shape());
  const Dims3 out = conv_output_dims(in, g);
  const Shape expected{B, Cout, out.d, out.h, out.w};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv3d backward: grad_out " + shape_str(grad_out.shape()) + " expected " + shape_str(expected));
  }
  const std::size_t kvol = g.kernel.volume();
  const std::size_t rows = Cin * kvol;
  const std::size_t plane = out.volume();
  const bool sparse = choose_sparse(input, path);
  const bool pointwise = is_pointwise(g);
  const std::size_t slab = slab_depth(rows, out, sizeof(T));
  const std::size_t slice = out.h * out.w;

  ConvGrads<T> grads;
  if (need_input_grad) grads.input = Tensor<T>(input.shape());
  std::vector<std::vector<T>> wparts(B, std::vector<T>(Cout * rows, T{0}));

  parallel_for(B, [&](std::size_t b) {
    const T* xb = input.ptr() + b * Cin * in.volume();
    const T* gyb = grad_out.ptr() + b * Cout * plane;
    MapConstMat<T> gy(gyb, Cout, plane);
    MapConstMat<T> w(weight.ptr(), Cout, rows);

    if (sparse) {
      std::vector<T> gyt(plane * Cout);
      for (std::size_t co = 0; co < Cout; ++co)
        for (std::size_t o = 0; o < plane; ++o) gyt[o * Cout + co] = gyb[co * plane + o];
      std::vector<T> gwt(rows * Cout, T{0});
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* x = xb + ci * in.volume();
        for (std::size_t z = 0; z < in.d; ++z)
          for (std::size_t y = 0; y < in.h; ++y)
            for (std::size_t xx = 0; xx < in.w; ++xx) {
              const T v = x[(z * in.h + y) * in.w + xx];
              if (v == T{0}) continue;
              for_each_output_touching(z, y, xx, g, out, [&](std::size_t k, std::size_t o) {
                T* grow = gwt.data() + (ci * kvol + k) * Cout;
                const T* srow = gyt.data() + o * Cout;
                for (std::size_t co = 0; co < Cout; ++co) grow[co] += v * srow[co];
              });
            }
      }
      auto& part = wparts[b];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t co = 0; co < Cout; ++co) part[co * rows + r] = gwt[r * Cout + co];
    } else if (pointwise) {
      MapMat<T> gw(wparts[b].data(), Cout, rows);
      gw.noalias() = gy * MapConstMat<T>(xb, rows, plane).transpose();
    } else {
      MapMat<T> gw(wparts[b].data(), Cout, rows);
      std::vector<T> col(rows * slab * slice);
      for (std::size_t z0 = 0; z0 < out.d; z0 += slab) {
        const std::size_t z1 = std::min(out.d, z0 + slab);
        const std::size_t n = (z1 - z0) * slice;
        im2col_slab(xb, Cin, in, g, out, z0, z1, col.data());
        gw.noalias() += gy.middleCols(z0 * slice, n) * MapConstMat<T>(col.data(), rows, n).transpose();
      }
    }

    if (need_input_grad) {
      T* gxb = grads.input.ptr() + b * Cin * in.volume();
      if (pointwise) {
        MapMat<T> gx(gxb, Cin, plane);
        gx.noalias() = w.transpose() * gy;
      } else {
        RowMat<T> gcol(rows, slab * slice);
        for (std::size_t z0 = 0; z0 < out.d; z0 += slab) {
          const std::size_t z1 = std::min(out.d, z0 + slab);
          const std::size_t n = (z1 - z0) * slice;
          MapMat<T> gc(gcol.data(), rows, n);
          gc.noalias() = w.transpose() * gy.middleCols(z0 * slice, n);
          col2im_slab(gcol.data(), Cin, in, g, out, z0, z1, gxb);
        }
      }
    }
  });

  grads.weight = ordered_sum(wparts, weight.shape());
  if (has_bias) grads.bias = bias_grad(grad_out);
  return grads;
}

// ---------------------------------------------------------------------------
// deconv3d

template <typename T>
Tensor<T> deconv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                           const ConvGeometry& g) {
  check_conv_weight(input, weight, g, 0, "deconv3d");
  const std::size_t B = input.dim(0), Cin = input.dim(1), Cout = weight.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != Cout)) {
    throw ShapeError("deconv3d: bias shape " + shape_str(bias->shape()) + " does not match " + std::to_string(Cout) +
                     " output channels");
  }
  const Dims3 in = spatial_of(input.shape());
  const Dims3 out = deconv_output_dims(in, g);
  const std::size_t cols = Cout * g.kernel.volume();
  const std::size_t in_plane = in.volume();
  const std::size_t out_plane = out.volume();
  Tensor<T> output({B, Cout, out.d, out.h, out.w});
  parallel_for(B, [&](std::size_t b) {
    MapConstMat<T> w(weight.ptr(), Cin, cols);
    MapConstMat<T> x(input.ptr() + b * Cin * in_plane, Cin, in_plane);
    RowMat<T> col = w.transpose() * x;
    T* yb = output.ptr() + b * Cout * out_plane;
    col2im(col.data(), Cout, out, g, in, yb);
    if (bias) add_bias(yb, bias->ptr(), Cout, out_plane);
  });
  return output;
}

template <typename T>
ConvGrads<T> deconv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                               const ConvGeometry& g, bool need_input_grad, bool has_bias) {
  check_conv_weight(input, weight, g, 0, "deconv3d backward");
  const std::size_t B = input.dim(0), Cin = input.dim(1), Cout = weight.dim(1);
  const Dims3 in = spatial_of(input.shape());
  const Dims3 out = deconv_output_dims(in, g);
  const Shape expected{B, Cout, out.d, out.h, out.w};
  if (grad_out.shape() != expected) {
    throw ShapeError("deconv3d backward: grad_out " + shape_str(grad_out.shape()) + " expected " +
                     shape_str(expected));
  }
  const std::size_t cols = Cout * g.kernel.volume();
  const std::size_t in_plane = in.volume();
  const std::size_t out_plane = out.volume();

  ConvGrads<T> grads;
  if (need_input_grad) grads.input = Tensor<T>(input.shape());
  std::vector<std::vector<T>> wparts(B, std::vector<T>(Cin * cols, T{0}));
  parallel_for(B, [&](std::size_t b) {
    std::vector<T> colg(cols * in_plane);
    im2col(grad_out.ptr() + b * Cout * out_plane, Cout, out, g, in, colg.data());
    MapConstMat<T> cg(colg.data(), cols, in_plane);
    MapConstMat<T> w(weight.ptr(), Cin, cols);
    MapConstMat<T> x(input.ptr() + b * Cin * in_plane, Cin, in_plane);
    MapMat<T> gw(wparts[b].data(), Cin, cols);
    gw.noalias() = x * cg.transpose();
    if (need_input_grad) {
      MapMat<T> gx(grads.input.ptr() + b * Cin * in_plane, Cin, in_plane);
      gx.noalias() = w * cg;
    }
  });
  grads.weight = ordered_sum(wparts, weight.shape());
  if (has_bias) grads.bias = bias_grad(grad_out);
  return grads;
}

// ---------------------------------------------------------------------------
// pointwise layers

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input, grad_out, "relu backward");
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? grad_out[i] : T{0};
  return out;
}

template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input, const Dims3& win) {
  require_rank5(input.shape(), "maxpool3d");
  if (win.d == 0 || win.h == 0 || win.w == 0) throw ShapeError("maxpool3d: window extents must be positive");
  const std::size_t B = input.dim(0), C = input.dim(1);
  const Dims3 in = spatial_of(input.shape());
  const Dims3 out{in.d / win.d, in.h / win.h, in.w / win.w};
  if (out.volume() == 0) throw ShapeError("maxpool3d: window " + dims_str(win) + " larger than input " + dims_str(in));
  PoolResult<T> r;
  r.output = Tensor<T>({B, C, out.d, out.h, out.w});
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * in.volume();
    for (std::size_t oz = 0; oz < out.d; ++oz)
      for (std::size_t oy = 0; oy < out.h; ++oy)
        for (std::size_t ox = 0; ox < out.w; ++ox, ++o) {
          std::size_t best = base + ((oz * win.d) * in.h + oy * win.h) * in.w + ox * win.w;
          T best_v = input[best];
          for (std::size_t a = 0; a < win.d; ++a)
            for (std::size_t b = 0; b < win.h; ++b)
              for (std::size_t e = 0; e < win.w; ++e) {
                const std::size_t idx = base + ((oz * win.d + a) * in.h + oy * win.h + b) * in.w + ox * win.w + e;
                if (input[idx] > best_v) {
                  best_v = input[idx];
                  best = idx;
                }
              }
          r.output[o] = best_v;
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                             const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) throw ShapeError("maxpool3d backward: grad_out does not match argmax map");
  Tensor<T> gx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad_out[o];
  return gx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// ---------------------------------------------------------------------------
// batch normalization

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                            const BatchNormOptions& opts, BatchNormCache<T>& cache) {
  if (input.rank() < 2) throw ShapeError("batchnorm: input must have a channel axis, got " + shape_str(input.shape()));
  const std::size_t B = input.dim(0), C = input.dim(1);
  const std::size_t plane = input.size() / (B * C);
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->rank() != 1 || p->dim(0) != C) {
      throw ShapeError("batchnorm: parameter shape " + shape_str(p->shape()) + " does not match " +
                       std::to_string(C) + " channels");
    }
  }
  const std::size_t n = B * plane;
  if (train && n < 2) {
    throw NumericError("batchnorm: train mode needs at least 2 values per channel, got " + std::to_string(n));
  }
  cache.train = train;
  cache.normalized = Tensor<T>(input.shape());
  cache.inv_std.assign(C, 0.0);
  Tensor<T> out(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < B; ++b) sum += row_sum(input.ptr() + (b * C + c) * plane, plane);
      mean = sum / static_cast<double>(n);
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) sq += row_sq_dev(input.ptr() + (b * C + c) * plane, plane, mean);
      var = sq / static_cast<double>(n);
      const double m = opts.momentum;
      running_mean[c] = static_cast<T>((1.0 - m) * running_mean[c] + m * mean);
      running_var[c] =
          static_cast<T>((1.0 - m) * running_var[c] + m * var * static_cast<double>(n) / static_cast<double>(n - 1));
    } else {
      mean = running_mean[c];
      var = std::max(0.0, static_cast<double>(running_var[c]));
    }
    const double inv_std = 1.0 / std::sqrt(var + opts.epsilon);
    cache.inv_std[c] = inv_std;
    const T mu = static_cast<T>(mean), is = static_cast<T>(inv_std), gm = gamma[c], bt = beta[c];
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * plane;
      const T* x = input.ptr() + off;
      T* xh = cache.normalized.ptr() + off;
      T* y = out.ptr() + off;
      for (std::size_t p = 0; p < plane; ++p) {
        xh[p] = (x[p] - mu) * is;
        y[p] = gm * xh[p] + bt;
      }
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                     const BatchNormCache<T>& cache) {
  require_same_shape(grad_out, cache.normalized, "batchnorm backward");
  const std::size_t B = grad_out.dim(0), C = grad_out.dim(1);
  const std::size_t plane = grad_out.size() / (B * C);
  const double n = static_cast<double>(B * plane);
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * plane;
      sum_g += row_sum(grad_out.ptr() + off, plane);
      sum_gx += row_dot(grad_out.ptr() + off, cache.normalized.ptr() + off, plane);
    }
    g.beta[c] = static_cast<T>(sum_g);
    g.gamma[c] = static_cast<T>(sum_gx);
    const double scale = gamma[c] * cache.inv_std[c];
    const T a = static_cast<T>(scale);
    const T k0 = cache.train ? static_cast<T>(scale * sum_g / n) : T{0};
    const T k1 = cache.train ? static_cast<T>(scale * sum_gx / n) : T{0};
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * plane;
      const T* go = grad_out.ptr() + off;
      const T* xh = cache.normalized.ptr() + off;
      T* gi = g.input.ptr() + off;
      for (std::size_t p = 0; p < plane; ++p) gi[p] = a * go[p] - k0 - k1 * xh[p];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// fully connected

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() < 2) throw ShapeError("fully_connected: input must be [B, F...], got " + shape_str(input.shape()));
  const std::size_t B = input.dim(0), F = input.size() / B;
  if (weight.rank() != 2 || weight.dim(1) != F) {
    throw ShapeError("fully_connected: weight " + shape_str(weight.shape()) + " incompatible with " +
                     std::to_string(F) + " input features");
  }
  const std::size_t G = weight.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != G) throw ShapeError("fully_connected: bias shape " + shape_str(bias.shape()));
  Tensor<T> out({B, G});
  MapConstMat<T> x(input.ptr(), B, F);
  MapConstMat<T> w(weight.ptr(), G, F);
  MapMat<T> y(out.ptr(), B, G);
  y.noalias() = x * w.transpose();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gi = 0; gi < G; ++gi) y(b, gi) += bias[gi];
  return out;
}

template <typename T>
ConvGrads<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  const std::size_t B = input.dim(0), F = input.size() / B, G = weight.dim(0);
  if (grad_out.shape() != Shape{B, G}) {
    throw ShapeError("fully_connected backward: grad_out " + shape_str(grad_out.shape()));
  }
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({G})};
  MapConstMat<T> x(input.ptr(), B, F);
  MapConstMat<T> w(weight.ptr(), G, F);
  MapConstMat<T> gy(grad_out.ptr(), B, G);
  MapMat<T> gx(g.input.ptr(), B, F);
  MapMat<T> gw(g.weight.ptr(), G, F);
  gx.noalias() = gy * w;
  gw.noalias() = gy.transpose() * x;
  for (std::size_t gi = 0; gi < G; ++gi) {
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) acc += gy(b, gi);
    g.bias[gi] = static_cast<T>(acc);
  }
  return g;
}

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "mse_loss");
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    r.grad[i] = static_cast<T>(2.0 * d);
  }
  r.loss = acc;
  return r;
}

#define V2V_INSTANTIATE_OPS(T)                                                                                       \
  template void im2col<T>(const T*, std::size_t, const Dims3&, const ConvGeometry&, const Dims3&, T*);               \
  template void col2im<T>(const T*, std::size_t, const Dims3&, const ConvGeometry&, const Dims3&, T*);               \
  template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvGeometry&,     \
                                       ConvPath);                                                                    \
  template ConvGrads<T> conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                     \
                                           const ConvGeometry&, bool, bool, ConvPath);                               \
  template Tensor<T> deconv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvGeometry&); \
  template ConvGrads<T> deconv3d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                             const ConvGeometry&, bool, bool);                                       \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                                              \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                                           \
  template PoolResult<T> maxpool3d_forward<T>(const Tensor<T>&, const Dims3&);                                       \
  template Tensor<T> maxpool3d_backward<T>(const Tensor<T>&, const std::vector<std::uint32_t>&, const Shape&);       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> batchnorm_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,          \
                                          Tensor<T>&, bool, const BatchNormOptions&, BatchNormCache<T>&);            \
  template BatchNormGrads<T> batchnorm_backward<T>(const Tensor<T>&, const Tensor<T>&, const BatchNormCache<T>&);    \
  template Tensor<T> fc_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template ConvGrads<T> fc_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                        \
  template LossResult<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);

V2V_INSTANTIATE_OPS(float)
V2V_INSTANTIATE_OPS(double)

}  // namespace v2v
