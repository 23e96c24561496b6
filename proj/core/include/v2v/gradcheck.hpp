#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "v2v/layers.hpp"
#include "v2v/network.hpp"

namespace v2v {

enum class Stencil {
  central2,  ///< (f(x+h) - f(x-h)) / 2h
  central4,  ///< (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h
};

struct GradcheckOptions {
  double step = 1e-3;  ///< finite-difference step h
  Stencil stencil = Stencil::central4;
  std::uint64_t seed = 1;
  /// Upper bound on checked coordinates per parameter tensor and for the input;
  /// 0 checks every coordinate. Sampled coordinates are drawn without replacement.
  std::size_t max_coords = 0;
  bool check_input = true;
  Mode mode = Mode::train;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst;            ///< "<tensor>[<index>]" of the worst coordinate
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  ///< perturbation crossed a ReLU/max-pool switch

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

/// Checks a layer's backward against central differences of the scalar
/// L = <r, layer(x)> with r ~ N(0, 1). Coordinates whose perturbation changes
/// the layer's kink signature are skipped and counted, not compared.
/// Throws NumericError naming the layer that produced a non-finite value.
GradcheckReport gradcheck(Layer<double>& layer, const Tensor<double>& input, const GradcheckOptions& opts = {});
GradcheckReport gradcheck(Network<double>& net, const Tensor<double>& input, const GradcheckOptions& opts = {});

/// Checks grad against central differences of a scalar function of one tensor.
GradcheckReport gradcheck_function(const std::function<double(const Tensor<double>&)>& f,
                                   const Tensor<double>& grad, const Tensor<double>& x,
                                   const GradcheckOptions& opts = {});

struct GradcheckSuiteOptions {
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  double step = 1e-3;
  Stencil stencil = Stencil::central4;
  /// Coordinates sampled per tensor for the assembled networks; layers are checked exhaustively.
  std::size_t network_coords = 50;
};

struct GradcheckCase {
  std::string name;
  GradcheckReport report;  ///< worst over all seeds; `worst` carries the seed
  std::size_t seeds = 0;
};

/// Every layer type, the squared-error loss and the three assembled networks
/// (v2v, v2c, refinement), each at `seeds` random points in double precision.
std::vector<GradcheckCase> gradcheck_suite(const GradcheckSuiteOptions& opts = {},
                                           const std::function<void(const GradcheckCase&)>& on_case = {});

}  // namespace v2v
