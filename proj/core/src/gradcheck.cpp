#include "v2v/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace v2v {

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= n) return idx;
  std::vector<std::size_t> out;
  out.reserve(max_coords);
  std::sample(idx.begin(), idx.end(), std::back_inserter(out), max_coords, rng);
  return out;
}

// Evaluates f at the stencil points around coordinate i of t and returns the derivative estimate.
template <typename F>
double stencil_derivative(Tensor<double>& t, std::size_t i, const GradcheckOptions& o, F&& f) {
  const double orig = t[i];
  const double h = o.step;
  auto at = [&](double offset) {
    t[i] = orig + offset;
    const double v = f();
    t[i] = orig;
    return v;
  };
  if (o.stencil == Stencil::central2) return (at(h) - at(-h)) / (2.0 * h);
  const double d1 = at(h) - at(-h);
  const double d2 = at(2.0 * h) - at(-2.0 * h);
  return (8.0 * d1 - d2) / (12.0 * h);
}

void record(GradcheckReport& r, double analytic, double numeric, const std::string& name, std::size_t i) {
  const double e = relative_error(analytic, numeric);
  ++r.checked;
  if (e > r.max_rel_error || !std::isfinite(e)) {
    r.max_rel_error = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
    r.worst = name + "[" + std::to_string(i) + "]";
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(Layer<double>& layer, const Tensor<double>& input, const GradcheckOptions& opts) {
  FiniteCheckScope finite_guard;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor<double> y = layer.forward(input, opts.mode);
  if (!y.all_finite()) throw NumericError("non-finite output from layer " + layer.name());
  Tensor<double> proj(y.shape());
  for (auto& v : proj.data()) v = normal(rng);

  std::vector<Parameter<double>*> params;
  layer.collect_parameters(params);
  for (auto* p : params) {
    if (p->trainable) p->grad.fill(0.0);
  }
  std::uint64_t base_sig = 0;
  layer.mix_kink_signature(base_sig);
  layer.set_input_grad(true);
  Tensor<double> gx = layer.backward(proj);

  Tensor<double> x = input;
  auto evaluate = [&](bool& kink) {
    Tensor<double> out = layer.forward(x, opts.mode);
    std::uint64_t sig = 0;
    layer.mix_kink_signature(sig);
    if (sig != base_sig) kink = true;
    return dot(out, proj);
  };
  GradcheckReport report;
  auto check_tensor = [&](Tensor<double>& t, const Tensor<double>& analytic, const std::string& name) {
    for (std::size_t i : pick_coords(t.size(), opts.max_coords, rng)) {
      bool kink = false;
      const double numeric = stencil_derivative(t, i, opts, [&] { return evaluate(kink); });
      if (kink) {
        ++report.skipped_kinks;
        continue;
      }
      record(report, analytic[i], numeric, name, i);
    }
  };

  for (auto* p : params) {
    if (!p->trainable) continue;
    const Tensor<double> analytic = p->grad;
    check_tensor(p->value, analytic, p->name);
  }
  if (opts.check_input) {
    if (gx.shape() != input.shape()) throw ShapeError("gradcheck: layer returned no input gradient");
    check_tensor(x, gx, "input");
  }
  // Restore caches to the unperturbed point.
  layer.forward(input, opts.mode);
  return report;
}

GradcheckReport gradcheck(Network<double>& net, const Tensor<double>& input, const GradcheckOptions& opts) {
  return gradcheck(net.root(), input, opts);
}

GradcheckReport gradcheck_function(const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& grad,
                                   const Tensor<double>& x0, const GradcheckOptions& opts) {
  require_same_shape(grad, x0, "gradcheck_function");
  std::mt19937_64 rng(opts.seed);
  Tensor<double> x = x0;
  GradcheckReport report;
  for (std::size_t i : pick_coords(x.size(), opts.max_coords, rng)) {
    const double numeric = stencil_derivative(x, i, opts, [&] { return f(x); });
    if (!std::isfinite(numeric)) throw NumericError("gradcheck_function: non-finite objective");
    record(report, grad[i], numeric, "x", i);
  }
  return report;
}

}  // namespace v2v
