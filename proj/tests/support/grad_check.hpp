#pragma once

// Finite-difference gradient checking (64-bit, central differences). Kept in
// test code so the check stays independent of the autodiff implementation.

#include <cmath>
#include <functional>
#include <vector>

#include "echolab/rng.hpp"
#include "echolab/tensor.hpp"

namespace gradcheck {

using echolab::Rng;
using echolab::nn::Shape;
using echolab::nn::Var;

// Builds a graph from leaf inputs; must be pure (same inputs -> same value).
using Builder = std::function<Var<double>(const std::vector<Var<double>>&)>;

struct Report {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Reduces the builder output to a scalar through a fixed random weighting,
// then compares analytic input gradients against central differences.
inline Report check(const Builder& f, const std::vector<Shape>& input_shapes, std::uint64_t seed,
                    double lo = -1.0, double hi = 1.0, double step = 1e-5,
                    double min_magnitude = 0.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> data;
  for (const auto& shape : input_shapes) {
    std::vector<double> d(echolab::nn::shape_numel(shape));
    for (double& v : d) {
      do {
        v = rng.uniform(lo, hi);
      } while (std::abs(v) < min_magnitude);
    }
    data.push_back(std::move(d));
  }

  auto make_inputs = [&](bool with_grad) {
    std::vector<Var<double>> inputs;
    for (std::size_t i = 0; i < input_shapes.size(); ++i) {
      auto v = echolab::nn::make_var<double>(input_shapes[i], with_grad);
      v->value = data[i];
      inputs.push_back(std::move(v));
    }
    return inputs;
  };

  // fixed weights so the scalarized objective is reproducible
  auto first_out = f(make_inputs(false));
  std::vector<double> weights(first_out->numel());
  Rng wrng(seed ^ 0x9e3779b9u);
  for (double& w : weights) w = wrng.uniform(-1.0, 1.0);

  auto scalarize = [&](const std::vector<Var<double>>& inputs) {
    auto out = f(inputs);
    auto w = echolab::nn::constant<double>(out->shape, weights);
    return echolab::nn::sum_all(echolab::nn::mul(out, w));
  };

  auto inputs = make_inputs(true);
  auto loss = scalarize(inputs);
  echolab::nn::backward(loss);

  Report report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < data[i].size(); ++j) {
      const double saved = data[i][j];
      data[i][j] = saved + step;
      const double up = scalarize(make_inputs(false))->value[0];
      data[i][j] = saved - step;
      const double down = scalarize(make_inputs(false))->value[0];
      data[i][j] = saved;
      const double fd = (up - down) / (2.0 * step);
      report.max_rel_error = std::max(report.max_rel_error, rel_error(inputs[i]->grad[j], fd));
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace gradcheck
