#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace hrssr::test {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coordinates = 0;
  std::string detail;
};

// Central differences on `count` random coordinates of `input` (double
// precision), compared with autograd. The relative error denominator is
// floored at `floor` so exactly-zero gradients do not divide by zero.
inline GradCheckResult grad_check(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor input,
                                  int count = 10, double h = 1e-3, std::uint64_t seed = 7, double floor = 1e-6) {
  input = input.detach().to(torch::kDouble).clone();
  auto x = input.clone().set_requires_grad(true);
  auto y = f(x);
  auto grad = torch::autograd::grad({y}, {x})[0].detach();

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, input.numel() - 1);
  auto flat = input.view(-1);
  auto gflat = grad.view(-1);
  torch::NoGradGuard no_grad;
  for (int i = 0; i < count; ++i) {
    const auto k = pick(rng);
    const double orig = flat[k].item<double>();
    flat[k] = orig + h;
    const double up = f(input).item<double>();
    flat[k] = orig - h;
    const double down = f(input).item<double>();
    flat[k] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = gflat[k].item<double>();
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.detail = "coord " + std::to_string(k) + " analytic " + std::to_string(analytic) + " numeric " +
                   std::to_string(numeric);
    }
    ++res.coordinates;
  }
  return res;
}

}  // namespace hrssr::test
