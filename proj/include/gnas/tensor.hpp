#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gnas/util.hpp"

namespace gnas {

/// Dense multi-dimensional array of doubles with an optional gradient slot.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> grad;  // empty = absent; same length as v when present
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel(shape)), 0.0);
  }

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) {
      GNAS_CHECK(e > 0, "tensor extent must be positive");
      n *= e;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  void ensure_grad() {
    if (grad.size() != v.size()) grad.assign(v.size(), 0.0);
  }
  bool has_grad() const { return grad.size() == v.size() && !v.empty(); }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double c) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), c);
    return t;
  }
  static Tensor scalar(double c) { return full({1}, c); }
  static Tensor from(std::vector<int> s, std::vector<double> vals) {
    Tensor t;
    t.shape = std::move(s);
    GNAS_CHECK(static_cast<int64_t>(vals.size()) == numel(t.shape),
               "value count does not match shape");
    t.v = std::move(vals);
    return t;
  }
  static Tensor uniform(std::vector<int> s, double lo, double hi, Rng& rng) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& x : t.v) x = d(rng);
    return t;
  }
  static Tensor gaussian(std::vector<int> s, double sigma, Rng& rng) {
    Tensor t(std::move(s));
    std::normal_distribution<double> d(0.0, sigma);
    for (double& x : t.v) x = d(rng);
    return t;
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace gnas
