// sasv/tensor.hpp

// Copyright 2026  The sasv-toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Small dense kernel: row-major matrices, fully connected layers with
// hand-written backward passes, Adam, and a central-difference gradient
// checker.  Everything is double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sasv/errors.hpp"

namespace sasv {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

/// Mutable views over every trainable array of a model, in a fixed order.
using ParamList = std::vector<std::span<double>>;

inline constexpr double kDefaultLeakySlope = 0.01;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0)
      throw ShapeError("Matrix: dimensions must be >= 1, got " + shape_string(rows, cols));
  }
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0)
      throw ShapeError("Matrix: dimensions must be >= 1, got " + shape_string(rows, cols));
    if (data_.size() != rows * cols)
      throw ShapeError("Matrix: " + std::to_string(data_.size()) +
                       " entries do not fill " + shape_string(rows, cols));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Fully connected layer computing y = W x + b, with W stored out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}
  DenseLayer(Matrix w, Vector b) : weight(std::move(w)), bias(std::move(b)) {
    if (bias.size() != weight.rows())
      throw ShapeError("DenseLayer: bias length " + std::to_string(bias.size()) +
                       " does not match weight " + weight.shape());
  }

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  ParamList params() { return {std::span<double>(weight.data()), std::span<double>(bias)}; }

  DenseLayer zeros_like() const { return DenseLayer(in_dim(), out_dim()); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Glorot-uniform weights, zero bias.
inline DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer(in, out);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : layer.weight.data()) w = dist(rng);
  return layer;
}

inline Vector dense_apply(const DenseLayer& layer, std::span<const double> x) {
  if (x.size() != layer.in_dim())
    throw ShapeError("dense_apply: input 1x" + std::to_string(x.size()) +
                     " does not match layer weight " + layer.weight.shape());
  Vector y(layer.bias);
  for (std::size_t o = 0; o < layer.out_dim(); ++o) {
    const auto w = layer.weight.row(o);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    y[o] += s;
  }
  return y;
}

/// Row-wise application: each row of `x` is one input vector.
inline Matrix dense_apply(const DenseLayer& layer, const Matrix& x) {
  if (x.cols() != layer.in_dim())
    throw ShapeError("dense_apply: input " + x.shape() + " does not match layer weight " +
                     layer.weight.shape());
  Matrix y(x.rows(), layer.out_dim());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Vector yr = dense_apply(layer, x.row(r));
    std::copy(yr.begin(), yr.end(), y.row(r).begin());
  }
  return y;
}

/// Accumulates dW += dy x^T and db += dy into `grad`; returns dx.
inline Vector dense_backward(const DenseLayer& layer, std::span<const double> x,
                             std::span<const double> dy, DenseLayer& grad) {
  if (dy.size() != layer.out_dim() || x.size() != layer.in_dim())
    throw ShapeError("dense_backward: x 1x" + std::to_string(x.size()) + ", dy 1x" +
                     std::to_string(dy.size()) + " vs layer weight " + layer.weight.shape());
  Vector dx(layer.in_dim(), 0.0);
  for (std::size_t o = 0; o < layer.out_dim(); ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    grad.bias[o] += g;
    auto gw = grad.weight.row(o);
    const auto w = layer.weight.row(o);
    for (std::size_t i = 0; i < x.size(); ++i) {
      gw[i] += g * x[i];
      dx[i] += g * w[i];
    }
  }
  return dx;
}

inline Vector leaky_relu(std::span<const double> x, double slope = kDefaultLeakySlope) {
  Vector y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(x[i], slope * x[i]);
  return y;
}

/// Backward of leaky_relu given its pre-activation input.
inline Vector leaky_relu_backward(std::span<const double> x, std::span<const double> dy,
                                  double slope = kDefaultLeakySlope) {
  Vector dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
  return dx;
}

/// Max-shifted softmax.
inline Vector softmax(std::span<const double> x) {
  Vector y(x.size());
  if (x.empty()) return y;
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (double& v : y) v /= z;
  return y;
}

/// Given p = softmax(s) and dL/dp, returns dL/ds.
inline Vector softmax_backward(std::span<const double> p, std::span<const double> dp) {
  const double inner = dot(p, dp);
  Vector ds(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) ds[i] = p[i] * (dp[i] - inner);
  return ds;
}

inline std::size_t total_size(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

inline void zero_fill(const ParamList& params) {
  for (auto p : params) std::fill(p.begin(), p.end(), 0.0);
}

inline void scale(const ParamList& params, double factor) {
  for (auto p : params)
    for (double& v : p) v *= factor;
}

struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;

  AdamState() = default;
  explicit AdamState(const ParamList& params) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.size(), 0.0);
      second_moment.emplace_back(p.size(), 0.0);
    }
  }
};

/// One bias-corrected Adam step, in place on `params` and `state`.
inline void adam_update(const ParamList& params, const ParamList& grads, AdamState& state,
                        double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size())
    throw ShapeError("adam_update: " + std::to_string(params.size()) + " parameter arrays, " +
                     std::to_string(grads.size()) + " gradient arrays, " +
                     std::to_string(state.first_moment.size()) + " moment arrays");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || params[k].size() != state.first_moment[k].size() ||
        params[k].size() != state.second_moment[k].size())
      throw ShapeError("adam_update: array " + std::to_string(k) + " has parameter length " +
                       std::to_string(params[k].size()) + " but gradient length " +
                       std::to_string(grads[k].size()) + " and moment length " +
                       std::to_string(state.first_moment[k].size()));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    Vector& m = state.first_moment[k];
    Vector& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/**
   Compares analytic gradients with central differences.

   `loss` must read the current values behind `params`; each entry is
   perturbed by +-eps in turn and restored afterwards.  Returns
   max |analytic - numeric| / max(1, |analytic|) over all entries.
*/
inline double grad_check(const std::function<double()>& loss, const ParamList& params,
                         const ParamList& analytic, double eps = 1e-4) {
  if (!(eps >= 1e-6 && eps <= 1e-3))
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  if (params.size() != analytic.size())
    throw ShapeError("grad_check: parameter and gradient array counts differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != analytic[k].size())
      throw ShapeError("grad_check: array " + std::to_string(k) + " length mismatch");
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      double& w = params[k][i];
      const double saved = w;
      w = saved + eps;
      const double up = loss();
      w = saved - eps;
      const double down = loss();
      w = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::domain_error("grad_check: non-finite loss at array " + std::to_string(k) +
                                " entry " + std::to_string(i));
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace sasv
