#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "g2l/rng.hpp"

namespace g2l {

// Dense 2-D tensor, 64-bit reals, row-major. Value semantics over shared
// storage; entries are never mutated once the tensor is handed to an op.
// `node` is the tape handle (-1 = detached from any tape).
struct Tensor {
  int64_t rows = 0;
  int64_t cols = 0;
  std::shared_ptr<std::vector<double>> data;
  int64_t node = -1;

  Tensor() = default;
  Tensor(int64_t r, int64_t c)
      : rows(r), cols(c),
        data(std::make_shared<std::vector<double>>(static_cast<size_t>(r * c), 0.0)) {}

  static Tensor zeros(int64_t r, int64_t c) { return Tensor(r, c); }
  static Tensor full(int64_t r, int64_t c, double v);
  static Tensor identity(int64_t n);
  static Tensor of(std::initializer_list<std::initializer_list<double>> vals);
  static Tensor uniform(int64_t r, int64_t c, double lo, double hi, Rng& rng);
  static Tensor randn(int64_t r, int64_t c, Rng& rng);

  int64_t numel() const { return rows * cols; }
  bool empty() const { return numel() == 0; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }

  double& at(int64_t r, int64_t c) { return (*data)[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return (*data)[static_cast<size_t>(r * cols + c)]; }

  bool all_finite() const;
  // Deep copy with a fresh buffer, detached from any tape.
  Tensor clone() const;
};

std::string shape_str(const Tensor& t);
std::string shape_str(int64_t r, int64_t c);

// Largest |a-b| over all entries; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
// Largest |a-b| / max(1, |a|, |b|); the scaled relative error used by the
// equivalence and oracle comparisons.
double max_rel_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace g2l
