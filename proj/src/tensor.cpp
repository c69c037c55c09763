#include "g2l/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "g2l/errors.hpp"

namespace g2l {

Tensor Tensor::full(int64_t r, int64_t c, double v) {
  Tensor t(r, c);
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

Tensor Tensor::identity(int64_t n) {
  Tensor t(n, n);
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::of(std::initializer_list<std::initializer_list<double>> vals) {
  const int64_t r = static_cast<int64_t>(vals.size());
  const int64_t c = r > 0 ? static_cast<int64_t>(vals.begin()->size()) : 0;
  Tensor t(r, c);
  int64_t i = 0;
  for (const auto& row : vals) {
    if (static_cast<int64_t>(row.size()) != c)
      throw shape_error("Tensor::of: ragged rows");
    int64_t j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::uniform(int64_t r, int64_t c, double lo, double hi, Rng& rng) {
  Tensor t(r, c);
  for (auto& v : *t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::randn(int64_t r, int64_t c, Rng& rng) {
  Tensor t(r, c);
  for (auto& v : *t.data) v = rng.normal();
  return t;
}

bool Tensor::all_finite() const {
  if (!data) return true;
  for (double v : *data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::clone() const {
  Tensor t(rows, cols);
  if (data) *t.data = *data;
  return t;
}

std::string shape_str(int64_t r, int64_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.rows, t.cols); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw shape_error("max_abs_diff: " + shape_str(a) + " vs " + shape_str(b));
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs((*a.data)[i] - (*b.data)[i]));
  return m;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw shape_error("max_rel_diff: " + shape_str(a) + " vs " + shape_str(b));
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double x = (*a.data)[i], y = (*b.data)[i];
    const double den = std::max(1.0, std::max(std::fabs(x), std::fabs(y)));
    m = std::max(m, std::fabs(x - y) / den);
  }
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  if (a.numel() == 0) return true;
  return std::memcmp(a.ptr(), b.ptr(), sizeof(double) * a.numel()) == 0;
}

}  // namespace g2l
