#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "g2l/tensor.hpp"

namespace g2l {

// Immutable sparse matrix in CSR form. Shared storage so copies are cheap and
// tapes can hold references across the backward pass. The transpose structure
// is built at construction; spmm backward runs it forward, which keeps the
// gradient accumulation order fixed and race-free.
class SparseCSR {
 public:
  SparseCSR() = default;
  // Validates structure: offsets nondecreasing, col indices in range,
  // values finite.
  SparseCSR(int64_t rows, int64_t cols, std::vector<int64_t> row_offsets,
            std::vector<int64_t> col_indices, std::vector<double> values);

  static SparseCSR identity(int64_t n);

  int64_t rows() const { return d_ ? d_->rows : 0; }
  int64_t cols() const { return d_ ? d_->cols : 0; }
  int64_t nnz() const { return d_ ? static_cast<int64_t>(d_->values.size()) : 0; }

  const std::vector<int64_t>& row_offsets() const { return d_->row_offsets; }
  const std::vector<int64_t>& col_indices() const { return d_->col_indices; }
  const std::vector<double>& values() const { return d_->values; }

  const SparseCSR& transpose() const;

  Tensor densify() const;
  // y (+)= this * x
  void multiply_into(const Tensor& x, Tensor& y, bool accumulate) const;

  bool valid() const { return static_cast<bool>(d_); }

 private:
  struct Data {
    int64_t rows = 0, cols = 0;
    std::vector<int64_t> row_offsets, col_indices;
    std::vector<double> values;
    std::shared_ptr<const SparseCSR> transpose;
  };
  std::shared_ptr<const Data> d_;
};

}  // namespace g2l
