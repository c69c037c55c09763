#include "g2l/sparse.hpp"

#include <cmath>

#include "g2l/errors.hpp"
#include "g2l/kernels.hpp"

namespace g2l {

namespace {

// CSR -> CSC by counting sort; result stored as the CSR of the transpose.
SparseCSR build_transpose(int64_t rows, int64_t cols,
                          const std::vector<int64_t>& offsets,
                          const std::vector<int64_t>& col_idx,
                          const std::vector<double>& vals) {
  std::vector<int64_t> t_offsets(cols + 1, 0);
  for (int64_t c : col_idx) ++t_offsets[c + 1];
  for (int64_t i = 0; i < cols; ++i) t_offsets[i + 1] += t_offsets[i];
  std::vector<int64_t> t_cols(col_idx.size());
  std::vector<double> t_vals(vals.size());
  std::vector<int64_t> cursor(t_offsets.begin(), t_offsets.end() - 1);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t e = offsets[r]; e < offsets[r + 1]; ++e) {
      const int64_t pos = cursor[col_idx[e]]++;
      t_cols[pos] = r;
      t_vals[pos] = vals[e];
    }
  }
  return SparseCSR(cols, rows, std::move(t_offsets), std::move(t_cols),
                   std::move(t_vals));
}

}  // namespace

SparseCSR::SparseCSR(int64_t rows, int64_t cols, std::vector<int64_t> row_offsets,
                     std::vector<int64_t> col_indices, std::vector<double> values) {
  if (rows < 0 || cols < 0 || static_cast<int64_t>(row_offsets.size()) != rows + 1)
    throw validation_error("SparseCSR: bad row_offsets length");
  if (row_offsets.front() != 0)
    throw validation_error("SparseCSR: row_offsets must start at 0");
  for (int64_t i = 0; i < rows; ++i)
    if (row_offsets[i + 1] < row_offsets[i])
      throw validation_error("SparseCSR: row_offsets not nondecreasing");
  const int64_t nnz = row_offsets.back();
  if (static_cast<int64_t>(col_indices.size()) != nnz ||
      static_cast<int64_t>(values.size()) != nnz)
    throw validation_error("SparseCSR: nnz mismatch between offsets and arrays");
  for (int64_t c : col_indices)
    if (c < 0 || c >= cols) throw validation_error("SparseCSR: column index out of range");
  for (double v : values)
    if (!std::isfinite(v)) throw numeric_error("SparseCSR: non-finite value");

  auto data = std::make_shared<Data>();
  data->rows = rows;
  data->cols = cols;
  data->row_offsets = std::move(row_offsets);
  data->col_indices = std::move(col_indices);
  data->values = std::move(values);
  d_ = data;
}

SparseCSR SparseCSR::identity(int64_t n) {
  std::vector<int64_t> offsets(n + 1), cols(n);
  std::vector<double> vals(n, 1.0);
  for (int64_t i = 0; i <= n; ++i) offsets[i] = i;
  for (int64_t i = 0; i < n; ++i) cols[i] = i;
  return SparseCSR(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

const SparseCSR& SparseCSR::transpose() const {
  if (!d_->transpose) {
    auto t = std::make_shared<SparseCSR>(build_transpose(
        d_->rows, d_->cols, d_->row_offsets, d_->col_indices, d_->values));
    // Const-cast confined to memoization of a value that is a pure function
    // of the immutable structure.
    const_cast<Data*>(d_.get())->transpose = t;
  }
  return *d_->transpose;
}

Tensor SparseCSR::densify() const {
  Tensor m(rows(), cols());
  for (int64_t r = 0; r < rows(); ++r)
    for (int64_t e = d_->row_offsets[r]; e < d_->row_offsets[r + 1]; ++e)
      m.at(r, d_->col_indices[e]) += d_->values[e];
  return m;
}

void SparseCSR::multiply_into(const Tensor& x, Tensor& y, bool accumulate) const {
  if (x.rows != cols())
    throw shape_error("spmm: sparse " + shape_str(rows(), cols()) + " x dense " +
                      shape_str(x));
  kernels::spmm(d_->row_offsets.data(), d_->col_indices.data(), d_->values.data(),
                x.ptr(), y.ptr(), rows(), x.cols, accumulate);
}

}  // namespace g2l
