#pragma once

#include <cstdint>

// Dense and sparse inner-loop kernels. Each kernel comes in a serial
// reference version (`*_serial`) and an OpenMP version (`*_omp`) that
// parallelizes over output rows. Every output element is produced by exactly
// one thread with the same accumulation order as the serial code, so the two
// versions are bit-identical for any thread count. The unsuffixed entry
// points dispatch on problem size.
namespace g2l::kernels {

// c[R x C] (+)= a[R x K] * b[K x C]
void matmul_nn_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_nn_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_nn(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate);

// c[R x C] (+)= a^T * b   with a[K x R], b[K x C]
void matmul_tn_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_tn_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate);

// c[R x C] (+)= a * b^T   with a[R x K], b[C x K]
void matmul_nt_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_nt_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate);

// c[R x C] (+)= S * x  with S in CSR (R rows, nnz = offsets[R]), x[S.cols x C]
void spmm_serial(const int64_t* offsets, const int64_t* cols, const double* vals,
                 const double* x, double* c, int64_t R, int64_t C, bool accumulate);
void spmm_omp(const int64_t* offsets, const int64_t* cols, const double* vals,
              const double* x, double* c, int64_t R, int64_t C, bool accumulate);
void spmm(const int64_t* offsets, const int64_t* cols, const double* vals,
          const double* x, double* c, int64_t R, int64_t C, bool accumulate);

// out[i] = sum of x rows in [offsets[i], offsets[i+1]); contiguous segments.
void segment_sum_serial(const double* x, const int64_t* offsets,
                        double* out, int64_t n_segments, int64_t C);
void segment_sum_omp(const double* x, const int64_t* offsets,
                     double* out, int64_t n_segments, int64_t C);
void segment_sum(const double* x, const int64_t* offsets,
                 double* out, int64_t n_segments, int64_t C);

int threads_in_use();

}  // namespace g2l::kernels
