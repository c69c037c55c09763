#include "g2l/kernels.hpp"

#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace g2l::kernels {

namespace {

// Below this many inner-loop operations the fork/join overhead dominates.
constexpr int64_t kParallelCutoff = 1 << 15;

inline void row_nn(const double* a, const double* b, double* c,
                   int64_t i, int64_t K, int64_t C, bool accumulate) {
  double* ci = c + i * C;
  if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(C));
  const double* ai = a + i * K;
  for (int64_t k = 0; k < K; ++k) {
    const double aik = ai[k];
    const double* bk = b + k * C;
    for (int64_t j = 0; j < C; ++j) ci[j] += aik * bk[j];
  }
}

inline void row_tn(const double* a, const double* b, double* c,
                   int64_t i, int64_t R, int64_t K, int64_t C, bool accumulate) {
  double* ci = c + i * C;
  if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(C));
  for (int64_t k = 0; k < K; ++k) {
    const double aki = a[k * R + i];
    const double* bk = b + k * C;
    for (int64_t j = 0; j < C; ++j) ci[j] += aki * bk[j];
  }
}

inline void row_nt(const double* a, const double* b, double* c,
                   int64_t i, int64_t K, int64_t C, bool accumulate) {
  const double* ai = a + i * K;
  double* ci = c + i * C;
  for (int64_t j = 0; j < C; ++j) {
    const double* bj = b + j * K;
    double acc = 0.0;
    for (int64_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
    ci[j] = accumulate ? ci[j] + acc : acc;
  }
}

inline void row_spmm(const int64_t* offsets, const int64_t* cols, const double* vals,
                     const double* x, double* c, int64_t i, int64_t C, bool accumulate) {
  double* ci = c + i * C;
  if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(C));
  for (int64_t e = offsets[i]; e < offsets[i + 1]; ++e) {
    const double v = vals[e];
    const double* xr = x + cols[e] * C;
    for (int64_t j = 0; j < C; ++j) ci[j] += v * xr[j];
  }
}

inline void row_segsum(const double* x, const int64_t* offsets, double* out,
                       int64_t i, int64_t C) {
  double* oi = out + i * C;
  std::memset(oi, 0, sizeof(double) * static_cast<size_t>(C));
  for (int64_t p = offsets[i]; p < offsets[i + 1]; ++p) {
    const double* xp = x + p * C;
    for (int64_t j = 0; j < C; ++j) oi[j] += xp[j];
  }
}

}  // namespace

void matmul_nn_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate) {
  for (int64_t i = 0; i < R; ++i) row_nn(a, b, c, i, K, C, accumulate);
}

void matmul_nn_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < R; ++i) row_nn(a, b, c, i, K, C, accumulate);
}

void matmul_nn(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate) {
  if (R * K * C >= kParallelCutoff)
    matmul_nn_omp(a, b, c, R, K, C, accumulate);
  else
    matmul_nn_serial(a, b, c, R, K, C, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate) {
  for (int64_t i = 0; i < R; ++i) row_tn(a, b, c, i, R, K, C, accumulate);
}

void matmul_tn_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < R; ++i) row_tn(a, b, c, i, R, K, C, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate) {
  if (R * K * C >= kParallelCutoff)
    matmul_tn_omp(a, b, c, R, K, C, accumulate);
  else
    matmul_tn_serial(a, b, c, R, K, C, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      int64_t R, int64_t K, int64_t C, bool accumulate) {
  for (int64_t i = 0; i < R; ++i) row_nt(a, b, c, i, K, C, accumulate);
}

void matmul_nt_omp(const double* a, const double* b, double* c,
                   int64_t R, int64_t K, int64_t C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < R; ++i) row_nt(a, b, c, i, K, C, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c,
               int64_t R, int64_t K, int64_t C, bool accumulate) {
  if (R * K * C >= kParallelCutoff)
    matmul_nt_omp(a, b, c, R, K, C, accumulate);
  else
    matmul_nt_serial(a, b, c, R, K, C, accumulate);
}

void spmm_serial(const int64_t* offsets, const int64_t* cols, const double* vals,
                 const double* x, double* c, int64_t R, int64_t C, bool accumulate) {
  for (int64_t i = 0; i < R; ++i) row_spmm(offsets, cols, vals, x, c, i, C, accumulate);
}

void spmm_omp(const int64_t* offsets, const int64_t* cols, const double* vals,
              const double* x, double* c, int64_t R, int64_t C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < R; ++i) row_spmm(offsets, cols, vals, x, c, i, C, accumulate);
}

void spmm(const int64_t* offsets, const int64_t* cols, const double* vals,
          const double* x, double* c, int64_t R, int64_t C, bool accumulate) {
  if (offsets[R] * C >= kParallelCutoff)
    spmm_omp(offsets, cols, vals, x, c, R, C, accumulate);
  else
    spmm_serial(offsets, cols, vals, x, c, R, C, accumulate);
}

void segment_sum_serial(const double* x, const int64_t* offsets,
                        double* out, int64_t n_segments, int64_t C) {
  for (int64_t i = 0; i < n_segments; ++i) row_segsum(x, offsets, out, i, C);
}

void segment_sum_omp(const double* x, const int64_t* offsets,
                     double* out, int64_t n_segments, int64_t C) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_segments; ++i) row_segsum(x, offsets, out, i, C);
}

void segment_sum(const double* x, const int64_t* offsets,
                 double* out, int64_t n_segments, int64_t C) {
  if (offsets[n_segments] * C >= kParallelCutoff)
    segment_sum_omp(x, offsets, out, n_segments, C);
  else
    segment_sum_serial(x, offsets, out, n_segments, C);
}

int threads_in_use() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace g2l::kernels
