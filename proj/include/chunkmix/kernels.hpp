#pragma once

#include <cstdint>

// Dense compute kernels behind the autodiff ops.
//
// Every kernel exists twice: the optimized version below (OpenMP-parallel when
// enabled) and a naive serial version under kern::ref that is kept as the
// reference for tests and benchmarks. Parallelism is always over independent
// output elements with a fixed per-element accumulation order, so results are
// bitwise identical for any thread count. The process-wide default is one
// thread; callers opt in via set_num_threads.

namespace chunkmix::kern {

int num_threads();
void set_num_threads(int n);
bool openmp_enabled();

struct ConvDims {
  std::int64_t n;            // batch
  std::int64_t c_in, h, w;   // input channels / spatial
  std::int64_t c_out, k;     // output channels, square kernel extent
  std::int64_t stride, pad;
  std::int64_t h_out, w_out;
};

// Output extents for a convolution; throws Error(shape) when non-positive.
ConvDims conv_dims(std::int64_t n, std::int64_t c_in, std::int64_t h, std::int64_t w,
                   std::int64_t c_out, std::int64_t k, std::int64_t stride, std::int64_t pad);

// c[m x n] (+)= a[m x k] * b[k x n]
void matmul_nn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);
// c[m x n] (+)= a[m x k] * b[n x k]^T
void matmul_nt(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);
// c[m x n] (+)= a[k x m]^T * b[k x n]
void matmul_tn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);

// x: [n, c_in, h, w], w: [c_out, c_in, k, k], y: [n, c_out, h_out, w_out]
void conv2d_fwd(const ConvDims& d, const double* x, const double* w, double* y);
void conv2d_bwd_input(const ConvDims& d, const double* dy, const double* w, double* dx);
void conv2d_bwd_kernel(const ConvDims& d, const double* dy, const double* x, double* dw);

// nearest-neighbor 2x upsampling, NCHW
void upsample2x_fwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* x, double* y);
void upsample2x_bwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* dy, double* dx);

namespace ref {

// Naive serial implementations, loop order spelled out. Slow on purpose.
void matmul_nn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);
void matmul_nt(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);
void matmul_tn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate);
void conv2d_fwd(const ConvDims& d, const double* x, const double* w, double* y);
void conv2d_bwd_input(const ConvDims& d, const double* dy, const double* w, double* dx);
void conv2d_bwd_kernel(const ConvDims& d, const double* dy, const double* x, double* dw);
void upsample2x_fwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* x, double* y);
void upsample2x_bwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* dy, double* dx);

}  // namespace ref

}  // namespace chunkmix::kern
