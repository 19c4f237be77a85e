#include "chunkmix/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <vector>

#include "chunkmix/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chunkmix::kern {

namespace {
std::atomic<int> g_threads{1};
}  // namespace

int num_threads() { return g_threads.load(std::memory_order_relaxed); }

void set_num_threads(int n) {
  if (n < 1) fail(errc::config, "thread count must be >= 1, got " + std::to_string(n));
  g_threads.store(n, std::memory_order_relaxed);
}

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

ConvDims conv_dims(std::int64_t n, std::int64_t c_in, std::int64_t h, std::int64_t w,
                   std::int64_t c_out, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  if (stride < 1) fail(errc::shape, "conv2d stride must be >= 1, got " + std::to_string(stride));
  const std::int64_t h_out = (h + 2 * pad - k) / stride + 1;
  const std::int64_t w_out = (w + 2 * pad - k) / stride + 1;
  if (h + 2 * pad < k || w + 2 * pad < k || h_out < 1 || w_out < 1)
    fail(errc::shape, "conv2d output extent non-positive: input " + std::to_string(h) + "x" +
                          std::to_string(w) + ", kernel " + std::to_string(k) + ", stride " +
                          std::to_string(stride) + ", pad " + std::to_string(pad));
  return ConvDims{n, c_in, h, w, c_out, k, stride, pad, h_out, w_out};
}

// ---------------------------------------------------------------------------
// optimized kernels
//
// matmul loop nests keep the k index ascending for every output element, the
// same order the ref:: versions use, so the two paths agree to rounding of an
// identical operation sequence.
// ---------------------------------------------------------------------------

void matmul_nn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && m > 1)
#endif
  for (std::int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    const double* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  // transpose b once, then run the nn nest; keeps the inner loop contiguous
  static thread_local std::vector<double> bt;
  bt.resize(static_cast<size_t>(k) * static_cast<size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    for (std::int64_t p = 0; p < k; ++p) bt[static_cast<size_t>(p) * n + j] = bj[p];
  }
  matmul_nn(m, n, k, a, bt.data(), c, accumulate);
}

void matmul_tn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && m > 1)
#endif
  for (std::int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::memset(ci, 0, sizeof(double) * static_cast<size_t>(n));
    for (std::int64_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

namespace {

// column r = (c*k + i)*k + j of the patch matrix, column q = y*w_out + x
void im2col(const ConvDims& d, const double* x, double* col) {
  const std::int64_t q_count = d.h_out * d.w_out;
  for (std::int64_t c = 0; c < d.c_in; ++c) {
    const double* xc = x + c * d.h * d.w;
    for (std::int64_t ki = 0; ki < d.k; ++ki) {
      for (std::int64_t kj = 0; kj < d.k; ++kj) {
        double* row = col + ((c * d.k + ki) * d.k + kj) * q_count;
        for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
          const std::int64_t iy = oy * d.stride - d.pad + ki;
          double* rq = row + oy * d.w_out;
          if (iy < 0 || iy >= d.h) {
            std::memset(rq, 0, sizeof(double) * static_cast<size_t>(d.w_out));
            continue;
          }
          const double* xr = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
            const std::int64_t ix = ox * d.stride - d.pad + kj;
            rq[ox] = (ix >= 0 && ix < d.w) ? xr[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvDims& d, const double* col, double* x) {
  const std::int64_t q_count = d.h_out * d.w_out;
  for (std::int64_t c = 0; c < d.c_in; ++c) {
    double* xc = x + c * d.h * d.w;
    for (std::int64_t ki = 0; ki < d.k; ++ki) {
      for (std::int64_t kj = 0; kj < d.k; ++kj) {
        const double* row = col + ((c * d.k + ki) * d.k + kj) * q_count;
        for (std::int64_t oy = 0; oy < d.h_out; ++oy) {
          const std::int64_t iy = oy * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          const double* rq = row + oy * d.w_out;
          double* xr = xc + iy * d.w;
          for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
            const std::int64_t ix = ox * d.stride - d.pad + kj;
            if (ix >= 0 && ix < d.w) xr[ix] += rq[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_fwd(const ConvDims& d, const double* x, const double* w, double* y) {
  const std::int64_t r_count = d.c_in * d.k * d.k;
  const std::int64_t q_count = d.h_out * d.w_out;
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && d.n > 1)
#endif
  for (std::int64_t s = 0; s < d.n; ++s) {
    static thread_local std::vector<double> col;
    col.resize(static_cast<size_t>(r_count * q_count));
    im2col(d, x + s * d.c_in * d.h * d.w, col.data());
    // y_s[o][q] = sum_r w[o][r] * col[r][q]; serial inside the per-sample region
    double* ys = y + s * d.c_out * q_count;
    for (std::int64_t o = 0; o < d.c_out; ++o) {
      double* yo = ys + o * q_count;
      std::memset(yo, 0, sizeof(double) * static_cast<size_t>(q_count));
      const double* wo = w + o * r_count;
      for (std::int64_t r = 0; r < r_count; ++r) {
        const double wor = wo[r];
        const double* cr = col.data() + r * q_count;
        for (std::int64_t q = 0; q < q_count; ++q) yo[q] += wor * cr[q];
      }
    }
  }
}

void conv2d_bwd_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  const std::int64_t r_count = d.c_in * d.k * d.k;
  const std::int64_t q_count = d.h_out * d.w_out;
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && d.n > 1)
#endif
  for (std::int64_t s = 0; s < d.n; ++s) {
    static thread_local std::vector<double> dcol;
    dcol.resize(static_cast<size_t>(r_count * q_count));
    // dcol[r][q] = sum_o w[o][r] * dy_s[o][q]
    const double* dys = dy + s * d.c_out * q_count;
    std::memset(dcol.data(), 0, sizeof(double) * dcol.size());
    for (std::int64_t o = 0; o < d.c_out; ++o) {
      const double* wo = w + o * r_count;
      const double* dyo = dys + o * q_count;
      for (std::int64_t r = 0; r < r_count; ++r) {
        const double wor = wo[r];
        double* dr = dcol.data() + r * q_count;
        for (std::int64_t q = 0; q < q_count; ++q) dr[q] += wor * dyo[q];
      }
    }
    double* dxs = dx + s * d.c_in * d.h * d.w;
    std::memset(dxs, 0, sizeof(double) * static_cast<size_t>(d.c_in * d.h * d.w));
    col2im_add(d, dcol.data(), dxs);
  }
}

void conv2d_bwd_kernel(const ConvDims& d, const double* dy, const double* x, double* dw) {
  const std::int64_t r_count = d.c_in * d.k * d.k;
  const std::int64_t q_count = d.h_out * d.w_out;
  std::memset(dw, 0, sizeof(double) * static_cast<size_t>(d.c_out * r_count));
  // plain locals: filled serially, then read by every worker in the region below
  std::vector<double> colt(static_cast<size_t>(r_count * q_count));
  std::vector<double> col(static_cast<size_t>(r_count * q_count));
  // samples accumulate in order; rows of dw are independent inside a sample
  for (std::int64_t s = 0; s < d.n; ++s) {
    im2col(d, x + s * d.c_in * d.h * d.w, col.data());
    // transpose col so the inner loop of the matmul is contiguous
    for (std::int64_t r = 0; r < r_count; ++r)
      for (std::int64_t q = 0; q < q_count; ++q)
        colt[static_cast<size_t>(q) * r_count + r] = col[static_cast<size_t>(r) * q_count + q];
    const double* dys = dy + s * d.c_out * q_count;
    const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && d.c_out > 1)
#endif
    for (std::int64_t o = 0; o < d.c_out; ++o) {
      double* dwo = dw + o * r_count;
      const double* dyo = dys + o * q_count;
      for (std::int64_t q = 0; q < q_count; ++q) {
        const double g = dyo[q];
        const double* ct = colt.data() + q * r_count;
        for (std::int64_t r = 0; r < r_count; ++r) dwo[r] += g * ct[r];
      }
    }
  }
}

void upsample2x_fwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* x, double* y) {
  const std::int64_t planes = n * c;
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && planes > 1)
#endif
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* xp = x + p * h * w;
    double* yp = y + p * 4 * h * w;
    for (std::int64_t i = 0; i < h; ++i) {
      double* r0 = yp + (2 * i) * (2 * w);
      double* r1 = yp + (2 * i + 1) * (2 * w);
      const double* xr = xp + i * w;
      for (std::int64_t j = 0; j < w; ++j) {
        const double v = xr[j];
        r0[2 * j] = v;
        r0[2 * j + 1] = v;
        r1[2 * j] = v;
        r1[2 * j + 1] = v;
      }
    }
  }
}

void upsample2x_bwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* dy, double* dx) {
  const std::int64_t planes = n * c;
  const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && planes > 1)
#endif
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* dyp = dy + p * 4 * h * w;
    double* dxp = dx + p * h * w;
    for (std::int64_t i = 0; i < h; ++i) {
      const double* r0 = dyp + (2 * i) * (2 * w);
      const double* r1 = dyp + (2 * i + 1) * (2 * w);
      double* dxr = dxp + i * w;
      // left-to-right sums, the same order the reference visits the block
      for (std::int64_t j = 0; j < w; ++j)
        dxr[j] = r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
    }
  }
}

// ---------------------------------------------------------------------------
// serial reference implementations
// ---------------------------------------------------------------------------

namespace ref {

void matmul_nn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void matmul_nt(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
}

void matmul_tn(std::int64_t m, std::int64_t n, std::int64_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void conv2d_fwd(const ConvDims& d, const double* x, const double* w, double* y) {
  for (std::int64_t s = 0; s < d.n; ++s)
    for (std::int64_t o = 0; o < d.c_out; ++o)
      for (std::int64_t oy = 0; oy < d.h_out; ++oy)
        for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
          double acc = 0.0;
          for (std::int64_t c = 0; c < d.c_in; ++c)
            for (std::int64_t ki = 0; ki < d.k; ++ki)
              for (std::int64_t kj = 0; kj < d.k; ++kj) {
                const std::int64_t iy = oy * d.stride - d.pad + ki;
                const std::int64_t ix = ox * d.stride - d.pad + kj;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                acc += x[((s * d.c_in + c) * d.h + iy) * d.w + ix] *
                       w[((o * d.c_in + c) * d.k + ki) * d.k + kj];
              }
          y[((s * d.c_out + o) * d.h_out + oy) * d.w_out + ox] = acc;
        }
}

void conv2d_bwd_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  std::fill(dx, dx + d.n * d.c_in * d.h * d.w, 0.0);
  for (std::int64_t s = 0; s < d.n; ++s)
    for (std::int64_t o = 0; o < d.c_out; ++o)
      for (std::int64_t oy = 0; oy < d.h_out; ++oy)
        for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
          const double g = dy[((s * d.c_out + o) * d.h_out + oy) * d.w_out + ox];
          for (std::int64_t c = 0; c < d.c_in; ++c)
            for (std::int64_t ki = 0; ki < d.k; ++ki)
              for (std::int64_t kj = 0; kj < d.k; ++kj) {
                const std::int64_t iy = oy * d.stride - d.pad + ki;
                const std::int64_t ix = ox * d.stride - d.pad + kj;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                dx[((s * d.c_in + c) * d.h + iy) * d.w + ix] +=
                    g * w[((o * d.c_in + c) * d.k + ki) * d.k + kj];
              }
        }
}

void conv2d_bwd_kernel(const ConvDims& d, const double* dy, const double* x, double* dw) {
  std::fill(dw, dw + d.c_out * d.c_in * d.k * d.k, 0.0);
  for (std::int64_t s = 0; s < d.n; ++s)
    for (std::int64_t o = 0; o < d.c_out; ++o)
      for (std::int64_t oy = 0; oy < d.h_out; ++oy)
        for (std::int64_t ox = 0; ox < d.w_out; ++ox) {
          const double g = dy[((s * d.c_out + o) * d.h_out + oy) * d.w_out + ox];
          for (std::int64_t c = 0; c < d.c_in; ++c)
            for (std::int64_t ki = 0; ki < d.k; ++ki)
              for (std::int64_t kj = 0; kj < d.k; ++kj) {
                const std::int64_t iy = oy * d.stride - d.pad + ki;
                const std::int64_t ix = ox * d.stride - d.pad + kj;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                dw[((o * d.c_in + c) * d.k + ki) * d.k + kj] +=
                    g * x[((s * d.c_in + c) * d.h + iy) * d.w + ix];
              }
        }
}

void upsample2x_fwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* x, double* y) {
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t i = 0; i < 2 * h; ++i)
      for (std::int64_t j = 0; j < 2 * w; ++j)
        y[(p * 2 * h + i) * 2 * w + j] = x[(p * h + i / 2) * w + j / 2];
}

void upsample2x_bwd(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    const double* dy, double* dx) {
  std::fill(dx, dx + n * c * h * w, 0.0);
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t i = 0; i < 2 * h; ++i)
      for (std::int64_t j = 0; j < 2 * w; ++j)
        dx[(p * h + i / 2) * w + j / 2] += dy[(p * 2 * h + i) * 2 * w + j];
}

}  // namespace ref

}  // namespace chunkmix::kern
