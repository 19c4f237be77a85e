#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "chunkmix/common.hpp"
#include "chunkmix/kernels.hpp"

// Optimized kernels against their serial references, at the shapes the
// 16x16 model actually runs: encoder/decoder convolutions at batch 32 and
// the fc matmuls. Thread-count variants only make sense for the optimized
// side; the references are single-threaded by construction.

namespace {

using namespace chunkmix;

std::vector<double> randn(std::int64_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(count));
  for (double& x : v) x = rng.normal();
  return v;
}

void set_threads(benchmark::State& state) {
  kern::set_num_threads(static_cast<int>(state.range(0)));
}

// fc-sized matmul: features [32 x 512] times weights [32 x 512]^T style shapes
constexpr std::int64_t kM = 32, kN = 512, kK = 512;

void bm_matmul_nn(benchmark::State& state) {
  set_threads(state);
  const std::vector<double> a = randn(kM * kK, 1);
  const std::vector<double> b = randn(kK * kN, 2);
  std::vector<double> c(kM * kN);
  for (auto _ : state) {
    kern::matmul_nn(kM, kN, kK, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
}

void bm_matmul_nn_ref(benchmark::State& state) {
  const std::vector<double> a = randn(kM * kK, 1);
  const std::vector<double> b = randn(kK * kN, 2);
  std::vector<double> c(kM * kN);
  for (auto _ : state) {
    kern::ref::matmul_nn(kM, kN, kK, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
}

// first encoder convolution at batch 32: 3->32 channels, 16x16, k3 s2 p1
kern::ConvDims enc_dims() { return kern::conv_dims(32, 3, 16, 16, 32, 3, 2, 1); }

void bm_conv2d_fwd(benchmark::State& state) {
  set_threads(state);
  const kern::ConvDims d = enc_dims();
  const std::vector<double> x = randn(d.n * d.c_in * d.h * d.w, 3);
  const std::vector<double> w = randn(d.c_out * d.c_in * d.k * d.k, 4);
  std::vector<double> y(static_cast<size_t>(d.n * d.c_out * d.h_out * d.w_out));
  for (auto _ : state) {
    kern::conv2d_fwd(d, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_conv2d_fwd_ref(benchmark::State& state) {
  const kern::ConvDims d = enc_dims();
  const std::vector<double> x = randn(d.n * d.c_in * d.h * d.w, 3);
  const std::vector<double> w = randn(d.c_out * d.c_in * d.k * d.k, 4);
  std::vector<double> y(static_cast<size_t>(d.n * d.c_out * d.h_out * d.w_out));
  for (auto _ : state) {
    kern::ref::conv2d_fwd(d, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_conv2d_bwd_input(benchmark::State& state) {
  set_threads(state);
  const kern::ConvDims d = enc_dims();
  const std::vector<double> dy = randn(d.n * d.c_out * d.h_out * d.w_out, 5);
  const std::vector<double> w = randn(d.c_out * d.c_in * d.k * d.k, 6);
  std::vector<double> dx(static_cast<size_t>(d.n * d.c_in * d.h * d.w));
  for (auto _ : state) {
    kern::conv2d_bwd_input(d, dy.data(), w.data(), dx.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void bm_conv2d_bwd_input_ref(benchmark::State& state) {
  const kern::ConvDims d = enc_dims();
  const std::vector<double> dy = randn(d.n * d.c_out * d.h_out * d.w_out, 5);
  const std::vector<double> w = randn(d.c_out * d.c_in * d.k * d.k, 6);
  std::vector<double> dx(static_cast<size_t>(d.n * d.c_in * d.h * d.w));
  for (auto _ : state) {
    kern::ref::conv2d_bwd_input(d, dy.data(), w.data(), dx.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void bm_conv2d_bwd_kernel(benchmark::State& state) {
  set_threads(state);
  const kern::ConvDims d = enc_dims();
  const std::vector<double> dy = randn(d.n * d.c_out * d.h_out * d.w_out, 7);
  const std::vector<double> x = randn(d.n * d.c_in * d.h * d.w, 8);
  std::vector<double> dw(static_cast<size_t>(d.c_out * d.c_in * d.k * d.k));
  for (auto _ : state) {
    kern::conv2d_bwd_kernel(d, dy.data(), x.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void bm_conv2d_bwd_kernel_ref(benchmark::State& state) {
  const kern::ConvDims d = enc_dims();
  const std::vector<double> dy = randn(d.n * d.c_out * d.h_out * d.w_out, 7);
  const std::vector<double> x = randn(d.n * d.c_in * d.h * d.w, 8);
  std::vector<double> dw(static_cast<size_t>(d.c_out * d.c_in * d.k * d.k));
  for (auto _ : state) {
    kern::ref::conv2d_bwd_kernel(d, dy.data(), x.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void bm_upsample2x(benchmark::State& state) {
  set_threads(state);
  const std::vector<double> x = randn(32 * 128 * 2 * 2, 9);
  std::vector<double> y(static_cast<size_t>(32 * 128 * 4 * 4));
  for (auto _ : state) {
    kern::upsample2x_fwd(32, 128, 2, 2, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_upsample2x_ref(benchmark::State& state) {
  const std::vector<double> x = randn(32 * 128 * 2 * 2, 9);
  std::vector<double> y(static_cast<size_t>(32 * 128 * 4 * 4));
  for (auto _ : state) {
    kern::ref::upsample2x_fwd(32, 128, 2, 2, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(bm_matmul_nn)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_matmul_nn_ref);
BENCHMARK(bm_conv2d_fwd)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_conv2d_fwd_ref);
BENCHMARK(bm_conv2d_bwd_input)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_conv2d_bwd_input_ref);
BENCHMARK(bm_conv2d_bwd_kernel)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_conv2d_bwd_kernel_ref);
BENCHMARK(bm_upsample2x)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(bm_upsample2x_ref);

}  // namespace

BENCHMARK_MAIN();
