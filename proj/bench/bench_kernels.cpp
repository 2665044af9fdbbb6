#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "impz/kernels.hpp"

using namespace impz::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void select(const benchmark::State& st) {
  set_backend(st.range(0) == 0 ? Backend::serial : Backend::omp);
}

Conv1dDims conv_dims(std::size_t batch) {
  Conv1dDims d;
  d.batch = batch;
  d.in_ch = 16;
  d.out_ch = 16;
  d.length = 256;
  d.kernel = 5;
  d.dilation = 3;
  d.padding = 6;
  d.out_length = 256;
  return d;
}

void BM_conv1d(benchmark::State& st) {
  select(st);
  const Conv1dDims d = conv_dims(36);
  const auto x = random_vec(d.batch * d.in_ch * d.length, 1);
  const auto w = random_vec(d.out_ch * d.in_ch * d.kernel, 2);
  const auto b = random_vec(d.out_ch, 3);
  const auto dy = random_vec(d.batch * d.out_ch * d.out_length, 4);
  std::vector<double> y(dy.size()), dx(x.size()), dw(w.size()), db(b.size());
  for (auto _ : st) {
    conv1d_forward(d, x.data(), w.data(), b.data(), y.data());
    conv1d_backward(d, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_conv_transpose1d(benchmark::State& st) {
  select(st);
  ConvTransposeDims d;
  d.batch = 36;
  d.in_ch = 8;
  d.out_ch = 8;
  d.length = 256;
  d.kernel = 4;
  d.padding = 1;
  d.stride = 2;
  d.out_length = 512;
  const auto x = random_vec(d.batch * d.in_ch * d.length, 5);
  const auto w = random_vec(d.in_ch * d.out_ch * d.kernel, 6);
  const auto b = random_vec(d.out_ch, 7);
  const auto dy = random_vec(d.batch * d.out_ch * d.out_length, 8);
  std::vector<double> y(dy.size()), dx(x.size()), dw(w.size()), db(b.size());
  for (auto _ : st) {
    conv_transpose1d_forward(d, x.data(), w.data(), b.data(), y.data());
    conv_transpose1d_backward(d, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_group_norm(benchmark::State& st) {
  select(st);
  GroupNormDims d;
  d.batch = 36;
  d.channels = 32;
  d.length = 256;
  d.groups = 1;
  const std::size_t n = d.batch * d.channels * d.length;
  const auto x = random_vec(n, 9);
  const auto g = random_vec(d.channels, 10);
  const auto be = random_vec(d.channels, 11);
  const auto dy = random_vec(n, 12);
  std::vector<double> y(n), mean(d.batch * d.groups), inv(d.batch * d.groups), dx(n),
      dg(d.channels), dbe(d.channels);
  for (auto _ : st) {
    group_norm_forward(d, x.data(), g.data(), be.data(), y.data(), mean.data(), inv.data());
    group_norm_backward(d, x.data(), g.data(), mean.data(), inv.data(), dy.data(), dx.data(),
                        dg.data(), dbe.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_gru(benchmark::State& st) {
  select(st);
  GruDims d;
  d.batch = 36;
  d.in_ch = 8;
  d.hidden = 8;
  d.length = 256;
  const std::size_t h3 = 3 * d.hidden;
  const auto x = random_vec(d.batch * d.in_ch * d.length, 13);
  const auto wih = random_vec(d.in_ch * h3, 14);
  const auto whh = random_vec(d.hidden * h3, 15);
  const auto b = random_vec(h3, 16);
  const auto dy = random_vec(d.batch * d.hidden * d.length, 17);
  std::vector<double> y(dy.size()), dx(x.size()), dwih(wih.size()), dwhh(whh.size()),
      db(b.size());
  GruCache cache;
  for (auto _ : st) {
    gru_forward(d, x.data(), wih.data(), whh.data(), b.data(), y.data(), &cache);
    gru_backward(d, x.data(), wih.data(), whh.data(), cache, dy.data(), dx.data(), dwih.data(),
                 dwhh.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

}  // namespace

// Argument 0 runs the serial reference kernels, 1 the OpenMP kernels.
BENCHMARK(BM_conv1d)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_transpose1d)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_group_norm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gru)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
