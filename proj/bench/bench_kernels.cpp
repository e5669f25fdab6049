// Serial references against the OpenMP kernels. Thread count comes from
// OMP_NUM_THREADS as usual.

#include <benchmark/benchmark.h>

#include <random>

#include "fitforge/cp_tensor.hpp"
#include "fitforge/kernels.hpp"
#include "fitforge/models.hpp"

namespace kernels = fitforge::kernels;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return u(rng); });
}

fitforge::DenseTensor3 random_tensor(Eigen::Index I, Eigen::Index J, Eigen::Index K) {
  fitforge::DenseTensor3 x(I, J, K);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : x.values()) v = u(rng);
  return x;
}

// users x route clusters x context features, roughly the shape the pipeline builds
constexpr Eigen::Index kUsers = 200, kClusters = 32, kContext = 16;

template <bool Parallel>
void BM_mttkrp(benchmark::State& state) {
  const auto R = state.range(0);
  const auto x = random_tensor(kUsers, kClusters, kContext);
  const auto a = random_matrix(kUsers, R, 2), b = random_matrix(kClusters, R, 3), c = random_matrix(kContext, R, 4);
  for (auto _ : state) {
    for (int mode = 0; mode < 3; ++mode) {
      auto m = Parallel ? kernels::mttkrp(x, a, b, c, mode) : kernels::mttkrp_serial(x, a, b, c, mode);
      benchmark::DoNotOptimize(m.data());
    }
  }
}
BENCHMARK(BM_mttkrp<false>)->Name("mttkrp/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_mttkrp<true>)->Name("mttkrp/omp")->Arg(4)->Arg(16);

template <bool Parallel>
void BM_reconstruct(benchmark::State& state) {
  const auto R = state.range(0);
  const Eigen::VectorXd lambda = Eigen::VectorXd::Ones(R);
  const auto a = random_matrix(kUsers, R, 2), b = random_matrix(kClusters, R, 3), c = random_matrix(kContext, R, 4);
  for (auto _ : state) {
    auto x = Parallel ? kernels::reconstruct(lambda, a, b, c) : kernels::reconstruct_serial(lambda, a, b, c);
    benchmark::DoNotOptimize(x.values().data());
  }
}
BENCHMARK(BM_reconstruct<false>)->Name("reconstruct/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_reconstruct<true>)->Name("reconstruct/omp")->Arg(4)->Arg(16);

template <bool Parallel>
void BM_assign(benchmark::State& state) {
  const auto n = state.range(0);
  const auto points = random_matrix(n, 50, 5);
  const auto centroids = random_matrix(32, 50, 6);
  std::vector<std::size_t> labels(static_cast<std::size_t>(n));
  for (auto _ : state) {
    auto d = Parallel ? kernels::assign_nearest(points, centroids, labels)
                      : kernels::assign_nearest_serial(points, centroids, labels);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_assign<false>)->Name("assign_nearest/serial")->Arg(2000)->Arg(20000);
BENCHMARK(BM_assign<true>)->Name("assign_nearest/omp")->Arg(2000)->Arg(20000);

// Chunked gradient-style work: one small matrix product per chunk.
template <bool Parallel>
void BM_map_chunks(benchmark::State& state) {
  const auto chunks = static_cast<std::size_t>(state.range(0));
  const auto w = random_matrix(64, 64, 7);
  const auto x = random_matrix(64, 8, 8);
  const std::function<double(std::size_t)> work = [&](std::size_t i) {
    Eigen::MatrixXd y = w * x;
    for (int k = 0; k < 4; ++k) y = (w * y).array().tanh().matrix();
    return y.sum() + static_cast<double>(i);
  };
  for (auto _ : state) {
    auto out = Parallel ? kernels::map_chunks<double>(chunks, work) : kernels::map_chunks_serial<double>(chunks, work);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_map_chunks<false>)->Name("map_chunks/serial")->Arg(16)->Arg(128);
BENCHMARK(BM_map_chunks<true>)->Name("map_chunks/omp")->Arg(16)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
