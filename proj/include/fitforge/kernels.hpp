#pragma once

// Data-parallel inner loops. Every kernel has a `_serial` reference that the
// tests compare against. No floating-point reduction crosses threads, so the
// OpenMP output never depends on the thread count. assign_nearest,
// reconstruct and map_chunks match their references bit for bit; mttkrp
// sums in a different order than the GEMM reference and agrees to rounding.

#include <cstddef>
#include <exception>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fitforge {
class DenseTensor3;
}

namespace fitforge::kernels {

int max_threads();

// Nearest-centroid labels for each row of `points`; ties to the lowest index.
// Returns per-point squared distances to the chosen centroid.
std::vector<double> assign_nearest_serial(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                                          std::span<std::size_t> labels);
std::vector<double> assign_nearest(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                                   std::span<std::size_t> labels);

// Matricized-tensor times Khatri-Rao product for mode 0, 1 or 2: the
// right-hand side of the ALS normal equations. The serial version goes
// through the explicit unfolding and Khatri-Rao matrix.
Eigen::MatrixXd mttkrp_serial(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const Eigen::MatrixXd& c, int mode);
Eigen::MatrixXd mttkrp(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       const Eigen::MatrixXd& c, int mode);

// sum_r lambda_r a_r o b_r o c_r
DenseTensor3 reconstruct_serial(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const Eigen::MatrixXd& c);
DenseTensor3 reconstruct(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         const Eigen::MatrixXd& c);

// Runs `work(chunk)` for chunk in [0, n_chunks) and returns the results in
// chunk order; callers reduce them serially so sums never depend on the
// thread count.
template <typename Result>
std::vector<Result> map_chunks_serial(std::size_t n_chunks, const std::function<Result(std::size_t)>& work) {
  std::vector<Result> out;
  out.reserve(n_chunks);
  for (std::size_t i = 0; i < n_chunks; ++i) out.push_back(work(i));
  return out;
}

// The first exception thrown by any chunk is rethrown after the loop.
template <typename Result>
std::vector<Result> map_chunks(std::size_t n_chunks, const std::function<Result(std::size_t)>& work) {
  std::vector<Result> out(n_chunks);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_chunks); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = work(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(fitforge_map_chunks)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace fitforge::kernels
