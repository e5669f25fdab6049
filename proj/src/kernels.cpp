#include "fitforge/kernels.hpp"

#include <limits>

#include <omp.h>

#include "fitforge/cp_tensor.hpp"
#include "fitforge/errors.hpp"

namespace fitforge::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace {

void check_assign_args(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                       std::span<std::size_t> labels) {
  if (points.cols() != centroids.cols()) throw DimensionError("points and centroids differ in dimension");
  if (labels.size() != static_cast<std::size_t>(points.rows())) throw DimensionError("one label per point");
  if (centroids.rows() == 0) throw DimensionError("no centroids");
}

inline double nearest(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids, Eigen::Index i,
                      std::size_t& label) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    double d2 = 0.0;
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      const double d = points(i, j) - centroids(c, j);
      d2 += d * d;
    }
    if (d2 < best) {
      best = d2;
      arg = static_cast<std::size_t>(c);
    }
  }
  label = arg;
  return best;
}

void check_factors(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                   const Eigen::MatrixXd& c) {
  if (static_cast<std::size_t>(a.rows()) != x.dim(0) || static_cast<std::size_t>(b.rows()) != x.dim(1) ||
      static_cast<std::size_t>(c.rows()) != x.dim(2) || a.cols() != b.cols() || b.cols() != c.cols()) {
    throw DimensionError("factor matrices do not match the tensor");
  }
}

}  // namespace

std::vector<double> assign_nearest_serial(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                                          std::span<std::size_t> labels) {
  check_assign_args(points, centroids, labels);
  std::vector<double> d2(labels.size());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    d2[static_cast<std::size_t>(i)] = nearest(points, centroids, i, labels[static_cast<std::size_t>(i)]);
  }
  return d2;
}

std::vector<double> assign_nearest(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                                   std::span<std::size_t> labels) {
  check_assign_args(points, centroids, labels);
  std::vector<double> d2(labels.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    d2[static_cast<std::size_t>(i)] = nearest(points, centroids, i, labels[static_cast<std::size_t>(i)]);
  }
  return d2;
}

Eigen::MatrixXd mttkrp_serial(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              const Eigen::MatrixXd& c, int mode) {
  check_factors(x, a, b, c);
  switch (mode) {
    case 0: return unfold(x, 0) * khatri_rao(c, b);
    case 1: return unfold(x, 1) * khatri_rao(c, a);
    case 2: return unfold(x, 2) * khatri_rao(b, a);
    default: throw DimensionError("mode must be 0, 1 or 2");
  }
}

Eigen::MatrixXd mttkrp(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       const Eigen::MatrixXd& c, int mode) {
  check_factors(x, a, b, c);
  if (mode < 0 || mode > 2) throw DimensionError("mode must be 0, 1 or 2");
  const auto I = static_cast<Eigen::Index>(x.dim(0));
  const auto J = static_cast<Eigen::Index>(x.dim(1));
  const auto K = static_cast<Eigen::Index>(x.dim(2));
  const Eigen::Index R = a.cols();
  const Eigen::Index rows = mode == 0 ? I : (mode == 1 ? J : K);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, R);
  auto at = [&](Eigen::Index i, Eigen::Index j, Eigen::Index k) {
    return x(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k));
  };

  // Each output row belongs to one thread.
#pragma omp parallel for schedule(static)
  for (Eigen::Index p = 0; p < rows; ++p) {
    for (Eigen::Index q = 0; q < (mode == 0 ? J : I); ++q) {
      for (Eigen::Index s = 0; s < (mode == 2 ? J : K); ++s) {
        double v;
        const double* u;
        const double* w;
        Eigen::Index su, sw;
        if (mode == 0) {
          v = at(p, q, s);
          u = b.data() + q; su = b.rows();
          w = c.data() + s; sw = c.rows();
        } else if (mode == 1) {
          v = at(q, p, s);
          u = a.data() + q; su = a.rows();
          w = c.data() + s; sw = c.rows();
        } else {
          v = at(q, s, p);
          u = a.data() + q; su = a.rows();
          w = b.data() + s; sw = b.rows();
        }
        if (v == 0.0) continue;
        for (Eigen::Index r = 0; r < R; ++r) out(p, r) += v * u[r * su] * w[r * sw];
      }
    }
  }
  return out;
}

DenseTensor3 reconstruct_serial(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                const Eigen::MatrixXd& c) {
  if (lambda.size() != a.cols() || a.cols() != b.cols() || b.cols() != c.cols()) {
    throw DimensionError("factor ranks differ");
  }
  const auto I = static_cast<std::size_t>(a.rows()), J = static_cast<std::size_t>(b.rows()),
             K = static_cast<std::size_t>(c.rows());
  DenseTensor3 out(I, J, K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < a.cols(); ++r) {
          s += lambda[r] * a(static_cast<Eigen::Index>(i), r) * b(static_cast<Eigen::Index>(j), r) *
               c(static_cast<Eigen::Index>(k), r);
        }
        out(i, j, k) = s;
      }
  return out;
}

DenseTensor3 reconstruct(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         const Eigen::MatrixXd& c) {
  if (lambda.size() != a.cols() || a.cols() != b.cols() || b.cols() != c.cols()) {
    throw DimensionError("factor ranks differ");
  }
  const auto I = static_cast<std::size_t>(a.rows()), J = static_cast<std::size_t>(b.rows()),
             K = static_cast<std::size_t>(c.rows());
  DenseTensor3 out(I, J, K, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(I); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < a.cols(); ++r) {
          s += lambda[r] * a(static_cast<Eigen::Index>(i), r) * b(static_cast<Eigen::Index>(j), r) *
               c(static_cast<Eigen::Index>(k), r);
        }
        out(i, j, k) = s;
      }
  }
  return out;
}

}  // namespace fitforge::kernels
