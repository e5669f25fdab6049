#pragma once

// Independent reference computations used by the unit tests and the
// acceptance binary. Plain loops only; nothing here calls the library's
// numerical routines.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fitforge/cp_tensor.hpp"

namespace oracle {

inline fitforge::DenseTensor3 outer_sum(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& a,
                                        const Eigen::MatrixXd& b, const Eigen::MatrixXd& c) {
  fitforge::DenseTensor3 x(a.rows(), b.rows(), c.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index k = 0; k < c.rows(); ++k) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < a.cols(); ++r) s += lambda[r] * a(i, r) * b(j, r) * c(k, r);
        x(i, j, k) = s;
      }
  return x;
}

inline double frobenius_diff(const fitforge::DenseTensor3& x, const fitforge::DenseTensor3& y) {
  double s = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) s += std::pow(x.values()[n] - y.values()[n], 2);
  return std::sqrt(s);
}

// Least-squares core from the explicit (IJK) x R^3 design matrix. Solved in
// long double: the design squares the conditioning of the factors and a
// double solve loses ~1e-8 on badly conditioned draws.
inline fitforge::DenseTensor3 dense_core(const fitforge::DenseTensor3& x, const Eigen::MatrixXd& a,
                                         const Eigen::MatrixXd& b, const Eigen::MatrixXd& c) {
  const auto I = a.rows(), J = b.rows(), K = c.rows();
  const auto R = a.cols();
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  LMatrix design(I * J * K, R * R * R);
  LVector rhs(I * J * K);
  for (Eigen::Index i = 0; i < I; ++i)
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto row = i + I * j + I * J * k;
        rhs[row] = x(i, j, k);
        for (Eigen::Index l = 0; l < R; ++l)
          for (Eigen::Index m = 0; m < R; ++m)
            for (Eigen::Index n = 0; n < R; ++n) design(row, l + R * m + R * R * n) =
                static_cast<long double>(a(i, l)) * b(j, m) * c(k, n);
      }
  const LVector g = design.completeOrthogonalDecomposition().solve(rhs);
  fitforge::DenseTensor3 out(R, R, R);
  for (Eigen::Index l = 0; l < R; ++l)
    for (Eigen::Index m = 0; m < R; ++m)
      for (Eigen::Index n = 0; n < R; ++n) out(l, m, n) = static_cast<double>(g[l + R * m + R * R * n]);
  return out;
}

inline double core_consistency(const fitforge::DenseTensor3& g) {
  const std::size_t R = g.dim(0);
  double s = 0.0;
  for (std::size_t l = 0; l < R; ++l)
    for (std::size_t m = 0; m < R; ++m)
      for (std::size_t n = 0; n < R; ++n) {
        const double target = (l == m && m == n) ? 1.0 : 0.0;
        s += (g(l, m, n) - target) * (g(l, m, n) - target);
      }
  return 100.0 * (1.0 - s / static_cast<double>(R));
}

inline double rmse(const std::vector<double>& p, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(s / static_cast<double>(p.size()));
}

inline double mae_seq(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& t) {
  double outer = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    double inner = 0.0;
    for (std::size_t s = 0; s < p[n].size(); ++s) inner += std::abs(p[n][s] - t[n][s]);
    outer += inner / static_cast<double>(p[n].size());
  }
  return outer / static_cast<double>(p.size());
}

// Average ranks (ties share the mean rank), then Pearson on the ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Known rank-R factors with well separated columns, for the CP and cc checks.
struct KnownCp {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd a, b, c;
  fitforge::DenseTensor3 x;
};

inline KnownCp known_cp(Eigen::Index I, Eigen::Index J, Eigen::Index K, Eigen::Index R, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&](Eigen::Index rows) {
    Eigen::MatrixXd m(rows, R);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index r = 0; r < R; ++r) m(i, r) = u(rng);
    return m;
  };
  KnownCp k;
  k.a = fill(I);
  k.b = fill(J);
  k.c = fill(K);
  k.lambda = Eigen::VectorXd::Ones(R);
  k.x = outer_sum(k.lambda, k.a, k.b, k.c);
  return k;
}

}  // namespace oracle
