#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fitforge/route_cluster.hpp"
#include "fitforge/workout.hpp"

namespace fitforge {

// Dense 3-way array stored row-major: value(i, j, k) = values[(i * J + j) * K + k].
class DenseTensor3 {
 public:
  DenseTensor3() = default;
  DenseTensor3(std::size_t i, std::size_t j, std::size_t k, double fill = 0.0);
  DenseTensor3(std::size_t i, std::size_t j, std::size_t k, std::vector<double> values);

  std::size_t dim(int mode) const { return dims_[static_cast<std::size_t>(mode)]; }
  std::array<std::size_t, 3> dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return values_[(i * dims_[1] + j) * dims_[2] + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * dims_[1] + j) * dims_[2] + k];
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double norm() const;
  bool all_finite() const;

 private:
  std::array<std::size_t, 3> dims_{0, 0, 0};
  std::vector<double> values_;
};

// Mode-n unfolding with the column ordering under which
// X_(0) = A (C kr B)^T, X_(1) = B (C kr A)^T, X_(2) = C (B kr A)^T.
Eigen::MatrixXd unfold(const DenseTensor3& x, int mode);

// Column-wise Kronecker product: row j * K + k of column r is m(j, r) * n(k, r).
Eigen::MatrixXd khatri_rao(const Eigen::MatrixXd& m, const Eigen::MatrixXd& n);

// ---------------------------------------------------------------------------
// Context tensor

struct IndexMap {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;

  static IndexMap from(std::vector<std::string> ids);
  std::size_t size() const { return ids.size(); }
  // Throws NotFoundError(kind, id).
  std::size_t at(const std::string& id, const char* kind = "id") const;
  bool contains(const std::string& id) const { return index.contains(id); }
};

struct ContextSpec {
  bool include_gender = true;
  bool standardize = true;  // z-score every context slice over populated cells
};

// Context features, in slice order. "gender" is dropped when the spec excludes it.
std::vector<std::string> context_feature_names(const ContextSpec& spec);
// Raw per-workout feature vector in context_feature_names order. The
// frequency feature is 1 per workout so that the (user, cluster) cell sum
// counts workouts; every other feature is averaged.
std::vector<double> workout_context_features(const WorkoutRecord& record, const ContextSpec& spec);

struct ContextTensor {
  DenseTensor3 values;  // users x route clusters x context features
  IndexMap users;
  std::size_t clusters = 0;
  std::vector<std::string> features;
};

ContextTensor build_context_tensor(std::span<const WorkoutRecord> records,
                                   std::span<const std::size_t> cluster_of_record, std::size_t n_clusters,
                                   const ContextSpec& spec = {});
ContextTensor build_context_tensor(std::span<const WorkoutRecord> records, const ClusterModel& clusters,
                                   const ContextSpec& spec = {});

// ---------------------------------------------------------------------------
// CP decomposition

struct CpAlsOptions {
  std::size_t rank = 2;
  std::size_t max_sweeps = 500;
  double tol = 1e-10;      // stop when the relative error changes by less
  double ridge = 1e-12;    // added to the diagonal of every normal-equation matrix
  std::uint64_t seed = 0;  // initial factors ~ Uniform(-0.5, 0.5)
};

struct CpFactors {
  Eigen::MatrixXd a;  // I x R, user mode
  Eigen::MatrixXd b;  // J x R, route mode
  Eigen::MatrixXd c;  // K x R, context mode
  Eigen::VectorXd lambda;
  std::size_t rank = 0;
  std::vector<double> fit_history;  // ||X - Xhat|| / ||X|| after each sweep

  double relative_error() const { return fit_history.empty() ? 1.0 : fit_history.back(); }
};

CpFactors cp_als(const DenseTensor3& x, const CpAlsOptions& options);

// sum_r lambda_r a_r o b_r o c_r
DenseTensor3 reconstruct(const CpFactors& factors);

struct CoreTensor {
  DenseTensor3 g;          // R x R x R
  double residual = 0.0;   // ||X - A G (C kron B)^T||_F^2
};

// Least-squares Tucker core for fixed factors: vec G = (C kron B kron A)^+ vec X,
// evaluated as X x1 A^+ x2 B^+ x3 C^+.
CoreTensor tucker_core(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       const Eigen::MatrixXd& c);
// Uses the unit-norm factor matrices, so an exact decomposition gives g_rrr = lambda_r.
CoreTensor tucker_core(const DenseTensor3& x, const CpFactors& factors);

// 100 * (1 - sum (g_lmn - delta_lmn)^2 / R) against the superdiagonal of ones.
double core_consistency(const DenseTensor3& g);

struct RankDiagnostic {
  std::size_t rank = 0;
  double core_consistency = 0.0;
  double relative_fit = 0.0;  // 1 - relative reconstruction error
  std::size_t sweeps = 0;
};

struct CoreConsistencyReport {
  std::vector<RankDiagnostic> entries;
  std::size_t selected_rank = 0;  // argmax cc, ties to the smaller rank
  std::vector<CpFactors> factors;  // parallel to entries
  const CpFactors& selected_factors() const;
};

// cp_als at every rank, then the core with lambda folded into the user mode
// (so an exact model gives the superdiagonal of ones), then core_consistency.
CoreConsistencyReport rank_sweep(const DenseTensor3& x, std::span<const std::size_t> ranks,
                                 const CpAlsOptions& base);
CoreConsistencyReport rank_sweep_serial(const DenseTensor3& x, std::span<const std::size_t> ranks,
                                        const CpAlsOptions& base);

// ---------------------------------------------------------------------------
// Embeddings

struct Embeddings {
  IndexMap users;
  Eigen::MatrixXd user_factors;   // rows are user embeddings
  Eigen::MatrixXd route_factors;  // rows are route-cluster embeddings
  std::size_t rank() const { return static_cast<std::size_t>(user_factors.cols()); }

  static Embeddings from(const ContextTensor& tensor, const CpFactors& factors);
  Eigen::VectorXd user(const std::string& user_id) const;        // NotFoundError
  Eigen::VectorXd route_cluster(std::size_t cluster_id) const;   // NotFoundError
};

// Throws UndefinedSimilarityError for zero vectors, DimensionError on size mismatch.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace fitforge
