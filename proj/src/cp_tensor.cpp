#include "fitforge/cp_tensor.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "fitforge/errors.hpp"
#include "fitforge/kernels.hpp"

namespace fitforge {

DenseTensor3::DenseTensor3(std::size_t i, std::size_t j, std::size_t k, double fill)
    : dims_{i, j, k}, values_(i * j * k, fill) {
  if (i == 0 || j == 0 || k == 0) throw DimensionError("tensor dimensions must be positive");
}

DenseTensor3::DenseTensor3(std::size_t i, std::size_t j, std::size_t k, std::vector<double> values)
    : dims_{i, j, k}, values_(std::move(values)) {
  if (i == 0 || j == 0 || k == 0) throw DimensionError("tensor dimensions must be positive");
  if (values_.size() != i * j * k) throw DimensionError("tensor value count does not match dimensions");
}

double DenseTensor3::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

bool DenseTensor3::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Eigen::MatrixXd unfold(const DenseTensor3& x, int mode) {
  const auto [I, J, K] = x.dims();
  Eigen::MatrixXd m;
  switch (mode) {
    case 0:
      m.resize(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(J * K));
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < K; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + J * k)) = x(i, j, k);
      break;
    case 1:
      m.resize(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(I * K));
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < K; ++k) m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i + I * k)) = x(i, j, k);
      break;
    case 2:
      m.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(I * J));
      for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < K; ++k) m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i + I * j)) = x(i, j, k);
      break;
    default:
      throw DimensionError("mode must be 0, 1 or 2");
  }
  return m;
}

Eigen::MatrixXd khatri_rao(const Eigen::MatrixXd& m, const Eigen::MatrixXd& n) {
  if (m.cols() != n.cols()) {
    throw DimensionError("khatri_rao column mismatch: " + std::to_string(m.cols()) + " vs " + std::to_string(n.cols()));
  }
  Eigen::MatrixXd out(m.rows() * n.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.cols(); ++r)
    for (Eigen::Index j = 0; j < m.rows(); ++j)
      for (Eigen::Index k = 0; k < n.rows(); ++k) out(j * n.rows() + k, r) = m(j, r) * n(k, r);
  return out;
}

// ---------------------------------------------------------------------------

IndexMap IndexMap::from(std::vector<std::string> ids) {
  IndexMap m;
  m.ids = std::move(ids);
  for (std::size_t i = 0; i < m.ids.size(); ++i) m.index.emplace(m.ids[i], i);
  return m;
}

std::size_t IndexMap::at(const std::string& id, const char* kind) const {
  auto it = index.find(id);
  if (it == index.end()) throw NotFoundError(kind, id);
  return it->second;
}

std::vector<std::string> context_feature_names(const ContextSpec& spec) {
  std::vector<std::string> names;
  if (spec.include_gender) names.emplace_back("gender");
  for (const char* n : {"share_run", "share_bike", "share_mountain_bike", "workout_count", "avg_duration_min",
                        "avg_distance_km", "avg_speed_kmh", "avg_heartrate_bpm"}) {
    names.emplace_back(n);
  }
  return names;
}

std::vector<double> workout_context_features(const WorkoutRecord& r, const ContextSpec& spec) {
  std::vector<double> f;
  if (spec.include_gender) f.push_back(gender_code(r.gender));
  f.push_back(r.sport == Sport::run ? 1.0 : 0.0);
  f.push_back(r.sport == Sport::bike ? 1.0 : 0.0);
  f.push_back(r.sport == Sport::mountain_bike ? 1.0 : 0.0);
  f.push_back(1.0);
  f.push_back(60.0 * r.duration_hours());
  f.push_back(r.route_distance());
  f.push_back(r.mean_speed());
  f.push_back(r.mean_heartrate());
  return f;
}

ContextTensor build_context_tensor(std::span<const WorkoutRecord> records,
                                   std::span<const std::size_t> cluster_of_record, std::size_t n_clusters,
                                   const ContextSpec& spec) {
  if (records.empty()) throw InsufficientDataError("context tensor needs at least one record");
  if (cluster_of_record.size() != records.size()) throw DimensionError("one cluster id per record required");
  if (n_clusters == 0) throw DimensionError("need at least one route cluster");

  std::vector<std::string> user_ids;
  for (const auto& r : records) user_ids.push_back(r.user_id);
  std::sort(user_ids.begin(), user_ids.end());
  user_ids.erase(std::unique(user_ids.begin(), user_ids.end()), user_ids.end());

  ContextTensor out;
  out.users = IndexMap::from(std::move(user_ids));
  out.clusters = n_clusters;
  out.features = context_feature_names(spec);
  const std::size_t I = out.users.size(), J = n_clusters, K = out.features.size();
  const std::size_t count_slot = spec.include_gender ? 4 : 3;

  DenseTensor3 sums(I, J, K, 0.0);
  std::vector<std::size_t> counts(I * J, 0);
  for (std::size_t n = 0; n < records.size(); ++n) {
    const std::size_t u = out.users.at(records[n].user_id, "user");
    const std::size_t r = cluster_of_record[n];
    if (r >= J) throw NotFoundError("route cluster", std::to_string(r));
    const auto f = workout_context_features(records[n], spec);
    for (std::size_t c = 0; c < K; ++c) sums(u, r, c) += f[c];
    ++counts[u * J + r];
  }
  for (std::size_t u = 0; u < I; ++u)
    for (std::size_t r = 0; r < J; ++r) {
      const std::size_t n = counts[u * J + r];
      if (n == 0) continue;
      for (std::size_t c = 0; c < K; ++c) {
        if (c != count_slot) sums(u, r, c) /= static_cast<double>(n);
      }
    }

  if (spec.standardize) {
    for (std::size_t c = 0; c < K; ++c) {
      double mean = 0.0, m2 = 0.0;
      std::size_t populated = 0;
      for (std::size_t i = 0; i < I * J; ++i) {
        if (counts[i] == 0) continue;
        ++populated;
        mean += sums(i / J, i % J, c);
      }
      mean /= static_cast<double>(populated);
      for (std::size_t i = 0; i < I * J; ++i) {
        if (counts[i] == 0) continue;
        const double d = sums(i / J, i % J, c) - mean;
        m2 += d * d;
      }
      const double sd = std::sqrt(m2 / static_cast<double>(populated));
      for (std::size_t i = 0; i < I * J; ++i) {
        if (counts[i] == 0) continue;
        double& v = sums(i / J, i % J, c);
        v = sd > 1e-12 ? (v - mean) / sd : 0.0;
      }
    }
  }
  out.values = std::move(sums);
  return out;
}

ContextTensor build_context_tensor(std::span<const WorkoutRecord> records, const ClusterModel& clusters,
                                   const ContextSpec& spec) {
  std::vector<std::size_t> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(assign(clusters, r));
  return build_context_tensor(records, ids, clusters.k(), spec);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd random_factor(std::size_t rows, std::size_t rank, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rank));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index r = 0; r < m.cols(); ++r) m(i, r) = u(rng);
  return m;
}

Eigen::VectorXd normalize_columns(Eigen::MatrixXd& m) {
  Eigen::VectorXd norms = m.colwise().norm().transpose();
  for (Eigen::Index r = 0; r < m.cols(); ++r) {
    if (norms[r] > 0.0) m.col(r) /= norms[r];
  }
  return norms;
}

double relative_error(const DenseTensor3& x, const DenseTensor3& xhat, double norm_x) {
  double s = 0.0;
  const auto a = x.values();
  const auto b = xhat.values();
  for (std::size_t n = 0; n < a.size(); ++n) s += (a[n] - b[n]) * (a[n] - b[n]);
  return std::sqrt(s) / norm_x;
}

}  // namespace

CpFactors cp_als(const DenseTensor3& x, const CpAlsOptions& options) {
  if (options.rank == 0) throw ValidationError("rank", "must be at least 1");
  if (x.size() == 0) throw DimensionError("empty tensor");
  if (!x.all_finite()) throw NumericError("tensor holds non-finite values");

  const std::size_t R = options.rank;
  Rng rng(options.seed);
  CpFactors f;
  f.rank = R;
  f.a = random_factor(x.dim(0), R, rng);
  f.b = random_factor(x.dim(1), R, rng);
  f.c = random_factor(x.dim(2), R, rng);
  f.lambda = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(R));

  const double norm_x = x.norm();
  if (norm_x == 0.0) {
    f.lambda.setZero();
    f.fit_history.push_back(0.0);
    return f;
  }

  const Eigen::MatrixXd ridge = options.ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(R));
  for (std::size_t sweep = 0; sweep < std::max<std::size_t>(1, options.max_sweeps); ++sweep) {
    for (int mode = 0; mode < 3; ++mode) {
      Eigen::MatrixXd* target = mode == 0 ? &f.a : (mode == 1 ? &f.b : &f.c);
      const Eigen::MatrixXd& p = mode == 0 ? f.b : f.a;
      const Eigen::MatrixXd& q = mode == 2 ? f.b : f.c;
      const Eigen::MatrixXd gram = (p.transpose() * p).cwiseProduct(q.transpose() * q) + ridge;
      const Eigen::MatrixXd rhs = kernels::mttkrp(x, f.a, f.b, f.c, mode);
      *target = gram.ldlt().solve(rhs.transpose()).transpose();
      f.lambda = normalize_columns(*target);
    }
    const double err = relative_error(x, kernels::reconstruct(f.lambda, f.a, f.b, f.c), norm_x);
    const bool converged = !f.fit_history.empty() && std::abs(f.fit_history.back() - err) < options.tol;
    f.fit_history.push_back(err);
    if (converged) break;
  }
  return f;
}

DenseTensor3 reconstruct(const CpFactors& f) { return kernels::reconstruct(f.lambda, f.a, f.b, f.c); }

namespace {

// y(l, m, n) = sum_{ijk} pa(l,i) pb(m,j) pc(n,k) x(i,j,k)
DenseTensor3 multi_mode_product(const DenseTensor3& x, const Eigen::MatrixXd& pa, const Eigen::MatrixXd& pb,
                                const Eigen::MatrixXd& pc) {
  const auto [I, J, K] = x.dims();
  const auto L = static_cast<std::size_t>(pa.rows());
  const auto M = static_cast<std::size_t>(pb.rows());
  const auto N = static_cast<std::size_t>(pc.rows());
  auto ix = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  DenseTensor3 t1(L, J, K, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < I; ++i) {
      const double w = pa(ix(l), ix(i));
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < K; ++k) t1(l, j, k) += w * x(i, j, k);
    }
  DenseTensor3 t2(L, M, K, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t j = 0; j < J; ++j) {
        const double w = pb(ix(m), ix(j));
        for (std::size_t k = 0; k < K; ++k) t2(l, m, k) += w * t1(l, j, k);
      }
  DenseTensor3 out(L, M, N, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += pc(ix(n), ix(k)) * t2(l, m, k);
        out(l, m, n) = s;
      }
  return out;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(m).pseudoInverse();
}

}  // namespace

CoreTensor tucker_core(const DenseTensor3& x, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                       const Eigen::MatrixXd& c) {
  if (static_cast<std::size_t>(a.rows()) != x.dim(0) || static_cast<std::size_t>(b.rows()) != x.dim(1) ||
      static_cast<std::size_t>(c.rows()) != x.dim(2)) {
    throw DimensionError("factor rows do not match tensor dimensions");
  }
  if (a.cols() != b.cols() || b.cols() != c.cols() || a.cols() == 0) {
    throw DimensionError("factor matrices must share a positive column count");
  }
  CoreTensor core;
  core.g = multi_mode_product(x, pseudo_inverse(a), pseudo_inverse(b), pseudo_inverse(c));
  const DenseTensor3 fitted = multi_mode_product(core.g, a, b, c);
  double s = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double d = x.values()[n] - fitted.values()[n];
    s += d * d;
  }
  core.residual = s;
  return core;
}

CoreTensor tucker_core(const DenseTensor3& x, const CpFactors& f) { return tucker_core(x, f.a, f.b, f.c); }

double core_consistency(const DenseTensor3& g) {
  const std::size_t R = g.dim(0);
  if (g.dim(1) != R || g.dim(2) != R) throw DimensionError("core must be R x R x R");
  double s = 0.0;
  for (std::size_t l = 0; l < R; ++l)
    for (std::size_t m = 0; m < R; ++m)
      for (std::size_t n = 0; n < R; ++n) {
        const double target = (l == m && m == n) ? 1.0 : 0.0;
        const double d = g(l, m, n) - target;
        s += d * d;
      }
  return 100.0 * (1.0 - s / static_cast<double>(R));
}

namespace {

RankDiagnostic diagnose(const DenseTensor3& x, const CpFactors& f) {
  const Eigen::MatrixXd weighted = f.a * f.lambda.asDiagonal();
  const CoreTensor core = tucker_core(x, weighted, f.b, f.c);
  return RankDiagnostic{f.rank, core_consistency(core.g), 1.0 - f.relative_error(), f.fit_history.size()};
}

CoreConsistencyReport finish_report(std::vector<RankDiagnostic> entries, std::vector<CpFactors> factors) {
  CoreConsistencyReport report;
  report.entries = std::move(entries);
  report.factors = std::move(factors);
  const RankDiagnostic* best = nullptr;
  for (const auto& e : report.entries) {
    if (!best || e.core_consistency > best->core_consistency ||
        (e.core_consistency == best->core_consistency && e.rank < best->rank)) {
      best = &e;
    }
  }
  report.selected_rank = best->rank;
  return report;
}

void check_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ValidationError("ranks", "at least one rank required");
}

}  // namespace

const CpFactors& CoreConsistencyReport::selected_factors() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].rank == selected_rank) return factors[i];
  }
  throw NotFoundError("rank", std::to_string(selected_rank));
}

CoreConsistencyReport rank_sweep_serial(const DenseTensor3& x, std::span<const std::size_t> ranks,
                                        const CpAlsOptions& base) {
  check_ranks(ranks);
  std::vector<RankDiagnostic> entries;
  std::vector<CpFactors> factors;
  for (std::size_t r : ranks) {
    CpAlsOptions opt = base;
    opt.rank = r;
    factors.push_back(cp_als(x, opt));
    entries.push_back(diagnose(x, factors.back()));
  }
  return finish_report(std::move(entries), std::move(factors));
}

CoreConsistencyReport rank_sweep(const DenseTensor3& x, std::span<const std::size_t> ranks,
                                 const CpAlsOptions& base) {
  check_ranks(ranks);
  const std::size_t n = ranks.size();
  std::vector<RankDiagnostic> entries(n);
  std::vector<CpFactors> factors(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      CpAlsOptions opt = base;
      opt.rank = ranks[static_cast<std::size_t>(i)];
      factors[static_cast<std::size_t>(i)] = cp_als(x, opt);
      entries[static_cast<std::size_t>(i)] = diagnose(x, factors[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return finish_report(std::move(entries), std::move(factors));
}

// ---------------------------------------------------------------------------

Embeddings Embeddings::from(const ContextTensor& tensor, const CpFactors& factors) {
  if (static_cast<std::size_t>(factors.a.rows()) != tensor.users.size() ||
      static_cast<std::size_t>(factors.b.rows()) != tensor.clusters) {
    throw DimensionError("factors do not match the context tensor");
  }
  return Embeddings{tensor.users, factors.a, factors.b};
}

Eigen::VectorXd Embeddings::user(const std::string& user_id) const {
  return user_factors.row(static_cast<Eigen::Index>(users.at(user_id, "user"))).transpose();
}

Eigen::VectorXd Embeddings::route_cluster(std::size_t cluster_id) const {
  if (cluster_id >= static_cast<std::size_t>(route_factors.rows())) {
    throw NotFoundError("route cluster", std::to_string(cluster_id));
  }
  return route_factors.row(static_cast<Eigen::Index>(cluster_id)).transpose();
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity of vectors with different sizes");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarityError("cosine similarity with a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace fitforge
