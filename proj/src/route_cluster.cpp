#include "fitforge/route_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "fitforge/errors.hpp"
#include "fitforge/kernels.hpp"

namespace fitforge {

RouteSignature route_signature(const WorkoutRecord& record, std::size_t K) {
  if (K < 2) throw ValidationError("resample_points", "must be at least 2");
  const std::size_t n = record.latitude.size();
  if (n < 2 || record.longitude.size() != n || record.altitude.size() != n) {
    throw DegenerateRouteError("route " + record.workout_id + " needs at least two aligned points");
  }
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double lat0 = record.latitude.front();
  const double coslat = std::cos(lat0 * kDeg);

  std::vector<double> arc(n, 0.0);
  double ascent = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    const double dx = kEarthRadiusKm * kDeg * (record.longitude[t] - record.longitude[t - 1]) * coslat;
    const double dy = kEarthRadiusKm * kDeg * (record.latitude[t] - record.latitude[t - 1]);
    arc[t] = arc[t - 1] + std::hypot(dx, dy);
    ascent += std::max(0.0, record.altitude[t] - record.altitude[t - 1]);
  }
  const double total = arc.back();
  if (!(total > 0.0)) throw DegenerateRouteError("route " + record.workout_id + " has zero length");

  RouteSignature sig;
  sig.values.assign(3 * K + 2, 0.0);
  std::size_t seg = 1;
  for (std::size_t k = 0; k < K; ++k) {
    const double s = (k + 1 == K) ? total : total * static_cast<double>(k) / static_cast<double>(K - 1);
    while (seg + 1 < n && arc[seg] < s) ++seg;
    const double span = arc[seg] - arc[seg - 1];
    const double frac = span > 0.0 ? std::clamp((s - arc[seg - 1]) / span, 0.0, 1.0) : 1.0;
    auto lerp = [&](const std::vector<double>& v) { return v[seg - 1] + frac * (v[seg] - v[seg - 1]); };
    sig.values[k] = lerp(record.latitude);
    sig.values[K + k] = lerp(record.longitude);
    sig.values[2 * K + k] = lerp(record.altitude);
  }
  sig.values[3 * K] = total;
  sig.values[3 * K + 1] = ascent;
  return sig;
}

Eigen::VectorXd SignatureScaler::apply(std::span<const double> raw) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = (raw[static_cast<std::size_t>(i)] - mean[i]) / stddev[i];
  return out;
}

Eigen::VectorXd SignatureScaler::invert(const Eigen::VectorXd& z) const {
  return (z.array() * stddev.array() + mean.array()).matrix();
}

RouteSignature ClusterModel::centroid_signature(std::size_t i) const {
  const Eigen::VectorXd raw = scaler.invert(centroids.row(static_cast<Eigen::Index>(i)).transpose());
  return RouteSignature{std::vector<double>(raw.data(), raw.data() + raw.size())};
}

namespace {

SignatureScaler fit_scaler(const Eigen::MatrixXd& raw) {
  SignatureScaler s;
  s.mean = raw.colwise().mean().transpose();
  s.stddev.resize(raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double var = (raw.col(j).array() - s.mean[j]).square().mean();
    const double sd = std::sqrt(var);
    s.stddev[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto first = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(u01(rng) * static_cast<double>(n)));
  centers.row(0) = x.row(first);
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const double total = d2.sum();
    const double target = u01(rng) * total;
    double acc = 0.0;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

ClusterModel kmeans_fit(std::span<const RouteSignature> signatures, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters) {
  if (signatures.empty()) throw InsufficientDataError("k-means needs at least one signature");
  const std::size_t dim = signatures.front().dim();
  const auto n = static_cast<Eigen::Index>(signatures.size());
  Eigen::MatrixXd raw(n, static_cast<Eigen::Index>(dim));
  std::set<std::vector<double>> distinct;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = signatures[static_cast<std::size_t>(i)].values;
    if (v.size() != dim) throw DimensionError("signature dimensions differ");
    for (std::size_t j = 0; j < dim; ++j) raw(i, static_cast<Eigen::Index>(j)) = v[j];
    distinct.insert(v);
  }
  if (k == 0 || k > distinct.size()) {
    throw InfeasibleKError("k = " + std::to_string(k) + " but only " + std::to_string(distinct.size()) +
                           " distinct signatures");
  }

  ClusterModel model;
  model.seed = seed;
  model.resample_points = (dim - 2) / 3;
  model.scaler = fit_scaler(raw);
  Eigen::MatrixXd x(n, raw.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = ((raw.row(i).transpose() - model.scaler.mean).array() / model.scaler.stddev.array()).matrix().transpose();
  }

  Rng rng(seed);
  model.centroids = kmeanspp_seed(x, k, rng);
  std::vector<std::size_t> labels(static_cast<std::size_t>(n), 0), previous;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iters); ++iter) {
    std::vector<double> d2 = kernels::assign_nearest(x, model.centroids, labels);
    double inertia = 0.0;
    for (double d : d2) inertia += d;
    model.inertia_history.push_back(inertia);
    if (labels == previous) break;
    previous = labels;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(model.centroids.rows(), x.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) += x.row(i);
      ++counts[labels[static_cast<std::size_t>(i)]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        model.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      const auto far = static_cast<Eigen::Index>(std::max_element(d2.begin(), d2.end()) - d2.begin());
      model.centroids.row(static_cast<Eigen::Index>(c)) = x.row(far);
      d2[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  return model;
}

std::size_t assign(const ClusterModel& model, const RouteSignature& signature) {
  if (signature.dim() != model.dim()) {
    throw DimensionError("signature dimension " + std::to_string(signature.dim()) + " != model dimension " +
                         std::to_string(model.dim()));
  }
  const Eigen::VectorXd z = model.scaler.apply(signature.values);
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) {
    const double d2 = (model.centroids.row(c).transpose() - z).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

std::size_t assign(const ClusterModel& model, const WorkoutRecord& record) {
  return assign(model, route_signature(record, model.resample_points));
}

}  // namespace fitforge
