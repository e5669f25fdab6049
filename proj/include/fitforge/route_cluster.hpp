#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fitforge/workout.hpp"

namespace fitforge {

// Route shape summary: lat, lon and altitude resampled at K equispaced
// arc-length points, then total distance (km) and total ascent (m).
// Layout: [lat_0..lat_{K-1}, lon_0..lon_{K-1}, alt_0..alt_{K-1}, distance, ascent].
struct RouteSignature {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
};

inline constexpr std::size_t kDefaultResamplePoints = 16;
inline constexpr std::size_t kDefaultRouteClusters = 32;

// Arc length is measured in a local equirectangular projection anchored at
// the first point, so linear interpolation between samples is exact.
// Throws DegenerateRouteError for routes with fewer than two points or zero length.
RouteSignature route_signature(const WorkoutRecord& record, std::size_t resample_points = kDefaultResamplePoints);

struct SignatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // zero-variance components use 1
  Eigen::VectorXd apply(std::span<const double> raw) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& standardized) const;
};

struct ClusterModel {
  Eigen::MatrixXd centroids;  // k x dim, standardized space
  SignatureScaler scaler;
  std::uint64_t seed = 0;
  std::size_t resample_points = kDefaultResamplePoints;
  std::vector<double> inertia_history;  // one entry per assignment pass

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }
  // Centroid i mapped back to raw signature units.
  RouteSignature centroid_signature(std::size_t i) const;
};

// k-means++ seeding then Lloyd iterations until the assignment stops
// changing or max_iters is reached. Empty clusters are re-seeded from the
// point farthest from its centroid.
// Throws InfeasibleKError when k exceeds the number of distinct signatures.
ClusterModel kmeans_fit(std::span<const RouteSignature> signatures, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters = 100);

// Nearest centroid; ties go to the lowest index. Throws DimensionError on mismatch.
std::size_t assign(const ClusterModel& model, const RouteSignature& signature);
std::size_t assign(const ClusterModel& model, const WorkoutRecord& record);

}  // namespace fitforge
