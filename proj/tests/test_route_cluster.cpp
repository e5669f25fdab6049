#include <doctest.h>

#include <cmath>
#include <limits>

#include "fitforge/errors.hpp"
#include "fitforge/route_cluster.hpp"
#include "fixtures.hpp"

using namespace fitforge;

namespace {

ClusterModel manual_model(const Eigen::MatrixXd& centroids) {
  ClusterModel m;
  m.centroids = centroids;
  m.scaler.mean = Eigen::VectorXd::Zero(centroids.cols());
  m.scaler.stddev = Eigen::VectorXd::Ones(centroids.cols());
  return m;
}

RouteSignature sig(std::initializer_list<double> v) { return RouteSignature{std::vector<double>(v)}; }

// Doubles the sampling density by inserting midpoints.
WorkoutRecord densify(const WorkoutRecord& r) {
  WorkoutRecord out = r;
  auto mid = [](const std::vector<double>& v) {
    std::vector<double> o;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      o.push_back(v[i]);
      o.push_back(0.5 * (v[i] + v[i + 1]));
    }
    o.push_back(v.back());
    return o;
  };
  out.latitude = mid(r.latitude);
  out.longitude = mid(r.longitude);
  out.altitude = mid(r.altitude);
  out.distance = mid(r.distance);
  out.speed = mid(r.speed);
  out.heartrate = mid(r.heartrate);
  return out;
}

}  // namespace

TEST_CASE("straight flat line, K = 4") {
  auto r = fixtures::line_record(7, "line", 0.5);  // 3 km due east
  auto s = route_signature(r, 4);
  REQUIRE(s.dim() == 3 * 4 + 2);
  const double lon_end = r.longitude.back();
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(s.values[k] == doctest::Approx(0.0));
    CHECK(s.values[4 + k] == doctest::Approx(lon_end * static_cast<double>(k) / 3.0).epsilon(1e-12));
    CHECK(s.values[8 + k] == doctest::Approx(50.0));
  }
  CHECK(s.values[13] == 0.0);  // ascent
}

TEST_CASE("signature ignores sampling density") {
  for (std::size_t L : {5u, 9u, 23u}) {
    auto r = fixtures::loop_record(L);
    r.altitude[L / 2] += 30.0;
    auto a = route_signature(r, 16);
    auto b = route_signature(densify(r), 16);
    REQUIRE(a.dim() == b.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-6);
  }
}

TEST_CASE("degenerate routes") {
  auto one = fixtures::line_record(1);
  CHECK_THROWS_AS(route_signature(one, 4), DegenerateRouteError);
  auto still = fixtures::line_record(3, "still", 0.0);
  CHECK_THROWS_AS(route_signature(still, 4), DegenerateRouteError);
}

TEST_CASE("k equal to the number of distinct points") {
  std::vector<RouteSignature> pts{sig({0, 0}), sig({1, 5}), sig({-3, 2}), sig({4, 4})};
  auto m = kmeans_fit(pts, 4, 3);
  CHECK(m.inertia_history.back() == doctest::Approx(0.0).epsilon(1e-12));
  std::set<std::size_t> labels;
  for (const auto& p : pts) labels.insert(assign(m, p));
  CHECK(labels.size() == 4);
  CHECK_THROWS_AS(kmeans_fit(pts, 5, 3), InfeasibleKError);
  std::vector<RouteSignature> dup{sig({1, 1}), sig({1, 1}), sig({2, 2})};
  CHECK_THROWS_AS(kmeans_fit(dup, 3, 0), InfeasibleKError);
}

TEST_CASE("two far blobs separate exactly") {
  Rng rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<RouteSignature> pts;
  std::vector<int> truth;
  for (int i = 0; i < 60; ++i) {
    const double off = (i % 2) ? 100.0 : 0.0;
    pts.push_back(sig({off + n(rng), off + n(rng), n(rng)}));
    truth.push_back(i % 2);
  }
  auto m = kmeans_fit(pts, 2, 1);
  // brute-force nearest centroid in raw units
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m.k(); ++c) {
      auto cs = m.centroid_signature(c);
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += std::pow((pts[i].values[j] - cs.values[j]) / m.scaler.stddev[j], 2);
      if (d < best_d) best_d = d, best = c;
    }
    CHECK(assign(m, pts[i]) == best);
  }
  const std::size_t c0 = assign(m, pts[0]);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((assign(m, pts[i]) == c0) == (truth[i] == 0));
}

TEST_CASE("deterministic and monotone inertia") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<RouteSignature> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(sig({u(rng), u(rng), u(rng), u(rng)}));
  auto a = kmeans_fit(pts, 7, 99);
  auto b = kmeans_fit(pts, 7, 99);
  CHECK(a.centroids == b.centroids);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i) {
    CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] + 1e-9);
  }
  for (std::size_t i = 0; i < a.k(); ++i) CHECK(assign(a, a.centroid_signature(i)) == i);
  for (std::size_t i = 0; i < a.k(); ++i) {
    for (std::size_t j = i + 1; j < a.k(); ++j) CHECK((a.centroids.row(i) - a.centroids.row(j)).norm() > 0.0);
  }
}

TEST_CASE("assign: exact match, tie rule, brute force") {
  Eigen::MatrixXd c(4, 2);
  c << 0, 0, -1, 0, 1, 0, 5, 5;
  auto m = manual_model(c);
  CHECK(assign(m, sig({5, 5})) == 3);
  CHECK(assign(m, sig({0, 7})) == 3);
  // equidistant from centroids 1 and 2 (and closer to them than to 0 is impossible here), use a shifted set
  Eigen::MatrixXd c2(3, 2);
  c2 << 9, 9, -1, 0, 1, 0;
  CHECK(assign(manual_model(c2), sig({0, 0})) == 1);

  Rng rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 100; ++t) {
    auto s = sig({u(rng), u(rng)});
    std::vector<double> d;
    for (int k = 0; k < 4; ++k) d.push_back(std::hypot(s.values[0] - c(k, 0), s.values[1] - c(k, 1)));
    CHECK(assign(m, s) == static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin()));
  }
  CHECK_THROWS_AS(assign(m, sig({1, 2, 3})), DimensionError);
}
