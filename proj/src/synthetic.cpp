#include "fitforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fitforge/errors.hpp"

namespace fitforge::synthetic {

namespace {

constexpr double kKmPerDegreeLat = 111.32;
constexpr std::size_t kPolylineVertices = 360;
constexpr double kKnotSpacingKm = 0.1;
constexpr double kAltitudeBand = 120.0;
constexpr double kPrimarySportShare = 0.8;
constexpr double kLoopShare = 0.4;
constexpr std::size_t kHomeRoutes = 4;

double wrap(double s, double period) {
  double r = std::fmod(s, period);
  return r < 0 ? r + period : r;
}

std::string padded(char prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, value);
  return buf;
}

}  // namespace

double base_speed(Sport sport) {
  switch (sport) {
    case Sport::run: return 10.0;
    case Sport::bike: return 22.0;
    case Sport::mountain_bike: return 15.0;
    case Sport::other: break;
  }
  throw ValidationError("sport", "no synthetic model for this sport");
}

double calorie_factor(Sport sport) {
  switch (sport) {
    case Sport::run: return 45.0;
    case Sport::bike: return 18.0;
    case Sport::mountain_bike: return 26.0;
    case Sport::other: break;
  }
  throw ValidationError("sport", "no synthetic model for this sport");
}

double expected_speed(double phi, Sport sport, double grade) {
  return std::max(kMinSpeed, phi * base_speed(sport) * (1.0 - kGradeCoeff * grade));
}

double expected_heartrate(Sport sport, double speed, double grade) {
  const double a = kHrPerRelativeSpeed / base_speed(sport);
  return std::clamp(kRestingHr + a * speed + kHrPerGrade * std::max(grade, 0.0), kMinHr, kMaxHr);
}

void validate(const SyntheticConfig& c) {
  if (c.n_users == 0) throw ValidationError("n_users", "must be positive");
  if (c.n_routes == 0) throw ValidationError("n_routes", "must be positive");
  if (c.workouts_per_user == 0) throw ValidationError("workouts_per_user", "must be positive");
  if (c.sequence_length < 2) throw ValidationError("sequence_length", "must be at least 2");
  if (!(c.noise_scale >= 0.0)) throw ValidationError("noise_scale", "must be >= 0");
}

// ---------------------------------------------------------------------------

namespace {

struct Shape {
  double amplitude = 0.0;
  int lobes = 0;
  double phase = 0.0;
};

void build_polyline(double perimeter, double center_lat, double center_lon, const Shape& shape,
                    std::vector<double>& vs, std::vector<double>& vlat, std::vector<double>& vlon) {
  std::vector<double> x(kPolylineVertices + 1), y(kPolylineVertices + 1);
  for (std::size_t i = 0; i <= kPolylineVertices; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i % kPolylineVertices) /
                         static_cast<double>(kPolylineVertices);
    const double r = 1.0 + shape.amplitude * std::sin(shape.lobes * theta + shape.phase);
    x[i] = r * std::cos(theta);
    y[i] = r * std::sin(theta);
  }
  double length = 0.0;
  for (std::size_t i = 1; i <= kPolylineVertices; ++i) length += std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]);
  const double scale = perimeter / length;
  const double km_per_deg_lon = kKmPerDegreeLat * std::cos(center_lat * std::numbers::pi / 180.0);
  vs.assign(kPolylineVertices + 1, 0.0);
  vlat.resize(kPolylineVertices + 1);
  vlon.resize(kPolylineVertices + 1);
  for (std::size_t i = 0; i <= kPolylineVertices; ++i) {
    if (i > 0) vs[i] = vs[i - 1] + scale * std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]);
    vlat[i] = center_lat + scale * y[i] / kKmPerDegreeLat;
    vlon[i] = center_lon + scale * x[i] / km_per_deg_lon;
  }
  vs.back() = perimeter;
}

}  // namespace

SyntheticRoute SyntheticRoute::random(Rng& rng, double center_lat, double center_lon) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SyntheticRoute route;
  route.perimeter_ = 2.0 + 4.0 * u01(rng);
  Shape shape{0.25, 2 + static_cast<int>(u01(rng) * 3.0), 2.0 * std::numbers::pi * u01(rng)};
  build_polyline(route.perimeter_, center_lat, center_lon, shape, route.vertex_s_, route.vertex_lat_,
                 route.vertex_lon_);

  const auto n = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(route.perimeter_ / kKnotSpacingKm)));
  route.knot_spacing_ = route.perimeter_ / static_cast<double>(n);
  const double base = 20.0 + 580.0 * u01(rng);
  const double max_step = kMaxGrade * route.knot_spacing_ * 1000.0;
  std::vector<double> walk(n + 1, base);
  for (std::size_t i = 0; i < n; ++i) walk[i + 1] = walk[i] + (2.0 * u01(rng) - 1.0) * max_step;
  const double drift = walk[n] - walk[0];
  for (std::size_t i = 0; i <= n; ++i) walk[i] -= drift * static_cast<double>(i) / static_cast<double>(n);
  route.knots_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double smoothed = (walk[(i + n - 1) % n] + walk[i] + walk[(i + 1) % n]) / 3.0;
    route.knots_[i] = std::clamp(smoothed, base - kAltitudeBand, base + kAltitudeBand);
  }
  return route;
}

SyntheticRoute SyntheticRoute::flat(double perimeter_km, double altitude_m, double center_lat, double center_lon) {
  SyntheticRoute route;
  route.perimeter_ = perimeter_km;
  build_polyline(perimeter_km, center_lat, center_lon, Shape{}, route.vertex_s_, route.vertex_lat_,
                 route.vertex_lon_);
  const auto n = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(perimeter_km / kKnotSpacingKm)));
  route.knot_spacing_ = perimeter_km / static_cast<double>(n);
  route.knots_.assign(n, altitude_m);
  return route;
}

double SyntheticRoute::altitude_at(double s_km) const {
  const double s = wrap(s_km, perimeter_);
  const std::size_t n = knots_.size();
  const auto i = std::min(n - 1, static_cast<std::size_t>(s / knot_spacing_));
  const double frac = s / knot_spacing_ - static_cast<double>(i);
  return knots_[i] + frac * (knots_[(i + 1) % n] - knots_[i]);
}

double SyntheticRoute::grade_at(double s_km) const {
  const double s = wrap(s_km, perimeter_);
  const std::size_t n = knots_.size();
  const auto i = std::min(n - 1, static_cast<std::size_t>(s / knot_spacing_));
  const double slope = (knots_[(i + 1) % n] - knots_[i]) / (knot_spacing_ * 1000.0);
  return std::clamp(slope, -kMaxGrade, kMaxGrade);
}

std::pair<double, double> SyntheticRoute::position_at(double s_km) const {
  const double s = wrap(s_km, perimeter_);
  auto it = std::upper_bound(vertex_s_.begin(), vertex_s_.end(), s);
  std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - vertex_s_.begin()), vertex_s_.size() - 1);
  if (hi == 0) hi = 1;
  const std::size_t lo = hi - 1;
  const double span = vertex_s_[hi] - vertex_s_[lo];
  const double frac = span > 0 ? (s - vertex_s_[lo]) / span : 0.0;
  return {vertex_lat_[lo] + frac * (vertex_lat_[hi] - vertex_lat_[lo]),
          vertex_lon_[lo] + frac * (vertex_lon_[hi] - vertex_lon_[lo])};
}

// ---------------------------------------------------------------------------

namespace {

WorkoutRecord run_simulation(const SyntheticRoute& route, const SyntheticUser& user, Sport sport, double dt,
                             std::size_t L, std::span<const double> speed_noise,
                             std::span<const double> hr_noise, std::string id) {
  WorkoutRecord r;
  r.workout_id = std::move(id);
  r.user_id = user.id;
  r.sport = sport;
  r.sport_name = std::string(to_string(sport));
  r.gender = user.gender;
  r.altitude.resize(L);
  r.distance.resize(L);
  r.speed.resize(L);
  r.heartrate.resize(L);
  r.latitude.resize(L);
  r.longitude.resize(L);

  const double a = kHrPerRelativeSpeed / base_speed(sport);
  const double c = calorie_factor(sport);
  double position = 0.0;
  double calories = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const double grade = route.grade_at(position);
    const double speed =
        std::max(kMinSpeed, user.phi * base_speed(sport) * (1.0 - kGradeCoeff * grade) + speed_noise[t]);
    const double hr =
        std::clamp(kRestingHr + a * speed + kHrPerGrade * std::max(grade, 0.0) + hr_noise[t], kMinHr, kMaxHr);
    if (t > 0) {
      position += speed * dt;
      calories += c * speed * dt * (1.0 + kCalorieHrCoeff * hr / 100.0);
    }
    r.speed[t] = speed;
    r.heartrate[t] = hr;
    r.distance[t] = position;
    r.altitude[t] = route.altitude_at(position);
    const auto [lat, lon] = route.position_at(position);
    r.latitude[t] = lat;
    r.longitude[t] = lon;
  }
  r.calories = calories;
  return r;
}

}  // namespace

WorkoutRecord simulate_workout(const SyntheticRoute& route, const SyntheticUser& user, Sport sport,
                               double step_hours, std::size_t length, double noise_scale, Rng& rng,
                               std::string workout_id) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> speed_noise(length), hr_noise(length);
  const double speed_sd = noise_scale * kSpeedNoise * base_speed(sport);
  const double hr_sd = noise_scale * kHrNoise;
  for (auto& x : speed_noise) x = speed_sd * normal(rng);
  for (auto& x : hr_noise) x = hr_sd * normal(rng);
  return run_simulation(route, user, sport, step_hours, length, speed_noise, hr_noise, std::move(workout_id));
}

std::vector<WorkoutRecord> generate(const SyntheticConfig& config) {
  validate(config);
  Rng rng(config.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t L = config.sequence_length;

  std::vector<SyntheticRoute> routes;
  routes.reserve(config.n_routes);
  for (std::size_t i = 0; i < config.n_routes; ++i) {
    const double lat = 40.0 + 0.3 * (u01(rng) - 0.5);
    const double lon = -3.7 + 0.3 * (u01(rng) - 0.5);
    routes.push_back(SyntheticRoute::random(rng, lat, lon));
  }

  std::vector<WorkoutRecord> out;
  out.reserve(config.n_users * config.workouts_per_user);
  std::size_t counter = 0;
  for (std::size_t u = 0; u < config.n_users; ++u) {
    SyntheticUser user;
    user.id = padded('u', u, 4);
    user.phi = 0.5 + u01(rng);
    const double g = u01(rng);
    user.gender = g < 0.45 ? Gender::male : (g < 0.9 ? Gender::female : Gender::unknown);
    user.primary_sport = kModelledSports[std::min<std::size_t>(2, static_cast<std::size_t>(u01(rng) * 3.0))];

    std::vector<std::size_t> home(config.n_routes);
    std::iota(home.begin(), home.end(), 0);
    for (std::size_t i = home.size() - 1; i > 0; --i) {
      std::swap(home[i], home[std::uniform_int_distribution<std::size_t>(0, i)(rng)]);
    }
    home.resize(std::min(kHomeRoutes, home.size()));

    for (std::size_t w = 0; w < config.workouts_per_user; ++w) {
      const Sport sport = u01(rng) < kPrimarySportShare
                              ? user.primary_sport
                              : kModelledSports[std::min<std::size_t>(2, static_cast<std::size_t>(u01(rng) * 3.0))];
      const SyntheticRoute& route = routes[home[std::min(home.size() - 1, static_cast<std::size_t>(u01(rng) * home.size()))]];
      const bool loop = u01(rng) < kLoopShare;
      const double hours = 0.3 + 1.2 * u01(rng);
      double dt = hours / static_cast<double>(L - 1);

      std::vector<double> speed_noise(L), hr_noise(L);
      const double speed_sd = config.noise_scale * kSpeedNoise * base_speed(sport);
      const double hr_sd = config.noise_scale * kHrNoise;
      for (auto& x : speed_noise) x = speed_sd * normal(rng);
      for (auto& x : hr_noise) x = hr_sd * normal(rng);

      const std::string id = padded('w', counter++, 6);
      if (loop) {
        // Rescale the step so the workout ends after a whole number of laps.
        const double first = run_simulation(route, user, sport, dt, L, speed_noise, hr_noise, id).route_distance();
        const double laps = std::max(1.0, std::round(first / route.perimeter()));
        const double target = laps * route.perimeter();
        for (int iter = 0; iter < 12; ++iter) {
          const double covered = run_simulation(route, user, sport, dt, L, speed_noise, hr_noise, id).route_distance();
          if (covered <= 0.0) break;
          dt *= target / covered;
        }
      }
      out.push_back(run_simulation(route, user, sport, dt, L, speed_noise, hr_noise, id));
    }
  }
  return out;
}

}  // namespace fitforge::synthetic
