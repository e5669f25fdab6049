#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fitforge/workout.hpp"

namespace fitforge::synthetic {

// Generative model (fixed; tests evaluate these formulas directly):
//
//   phi_u        ~ Uniform(0.5, 1.5)                        per-user fitness
//   grade_t      = slope of the route at the current position, |grade| <= kMaxGrade
//   speed_t      = phi_u * base(sport) * (1 - kGradeCoeff * grade_t) + noise, >= kMinSpeed
//   heartrate_t  = kRestingHr + a(sport) * speed_t + kHrPerGrade * max(grade_t, 0) + noise,
//                  clamped to [kMinHr, kMaxHr], with a(sport) = kHrPerRelativeSpeed / base(sport)
//   distance_t   = distance_{t-1} + speed_t * dt        (dt fixed per workout, hours)
//   calories     = c(sport) * sum_{t>=1} speed_t * dt * (1 + kCalorieHrCoeff * heartrate_t / 100)
//
// Speed noise has standard deviation noise_scale * kSpeedNoise * base(sport);
// heart-rate noise has standard deviation noise_scale * kHrNoise.
inline constexpr double kGradeCoeff = 3.0;
inline constexpr double kMaxGrade = 0.08;
inline constexpr double kMinSpeed = 0.5;
inline constexpr double kRestingHr = 60.0;
inline constexpr double kHrPerRelativeSpeed = 90.0;
inline constexpr double kHrPerGrade = 300.0;
inline constexpr double kMinHr = 40.0;
inline constexpr double kMaxHr = 210.0;
inline constexpr double kCalorieHrCoeff = 0.5;
inline constexpr double kSpeedNoise = 0.05;
inline constexpr double kHrNoise = 4.0;

double base_speed(Sport sport);      // km/h at phi = 1 on flat ground
double calorie_factor(Sport sport);  // c(sport), kcal per km before the heart-rate term

double expected_speed(double phi, Sport sport, double grade);
double expected_heartrate(Sport sport, double speed, double grade);

struct SyntheticConfig {
  std::size_t n_users = 50;
  std::size_t n_routes = 40;
  std::size_t workouts_per_user = 40;
  std::size_t sequence_length = 50;
  double noise_scale = 1.0;
  std::uint64_t seed = 42;
};

// Throws ValidationError for non-positive counts or negative noise.
void validate(const SyntheticConfig& config);

// A closed loop with an altitude profile, parameterised by arc length.
class SyntheticRoute {
 public:
  static SyntheticRoute random(Rng& rng, double center_lat, double center_lon);
  static SyntheticRoute flat(double perimeter_km, double altitude_m, double center_lat = 40.0,
                             double center_lon = -3.7);

  double perimeter() const { return perimeter_; }
  double altitude_at(double s_km) const;
  double grade_at(double s_km) const;
  std::pair<double, double> position_at(double s_km) const;  // (lat, lon)

 private:
  double perimeter_ = 1.0;
  double knot_spacing_ = 0.1;
  std::vector<double> knots_;         // altitude at s = i * knot_spacing_
  std::vector<double> vertex_s_;      // cumulative arc length of the polyline vertices
  std::vector<double> vertex_lat_;
  std::vector<double> vertex_lon_;
};

struct SyntheticUser {
  std::string id;
  double phi = 1.0;
  Gender gender = Gender::unknown;
  Sport primary_sport = Sport::run;
};

// Deterministic given the arguments; noise draws come from `rng`.
WorkoutRecord simulate_workout(const SyntheticRoute& route, const SyntheticUser& user, Sport sport,
                               double step_hours, std::size_t length, double noise_scale, Rng& rng,
                               std::string workout_id);

// Same seed => identical records.
std::vector<WorkoutRecord> generate(const SyntheticConfig& config);

}  // namespace fitforge::synthetic
