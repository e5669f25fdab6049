#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fitforge/pipeline.hpp"
#include "fitforge/synthetic.hpp"
#include "fitforge/workout.hpp"

namespace fixtures {

using fitforge::WorkoutRecord;

// Closed loop on a small circle (about 0.5 km radius), L points, the last one back at the start.
inline WorkoutRecord loop_record(std::size_t L, const std::string& id = "w0", const std::string& user = "u0") {
  WorkoutRecord r;
  r.workout_id = id;
  r.user_id = user;
  r.sport = fitforge::Sport::run;
  r.sport_name = "run";
  r.gender = fitforge::Gender::female;
  r.calories = 300.0;
  const double pi = 3.14159265358979323846;
  double d = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    const double a = 2.0 * pi * static_cast<double>(t) / static_cast<double>(L - 1);
    r.latitude.push_back(45.0 + 0.0045 * std::sin(a));
    r.longitude.push_back(7.0 + 0.0064 * (1.0 - std::cos(a)));
    r.altitude.push_back(200.0 + 10.0 * std::sin(a));
    if (t > 0) {
      d += fitforge::haversine_km(r.latitude[t - 1], r.longitude[t - 1], r.latitude[t], r.longitude[t]);
    }
    r.distance.push_back(d);
    r.speed.push_back(10.0 + static_cast<double>(t % 3));
    r.heartrate.push_back(140.0 + static_cast<double>(t % 5));
  }
  return r;
}

// Straight east-west segment, not a loop.
inline WorkoutRecord line_record(std::size_t L, const std::string& id = "line", double step_km = 0.1) {
  WorkoutRecord r;
  r.workout_id = id;
  r.user_id = "u0";
  r.sport_name = "run";
  r.calories = 100.0;
  for (std::size_t t = 0; t < L; ++t) {
    r.latitude.push_back(0.0);
    r.longitude.push_back(static_cast<double>(t) * step_km / 111.19492664455873);
    r.altitude.push_back(50.0);
    r.distance.push_back(static_cast<double>(t) * step_km);
    r.speed.push_back(10.0);
    r.heartrate.push_back(120.0);
  }
  return r;
}

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fitforge_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// A tiny end-to-end run, cheap enough for unit tests.
inline fitforge::PipelineConfig tiny_config() {
  fitforge::PipelineConfig c;
  c.clusters = 4;
  c.rank_min = 2;
  c.rank_max = 3;
  c.cp.max_sweeps = 200;
  c.training.distance_hidden = {8};
  c.training.distance_epochs = 30;
  c.training.hidden1 = 6;
  c.training.hidden2 = 4;
  c.training.sequence_epochs = 2;
  c.training.sequence_batch = 8;
  return c;
}

inline std::vector<WorkoutRecord> tiny_records() {
  fitforge::synthetic::SyntheticConfig s;
  s.n_users = 8;
  s.n_routes = 6;
  s.workouts_per_user = 8;
  s.sequence_length = 12;
  s.seed = 5;
  return fitforge::synthetic::generate(s);
}

inline const fitforge::Bundle& tiny_bundle() {
  static const fitforge::Bundle bundle = [] {
    const auto records = tiny_records();
    const auto config = tiny_config();
    return fitforge::make_bundle(fitforge::run_pipeline(records, config), config);
  }();
  return bundle;
}

}  // namespace fixtures
