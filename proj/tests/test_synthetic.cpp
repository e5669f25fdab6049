#include <doctest.h>

#include <sstream>

#include "fitforge/errors.hpp"
#include "fixtures.hpp"

using namespace fitforge;
using namespace fitforge::synthetic;

TEST_CASE("same seed, identical bytes") {
  SyntheticConfig c;
  c.n_users = 4;
  c.n_routes = 3;
  c.workouts_per_user = 3;
  c.sequence_length = 20;
  c.seed = 42;
  std::ostringstream a, b;
  auto ra = generate(c);
  auto rb = generate(c);
  write_records(a, ra);
  write_records(b, rb);
  CHECK(a.str() == b.str());
  c.seed = 43;
  std::ostringstream other;
  write_records(other, generate(c));
  CHECK(other.str() != a.str());
}

TEST_CASE("zero noise on flat ground gives constant speed") {
  auto route = SyntheticRoute::flat(3.0, 100.0);
  SyntheticUser user{"u", 1.2, Gender::male, Sport::run};
  Rng rng(1);
  auto r = simulate_workout(route, user, Sport::run, 0.01, 30, 0.0, rng, "w");
  for (double s : r.speed) CHECK(s == doctest::Approx(1.2 * base_speed(Sport::run)).epsilon(1e-14));
  for (double a : r.altitude) CHECK(a == doctest::Approx(100.0));
}

TEST_CASE("fitter user is faster at every step") {
  Rng seed_rng(9);
  auto route = SyntheticRoute::random(seed_rng, 40.0, -3.7);
  SyntheticUser slow{"a", 0.6, Gender::female, Sport::bike};
  SyntheticUser fast{"b", 1.4, Gender::female, Sport::bike};
  Rng r1(2), r2(2);
  auto ws = simulate_workout(route, slow, Sport::bike, 0.005, 60, 0.0, r1, "s");
  auto wf = simulate_workout(route, fast, Sport::bike, 0.005, 60, 0.0, r2, "f");
  for (std::size_t t = 0; t < 60; ++t) CHECK(wf.speed[t] > ws.speed[t]);
}

TEST_CASE("records follow the documented formulas at zero noise") {
  auto route = SyntheticRoute::flat(2.0, 0.0);
  SyntheticUser user{"u", 0.9, Gender::unknown, Sport::mountain_bike};
  Rng rng(0);
  const double dt = 0.02;
  auto r = simulate_workout(route, user, Sport::mountain_bike, dt, 10, 0.0, rng, "w");
  const double v = expected_speed(0.9, Sport::mountain_bike, 0.0);
  const double hr = expected_heartrate(Sport::mountain_bike, v, 0.0);
  double cal = 0.0;
  for (std::size_t t = 1; t < 10; ++t) cal += calorie_factor(Sport::mountain_bike) * v * dt * (1 + kCalorieHrCoeff * hr / 100);
  CHECK(r.calories == doctest::Approx(cal).epsilon(1e-12));
  CHECK(r.route_distance() == doctest::Approx(9 * v * dt).epsilon(1e-12));
  for (double h : r.heartrate) CHECK(h == doctest::Approx(hr));
}

TEST_CASE("calories increase with distance at fixed fitness and sport") {
  Rng seed_rng(4);
  auto route = SyntheticRoute::random(seed_rng, 40.0, -3.7);
  SyntheticUser user{"u", 1.0, Gender::male, Sport::run};
  double prev_cal = -1.0, prev_km = -1.0;
  for (double dt : {0.002, 0.004, 0.006, 0.01, 0.02}) {
    Rng rng(0);
    auto r = simulate_workout(route, user, Sport::run, dt, 40, 0.0, rng, "w");
    CHECK(r.route_distance() > prev_km);
    CHECK(r.calories > prev_cal);
    prev_km = r.route_distance();
    prev_cal = r.calories;
  }
}

TEST_CASE("generated records are clean and aligned") {
  auto recs = fixtures::tiny_records();
  CHECK(recs.size() == 64);
  auto [kept, report] = clean(recs, CleaningRules{});
  CHECK(report.removals.empty());
  std::size_t loops = 0;
  for (const auto& r : recs) {
    check_alignment(r);
    CHECK(r.distance.front() == 0.0);
    loops += is_loop(r) ? 1 : 0;
  }
  CHECK(loops > 0);
}

TEST_CASE("invalid configs") {
  SyntheticConfig c;
  c.n_users = 0;
  CHECK_THROWS_AS(generate(c), ValidationError);
  c = {};
  c.noise_scale = -1;
  CHECK_THROWS_AS(generate(c), ValidationError);
}
