#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fitforge/errors.hpp"
#include "fixtures.hpp"

using namespace fitforge;

namespace {

std::string line_with(std::size_t altitude_len, std::size_t speed_len) {
  auto seq = [](std::size_t n, double step) {
    std::string s = "[";
    for (std::size_t i = 0; i < n; ++i) s += (i ? "," : "") + std::to_string(step * static_cast<double>(i));
    return s + "]";
  };
  return std::string(R"({"workout_id":"a","user_id":"u","sport":"run","gender":"male","calories":120,)") +
         "\"altitude_seq\":" + seq(altitude_len, 1) + ",\"distance_seq\":" + seq(altitude_len, 0.1) +
         ",\"speed_seq\":" + seq(speed_len, 2) + ",\"heartrate_seq\":" + seq(altitude_len, 1) +
         ",\"lat_seq\":" + seq(altitude_len, 0) + ",\"lon_seq\":" + seq(altitude_len, 0) + "}";
}

}  // namespace

TEST_CASE("parse one aligned line") {
  std::istringstream in(line_with(4, 4));
  auto records = parse_records(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].length() == 4);
  CHECK(records[0].sport == Sport::run);
  CHECK(records[0].gender == Gender::male);
  CHECK(records[0].calories == 120.0);
}

TEST_CASE("parse empty stream") {
  std::istringstream in("");
  CHECK(parse_records(in).empty());
  std::istringstream blanks("\n  \n");
  CHECK(parse_records(blanks).empty());
}

TEST_CASE("misaligned speed_seq names the field") {
  std::istringstream in(line_with(4, 3));
  try {
    parse_records(in);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "speed_seq");
  }
}

TEST_CASE("malformed line reports its number") {
  std::istringstream in(line_with(3, 3) + "\n{not json\n");
  try {
    parse_records(in);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("write then parse round trip") {
  auto r = fixtures::loop_record(9);
  r.ground_truth_distance = 1.25;
  std::stringstream io;
  std::vector<WorkoutRecord> v{r, fixtures::line_record(4)};
  write_records(io, v);
  auto back = parse_records(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == r);
  CHECK(back[1] == v[1]);
}

TEST_CASE("cleaning rules") {
  auto fast = fixtures::loop_record(6, "fast");
  fast.speed[2] = 60.0;
  auto high = fixtures::loop_record(6, "high");
  for (auto& a : high.altitude) a = 9000.0;
  auto kayak = fixtures::loop_record(6, "kayak");
  kayak.sport = sport_from_string("kayaking");
  kayak.sport_name = "kayaking";
  auto ok = fixtures::loop_record(6, "ok");
  auto bike_fast = fixtures::loop_record(6, "bike");
  bike_fast.sport = Sport::bike;
  bike_fast.speed[0] = 60.0;  // the 50 km/h cap is for running

  std::vector<WorkoutRecord> in{fast, high, kayak, ok, bike_fast};
  auto [kept, report] = clean(in, CleaningRules{});
  CHECK(report.input_count == 5);
  CHECK(report.retained_count == 2);
  CHECK(report.input_count == report.retained_count + report.removals.size());
  std::map<std::string, std::string> why(report.removals.begin(), report.removals.end());
  CHECK(why.at("fast") == "speed_cap");
  CHECK(why.at("high") == "altitude_cap");
  CHECK(why.at("kayak") == "sport_filter");

  SUBCASE("idempotent") {
    auto [again, report2] = clean(kept, CleaningRules{});
    CHECK(again == kept);
    CHECK(report2.removals.empty());
  }
}

TEST_CASE("short sequences are rejected, not padded") {
  CleaningRules rules;
  rules.min_length = 10;
  std::vector<WorkoutRecord> in{fixtures::loop_record(6, "short"), fixtures::loop_record(12, "long")};
  auto [kept, report] = clean(in, rules);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].workout_id == "long");
  CHECK(report.removals[0].second == "short_sequence");
}

TEST_CASE("extend_route") {
  const auto loop = fixtures::loop_record(10);
  REQUIRE(is_loop(loop));

  SUBCASE("t = 0 leaves the record unchanged") { CHECK(extend_route(loop, 0.0) == loop); }

  SUBCASE("t = 0.3 on L = 10 gives 13 steps with the original prefix") {
    auto ext = extend_route(loop, 0.3);
    CHECK(ext.length() == 13);
    CHECK(std::equal(loop.altitude.begin(), loop.altitude.end(), ext.altitude.begin()));
    CHECK(std::equal(loop.distance.begin(), loop.distance.end(), ext.distance.begin()));
    CHECK(std::equal(loop.speed.begin(), loop.speed.end(), ext.speed.begin()));
    REQUIRE(ext.ground_truth_distance);
    CHECK(*ext.ground_truth_distance == loop.route_distance());
    CHECK(ext.route_distance() > loop.route_distance());
  }

  SUBCASE("non-loop") { CHECK_THROWS_AS(extend_route(fixtures::line_record(10), 0.3), NotALoopError); }
}

TEST_CASE("appended distances continue additively") {
  // 5-step toy loop with distances 0..4 km, extended by 2 steps.
  auto r = fixtures::loop_record(5);
  r.distance = {0, 1, 2, 3, 4};
  auto ext = extend_route(r, 0.4);
  REQUIRE(ext.length() == 7);
  CHECK(ext.distance[5] == doctest::Approx(4.0 + (1.0 - 0.0)));
  CHECK(ext.distance[6] == doctest::Approx(4.0 + (2.0 - 0.0)));
}

TEST_CASE("augment_route property over random loops") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 3 + static_cast<std::size_t>(rng() % 40);
    auto loop = fixtures::loop_record(L, "l" + std::to_string(trial));
    auto ext = augment_route(loop, {0.05, 0.5}, rng);
    CHECK(ext.length() > loop.length());
    CHECK(std::equal(loop.altitude.begin(), loop.altitude.end(), ext.altitude.begin()));
    CHECK(std::equal(loop.heartrate.begin(), loop.heartrate.end(), ext.heartrate.begin()));
    CHECK(std::is_sorted(ext.distance.begin(), ext.distance.end()));
    CHECK(ext.target_distance() == loop.route_distance());
    check_alignment(ext);
  }
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
  std::vector<WorkoutRecord> recs;
  for (int i = 0; i < 10; ++i) {
    auto r = fixtures::line_record(3, "r" + std::to_string(i));
    r.calories = 500.0;
    recs.push_back(r);
  }
  auto [s1, n1] = split_and_normalize(recs, {0.8, 0.1, 0.1}, 7);
  auto [s2, n2] = split_and_normalize(recs, {0.8, 0.1, 0.1}, 7);
  CHECK(s1.train.size() == 8);
  CHECK(s1.validation.size() == 1);
  CHECK(s1.test.size() == 1);
  CHECK(s1.train == s2.train);
  CHECK(s1.test == s2.test);
  std::set<std::string> all(s1.train.begin(), s1.train.end());
  all.insert(s1.validation.begin(), s1.validation.end());
  all.insert(s1.test.begin(), s1.test.end());
  CHECK(all.size() == 10);

  // calories all 500: degenerate range, normalized to 0
  CHECK(n1.range(feature::calories) == FeatureRange{500.0, 500.0});
  CHECK(n1.normalize(feature::calories, 500.0) == 0.0);
}

TEST_CASE("split errors") {
  std::vector<WorkoutRecord> two{fixtures::line_record(3, "a"), fixtures::line_record(3, "b")};
  CHECK_THROWS_AS(split_records(two, {0.8, 0.1, 0.1}, 1), InsufficientDataError);
  CHECK_THROWS_AS(split_records(two, {0.8, 0.3, 0.1}, 1), ValidationError);
}

TEST_CASE("norm stats from training distances") {
  std::vector<WorkoutRecord> train;
  for (double km : {2.0, 4.0, 10.0}) {
    auto r = fixtures::line_record(2, std::to_string(km));
    r.distance = {0.0, km};
    train.push_back(r);
  }
  auto n = compute_norm_stats(train);
  CHECK(n.range(feature::distance) == FeatureRange{2.0, 10.0});
  CHECK(n.normalize(feature::distance, 4.0) == doctest::Approx((4.0 - 2.0) / (10.0 - 2.0)).epsilon(1e-15));
}

TEST_CASE("normalization round trip") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  NormStats n;
  for (int i = 0; i < 200; ++i) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    n.set("f", {std::min(a, b), std::max(a, b)});
    const double x = u(rng);
    const double back = n.denormalize("f", n.normalize("f", x));
    CHECK(std::abs(back - x) <= 1e-9 * std::max(1.0, std::abs(x)));
  }
  CHECK_THROWS_AS(n.set("bad", {2.0, 1.0}), ValidationError);
}
