#include "fitforge/workout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fitforge/errors.hpp"

namespace fitforge {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

constexpr std::array<const char*, 6> kSequenceFields{"altitude_seq", "distance_seq", "speed_seq",
                                                     "heartrate_seq", "lat_seq", "lon_seq"};

std::array<const std::vector<double>*, 6> sequences(const WorkoutRecord& r) {
  return {&r.altitude, &r.distance, &r.speed, &r.heartrate, &r.latitude, &r.longitude};
}

std::array<std::vector<double>*, 6> sequences(WorkoutRecord& r) {
  return {&r.altitude, &r.distance, &r.speed, &r.heartrate, &r.latitude, &r.longitude};
}

}  // namespace

std::string_view to_string(Sport sport) {
  switch (sport) {
    case Sport::run: return "run";
    case Sport::bike: return "bike";
    case Sport::mountain_bike: return "mountain-bike";
    case Sport::other: return "other";
  }
  return "other";
}

std::string_view to_string(Gender gender) {
  switch (gender) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

Sport sport_from_string(std::string_view name) {
  if (name == "run") return Sport::run;
  if (name == "bike") return Sport::bike;
  if (name == "mountain-bike") return Sport::mountain_bike;
  return Sport::other;
}

Gender gender_from_string(std::string_view name) {
  if (name == "male") return Gender::male;
  if (name == "female") return Gender::female;
  if (name == "unknown") return Gender::unknown;
  throw ValidationError("gender", "unknown gender '" + std::string(name) + "'");
}

double gender_code(Gender gender) {
  switch (gender) {
    case Gender::male: return 1.0;
    case Gender::female: return -1.0;
    case Gender::unknown: return 0.0;
  }
  return 0.0;
}

std::size_t sport_index(Sport sport) {
  switch (sport) {
    case Sport::run: return 0;
    case Sport::bike: return 1;
    case Sport::mountain_bike: return 2;
    case Sport::other: break;
  }
  throw ValidationError("sport", "sport outside the modelled set");
}

double WorkoutRecord::mean_speed() const { return mean_of(speed); }
double WorkoutRecord::mean_heartrate() const { return mean_of(heartrate); }
double WorkoutRecord::mean_altitude() const { return mean_of(altitude); }

double WorkoutRecord::duration_hours() const {
  double hours = 0.0;
  for (std::size_t t = 1; t < distance.size() && t < speed.size(); ++t) {
    const double step = distance[t] - distance[t - 1];
    if (speed[t] > 1e-9 && step > 0.0) hours += step / speed[t];
  }
  return hours;
}

void check_alignment(const WorkoutRecord& record) {
  const auto seqs = sequences(record);
  const std::size_t expected = seqs[0]->size();
  if (expected == 0) throw ValidationError("altitude_seq", "empty sequence");
  for (std::size_t s = 1; s < seqs.size(); ++s) {
    if (seqs[s]->size() != expected) {
      throw ValidationError(kSequenceFields[s], "length " + std::to_string(seqs[s]->size()) +
                                                    " differs from altitude_seq length " +
                                                    std::to_string(expected));
    }
  }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

using json = nlohmann::json;

const json& require(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line, std::string("missing field '") + field + "'");
  return *it;
}

std::string require_string(const json& obj, const char* field, std::size_t line) {
  const json& v = require(obj, field, line);
  if (!v.is_string()) throw ParseError(line, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> require_sequence(const json& obj, const char* field, std::size_t line) {
  const json& v = require(obj, field, line);
  if (!v.is_array()) throw ParseError(line, std::string("field '") + field + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ParseError(line, std::string("field '") + field + "' holds a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

WorkoutRecord record_from_json(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw ParseError(line, "record must be an object");
  WorkoutRecord r;
  r.workout_id = require_string(obj, "workout_id", line);
  r.user_id = require_string(obj, "user_id", line);
  r.sport_name = require_string(obj, "sport", line);
  r.sport = sport_from_string(r.sport_name);
  try {
    r.gender = gender_from_string(require_string(obj, "gender", line));
  } catch (const ValidationError& e) {
    throw ParseError(line, e.what());
  }
  const json& cal = require(obj, "calories", line);
  if (!cal.is_number()) throw ParseError(line, "field 'calories' must be a number");
  r.calories = cal.get<double>();
  if (!(r.calories >= 0.0)) throw ValidationError("calories", "line " + std::to_string(line) + ": must be >= 0");

  auto seqs = sequences(r);
  for (std::size_t s = 0; s < seqs.size(); ++s) *seqs[s] = require_sequence(obj, kSequenceFields[s], line);

  if (auto it = obj.find("ground_truth_distance"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) throw ParseError(line, "field 'ground_truth_distance' must be a number");
    r.ground_truth_distance = it->get<double>();
  }
  try {
    check_alignment(r);
  } catch (const ValidationError& e) {
    throw ValidationError(e.field(), "line " + std::to_string(line) + ": " + e.what());
  }
  return r;
}

}  // namespace

std::vector<WorkoutRecord> parse_records(std::istream& in) {
  std::vector<WorkoutRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("malformed record: ") + e.what());
    }
    out.push_back(record_from_json(obj, line));
  }
  return out;
}

std::vector<WorkoutRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_records(in);
}

std::string to_line(const WorkoutRecord& r) {
  nlohmann::ordered_json obj;
  obj["workout_id"] = r.workout_id;
  obj["user_id"] = r.user_id;
  obj["sport"] = r.sport_name.empty() ? std::string(to_string(r.sport)) : r.sport_name;
  obj["gender"] = to_string(r.gender);
  obj["calories"] = r.calories;
  const auto seqs = sequences(r);
  for (std::size_t s = 0; s < seqs.size(); ++s) obj[kSequenceFields[s]] = *seqs[s];
  if (r.ground_truth_distance) obj["ground_truth_distance"] = *r.ground_truth_distance;
  return obj.dump();
}

void write_records(std::ostream& out, std::span<const WorkoutRecord> records) {
  for (const auto& r : records) out << to_line(r) << '\n';
}

void write_records_file(const std::string& path, std::span<const WorkoutRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_records(out, records);
}

// ---------------------------------------------------------------------------
// Cleaning

namespace {

std::optional<std::string_view> failing_rule(const WorkoutRecord& r, const CleaningRules& rules) {
  if (!rules.allowed_sports.contains(r.sport)) return "sport_filter";
  if (rules.min_length > 0 && r.length() < rules.min_length) return "short_sequence";
  if (auto cap = rules.max_speed.find(r.sport); cap != rules.max_speed.end()) {
    if (!r.speed.empty() && *std::max_element(r.speed.begin(), r.speed.end()) > cap->second) return "speed_cap";
  }
  if (r.mean_altitude() > rules.max_mean_altitude) return "altitude_cap";
  for (double hr : r.heartrate) {
    if (!(hr > 0.0 && hr < 250.0)) return "heartrate_range";
  }
  if (r.distance.empty() || std::abs(r.distance.front()) > 1e-9) return "distance_monotone";
  for (std::size_t t = 1; t < r.distance.size(); ++t) {
    if (r.distance[t] < r.distance[t - 1]) return "distance_monotone";
  }
  return std::nullopt;
}

}  // namespace

std::pair<std::vector<WorkoutRecord>, CleaningReport> clean(std::span<const WorkoutRecord> records,
                                                            const CleaningRules& rules) {
  CleaningReport report;
  report.input_count = records.size();
  std::vector<WorkoutRecord> kept;
  for (const auto& r : records) {
    if (auto rule = failing_rule(r, rules)) {
      report.removals.emplace_back(r.workout_id, std::string(*rule));
    } else {
      kept.push_back(r);
    }
  }
  report.retained_count = kept.size();
  return {std::move(kept), std::move(report)};
}

// ---------------------------------------------------------------------------
// Augmentation

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * kDeg;
  const double dlon = (lon2 - lon1) * kDeg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

bool is_loop(const WorkoutRecord& r, double tolerance_km) {
  if (r.latitude.size() < 2) return false;
  return haversine_km(r.latitude.front(), r.longitude.front(), r.latitude.back(), r.longitude.back()) <
         tolerance_km;
}

namespace {

WorkoutRecord append_prefix(const WorkoutRecord& r, std::size_t steps) {
  if (steps == 0) return r;
  WorkoutRecord out = r;
  const double end = r.route_distance();
  const double start = r.distance.front();
  for (std::size_t j = 1; j <= steps; ++j) {
    out.altitude.push_back(r.altitude[j]);
    out.distance.push_back(end + (r.distance[j] - start));
    out.speed.push_back(r.speed[j]);
    out.heartrate.push_back(r.heartrate[j]);
    out.latitude.push_back(r.latitude[j]);
    out.longitude.push_back(r.longitude[j]);
  }
  out.ground_truth_distance = r.target_distance();
  out.workout_id = r.workout_id + "+ext" + std::to_string(steps);
  return out;
}

}  // namespace

WorkoutRecord extend_route(const WorkoutRecord& record, double t, double tolerance_km) {
  check_alignment(record);
  if (!is_loop(record, tolerance_km)) throw NotALoopError("route " + record.workout_id + " does not return to its start");
  if (!(t >= 0.0 && t < 1.0)) throw ValidationError("fraction", "must lie in [0, 1)");
  const std::size_t L = record.length();
  const auto steps = static_cast<std::size_t>(std::floor(t * static_cast<double>(L) + 1e-9));
  return append_prefix(record, std::min(steps, L - 1));
}

WorkoutRecord augment_route(const WorkoutRecord& record, std::pair<double, double> range, Rng& rng,
                            double tolerance_km) {
  const auto [lo, hi] = range;
  if (!(lo > 0.0 && lo <= hi && hi < 1.0)) throw ValidationError("fraction_range", "must satisfy 0 < lo <= hi < 1");
  check_alignment(record);
  if (!is_loop(record, tolerance_km)) throw NotALoopError("route " + record.workout_id + " does not return to its start");
  const std::size_t L = record.length();
  if (L < 2) throw ValidationError("altitude_seq", "route too short to extend");
  const double t = std::uniform_real_distribution<double>(lo, hi)(rng);
  auto steps = static_cast<std::size_t>(std::floor(t * static_cast<double>(L) + 1e-9));
  steps = std::clamp<std::size_t>(steps, 1, L - 1);
  return append_prefix(record, steps);
}

// ---------------------------------------------------------------------------
// Normalization

void NormStats::set(std::string_view name, FeatureRange range) {
  if (!(range.max >= range.min)) throw ValidationError(std::string(name), "max < min");
  ranges_.insert_or_assign(std::string(name), range);
}

bool NormStats::contains(std::string_view name) const { return ranges_.find(name) != ranges_.end(); }

const FeatureRange& NormStats::range(std::string_view name) const {
  auto it = ranges_.find(name);
  if (it == ranges_.end()) throw NotFoundError("feature", std::string(name));
  return it->second;
}

double NormStats::normalize(std::string_view name, double value) const {
  const auto& r = range(name);
  if (r.degenerate()) return 0.0;
  return (value - r.min) / (r.max - r.min);
}

double NormStats::denormalize(std::string_view name, double value) const {
  const auto& r = range(name);
  return r.min + value * (r.max - r.min);
}

NormStats compute_norm_stats(std::span<const WorkoutRecord> train) {
  if (train.empty()) throw InsufficientDataError("normalization needs at least one training record");
  auto scalar = [&](auto&& get) {
    FeatureRange r{get(train.front()), get(train.front())};
    for (const auto& w : train) {
      r.min = std::min(r.min, get(w));
      r.max = std::max(r.max, get(w));
    }
    return r;
  };
  auto sequence = [&](auto member) {
    FeatureRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& w : train) {
      for (double x : w.*member) {
        r.min = std::min(r.min, x);
        r.max = std::max(r.max, x);
      }
    }
    if (r.min > r.max) r = {0.0, 0.0};
    return r;
  };
  NormStats stats;
  stats.set(feature::calories, scalar([](const WorkoutRecord& w) { return w.calories; }));
  stats.set(feature::distance, scalar([](const WorkoutRecord& w) { return w.target_distance(); }));
  stats.set(feature::route_distance, scalar([](const WorkoutRecord& w) { return w.route_distance(); }));
  stats.set(feature::altitude, sequence(&WorkoutRecord::altitude));
  stats.set(feature::distance_seq, sequence(&WorkoutRecord::distance));
  stats.set(feature::speed, sequence(&WorkoutRecord::speed));
  stats.set(feature::heartrate, sequence(&WorkoutRecord::heartrate));
  return stats;
}

DatasetSplit split_records(std::span<const WorkoutRecord> records, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw ValidationError("ratios", "every ratio must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ValidationError("ratios", "must sum to 1");
  const std::size_t n = records.size();
  if (n < ratios.size()) {
    throw InsufficientDataError("need at least 3 records to split, got " + std::to_string(n));
  }
  {
    std::unordered_map<std::string_view, int> seen;
    for (const auto& r : records) {
      if (seen[r.workout_id]++) throw ValidationError("workout_id", "duplicate id " + r.workout_id);
    }
  }
  const double dn = static_cast<double>(n);
  auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dn * ratios[1])));
  auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dn * ratios[2])));
  if (n_val + n_test >= n) throw InsufficientDataError("split leaves no training records");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
    std::swap(order[i], order[j]);
  }
  DatasetSplit split;
  split.seed = seed;
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = records[order[i]].workout_id;
    if (i < n_train) split.train.push_back(id);
    else if (i < n_train + n_val) split.validation.push_back(id);
    else split.test.push_back(id);
  }
  return split;
}

std::vector<WorkoutRecord> select(std::span<const WorkoutRecord> records, std::span<const std::string> ids) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index.emplace(records[i].workout_id, i);
  std::vector<WorkoutRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw NotFoundError("workout", id);
    out.push_back(records[it->second]);
  }
  return out;
}

std::pair<DatasetSplit, NormStats> split_and_normalize(std::span<const WorkoutRecord> records,
                                                       std::array<double, 3> ratios, std::uint64_t seed) {
  DatasetSplit split = split_records(records, ratios, seed);
  const auto train = select(records, split.train);
  return {std::move(split), compute_norm_stats(train)};
}

}  // namespace fitforge
