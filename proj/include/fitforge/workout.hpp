#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fitforge {

using Rng = std::mt19937_64;

enum class Sport { run, bike, mountain_bike, other };
enum class Gender { male, female, unknown };

inline constexpr std::array<Sport, 3> kModelledSports{Sport::run, Sport::bike, Sport::mountain_bike};

std::string_view to_string(Sport sport);
std::string_view to_string(Gender gender);
// Unknown names map to Sport::other; the original text is kept on the record.
Sport sport_from_string(std::string_view name);
// Throws ValidationError("gender") for unknown names.
Gender gender_from_string(std::string_view name);
// +1 male, -1 female, 0 unknown.
double gender_code(Gender gender);
std::size_t sport_index(Sport sport);  // run=0, bike=1, mountain_bike=2

// One exercise session. All sequences are aligned step-by-step.
struct WorkoutRecord {
  std::string workout_id;
  std::string user_id;
  Sport sport = Sport::run;
  std::string sport_name;  // as ingested
  Gender gender = Gender::unknown;
  double calories = 0.0;   // kcal

  std::vector<double> altitude;   // m
  std::vector<double> distance;   // cumulative km, starts at 0
  std::vector<double> speed;      // km/h
  std::vector<double> heartrate;  // bpm
  std::vector<double> latitude;   // degrees
  std::vector<double> longitude;  // degrees

  // Set on extended routes: the distance actually covered by the original
  // workout, which stays the regression target.
  std::optional<double> ground_truth_distance;

  std::size_t length() const { return altitude.size(); }
  double route_distance() const { return distance.empty() ? 0.0 : distance.back(); }
  double target_distance() const { return ground_truth_distance.value_or(route_distance()); }
  double mean_speed() const;
  double mean_heartrate() const;
  double mean_altitude() const;
  // Hours, integrated from distance increments over the per-step speed.
  double duration_hours() const;

  bool operator==(const WorkoutRecord&) const = default;
};

// Throws ValidationError naming the first sequence whose length differs from altitude_seq.
void check_alignment(const WorkoutRecord& record);

// Line-delimited records: one flat JSON object per line. Blank lines are skipped.
std::vector<WorkoutRecord> parse_records(std::istream& in);
std::vector<WorkoutRecord> read_records_file(const std::string& path);
void write_records(std::ostream& out, std::span<const WorkoutRecord> records);
void write_records_file(const std::string& path, std::span<const WorkoutRecord> records);
std::string to_line(const WorkoutRecord& record);

// ---------------------------------------------------------------------------
// Cleaning

struct CleaningRules {
  std::map<Sport, double> max_speed{{Sport::run, 50.0}, {Sport::bike, 120.0}, {Sport::mountain_bike, 120.0}};
  double max_mean_altitude = 8000.0;
  std::set<Sport> allowed_sports{kModelledSports.begin(), kModelledSports.end()};
  std::size_t min_length = 0;  // 0 disables the length rule
};

struct CleaningReport {
  std::size_t input_count = 0;
  std::size_t retained_count = 0;
  std::vector<std::pair<std::string, std::string>> removals;  // (workout_id, rule)
};

// Rule names: sport_filter, short_sequence, speed_cap, altitude_cap,
// heartrate_range, distance_monotone. The first failing rule is recorded.
std::pair<std::vector<WorkoutRecord>, CleaningReport> clean(std::span<const WorkoutRecord> records,
                                                            const CleaningRules& rules);

// ---------------------------------------------------------------------------
// Route augmentation

inline constexpr double kLoopToleranceKm = 0.1;

// Great-circle distance in km.
double haversine_km(double lat1, double lon1, double lat2, double lon2);
bool is_loop(const WorkoutRecord& record, double tolerance_km = kLoopToleranceKm);

// Appends the first floor(t * L) movement steps of the route after its end,
// continuing the cumulative distance. t == 0 returns the record unchanged.
// Throws NotALoopError when the route does not return to its start.
WorkoutRecord extend_route(const WorkoutRecord& record, double t, double tolerance_km = kLoopToleranceKm);

// t ~ Uniform(range); at least one step is always appended.
WorkoutRecord augment_route(const WorkoutRecord& record, std::pair<double, double> fraction_range, Rng& rng,
                            double tolerance_km = kLoopToleranceKm);

// ---------------------------------------------------------------------------
// Splitting and normalization

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
  bool degenerate() const { return max == min; }
  bool operator==(const FeatureRange&) const = default;
};

namespace feature {
inline constexpr std::string_view calories = "calories";
inline constexpr std::string_view distance = "distance";              // regression target, km
inline constexpr std::string_view route_distance = "route_distance";  // model input, km
inline constexpr std::string_view altitude = "altitude";
inline constexpr std::string_view distance_seq = "distance_seq";
inline constexpr std::string_view speed = "speed";
inline constexpr std::string_view heartrate = "heartrate";
}  // namespace feature

// Min-max statistics. A degenerate range maps every value to 0.
class NormStats {
 public:
  void set(std::string_view name, FeatureRange range);
  const FeatureRange& range(std::string_view name) const;
  bool contains(std::string_view name) const;
  double normalize(std::string_view name, double value) const;
  double denormalize(std::string_view name, double value) const;
  const std::map<std::string, FeatureRange, std::less<>>& ranges() const { return ranges_; }
  bool operator==(const NormStats&) const = default;

 private:
  std::map<std::string, FeatureRange, std::less<>> ranges_;
};

NormStats compute_norm_stats(std::span<const WorkoutRecord> train);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

DatasetSplit split_records(std::span<const WorkoutRecord> records, std::array<double, 3> ratios,
                           std::uint64_t seed);
std::pair<DatasetSplit, NormStats> split_and_normalize(std::span<const WorkoutRecord> records,
                                                       std::array<double, 3> ratios, std::uint64_t seed);

// Records of `records` whose ids are listed, in list order.
std::vector<WorkoutRecord> select(std::span<const WorkoutRecord> records, std::span<const std::string> ids);

}  // namespace fitforge
