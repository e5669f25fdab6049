#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fitforge/bundle.hpp"

namespace fitforge {

struct RecommendationRequest {
  std::string user_id;
  std::string route_id;
  Sport sport = Sport::run;
  double target_calories = 0.0;
  std::optional<Gender> gender;  // overrides the stored value when present
};

struct RecommendationResponse {
  RecommendationRequest request;
  double predicted_distance_km = 0.0;
  std::vector<double> speed;      // km/h, one per route step
  std::vector<double> heartrate;  // bpm
  double speed_avg = 0.0;
  double heartrate_avg = 0.0;
  std::string model_version;
};

// Embedding lookups, context, distance model, then the sequence model over
// the stored route profile with the predicted distance.
// Throws ValidationError (target_calories, sport) and NotFoundError (user, route).
RecommendationResponse recommend(const Bundle& bundle, const RecommendationRequest& request);

// Throws ValidationError naming the offending field.
RecommendationRequest request_from_json(const nlohmann::ordered_json& body);
nlohmann::ordered_json to_json(const RecommendationRequest& request);
nlohmann::ordered_json to_json(const RecommendationResponse& response);

// {code, field, message}
nlohmann::ordered_json error_body(const std::string& code, const std::string& field, const std::string& message);

// One row per scenario: calories, distance, speed avg, heart-rate avg.
std::string render_table(const std::vector<RecommendationResponse>& scenarios);
// CSV: step, then speed and heart rate for each scenario. Scenarios must share one length.
void write_scenarios(std::ostream& out, const std::vector<RecommendationResponse>& scenarios);

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
};

// HTTP front end over an immutable bundle.
class Service {
 public:
  Service(const Bundle& bundle, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Throws Error when the port is taken.
  void start();
  // Binds and serves on the calling thread until stop() is called elsewhere.
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  void bind();
  const Bundle& bundle_;
  ServiceConfig config_;
  int port_ = 0;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace fitforge
