#include "fitforge/service.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <httplib.h>

#include "fitforge/errors.hpp"

namespace fitforge {

using json = nlohmann::ordered_json;

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

RecommendationResponse recommend(const Bundle& bundle, const RecommendationRequest& request) {
  if (!std::isfinite(request.target_calories) || request.target_calories <= 0.0) {
    throw ValidationError("target_calories", "must be a positive number of kcal");
  }
  if (request.sport == Sport::other) throw ValidationError("sport", "must be run, bike or mountain_bike");
  if (!bundle.embeddings.users.contains(request.user_id)) throw NotFoundError("user", request.user_id);
  const RouteEntry& route = bundle.route(request.route_id);

  const ContextQuery query{request.user_id,
                           route.cluster,
                           request.sport,
                           request.target_calories,
                           request.gender.value_or(bundle.gender_of(request.user_id)),
                           route.total_km()};
  const Eigen::VectorXd context = assemble_context(bundle.embeddings, query, bundle.norm, bundle.layout);

  RecommendationResponse r;
  r.request = request;
  r.predicted_distance_km = predict_distance(bundle.distance, context);
  SequencePrediction seq = predict_sequences(bundle.sequence, context, r.predicted_distance_km, route.altitude,
                                             route.distance);
  r.speed = std::move(seq.speed);
  r.heartrate = std::move(seq.heartrate);
  r.speed_avg = mean(r.speed);
  r.heartrate_avg = mean(r.heartrate);
  r.model_version = bundle.model_version;
  return r;
}

RecommendationRequest request_from_json(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "expected a JSON object");
  auto string_field = [&](const char* name) {
    if (!body.contains(name)) throw ValidationError(name, "is required");
    if (!body.at(name).is_string()) throw ValidationError(name, "must be a string");
    return body.at(name).get<std::string>();
  };
  RecommendationRequest r;
  r.user_id = string_field("user_id");
  r.route_id = string_field("route_id");
  r.sport = sport_from_string(string_field("sport"));
  if (r.sport == Sport::other) throw ValidationError("sport", "must be run, bike or mountain_bike");
  if (!body.contains("target_calories")) throw ValidationError("target_calories", "is required");
  if (!body.at("target_calories").is_number()) throw ValidationError("target_calories", "must be a number");
  r.target_calories = body.at("target_calories").get<double>();
  if (body.contains("gender") && !body.at("gender").is_null()) {
    if (!body.at("gender").is_string()) throw ValidationError("gender", "must be a string");
    r.gender = gender_from_string(body.at("gender").get<std::string>());
  }
  return r;
}

json to_json(const RecommendationRequest& r) {
  json j = {{"user_id", r.user_id},
            {"route_id", r.route_id},
            {"sport", std::string(to_string(r.sport))},
            {"target_calories", r.target_calories}};
  if (r.gender) j["gender"] = std::string(to_string(*r.gender));
  return j;
}

json to_json(const RecommendationResponse& r) {
  return {{"request", to_json(r.request)},
          {"predicted_distance_km", r.predicted_distance_km},
          {"speed_seq", r.speed},
          {"heartrate_seq", r.heartrate},
          {"speed_avg", r.speed_avg},
          {"heartrate_avg", r.heartrate_avg},
          {"model_version", r.model_version}};
}

json error_body(const std::string& code, const std::string& field, const std::string& message) {
  return {{"code", code}, {"field", field}, {"message", message}};
}

std::string render_table(const std::vector<RecommendationResponse>& scenarios) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "calories" << std::setw(16) << "distance_km" << std::setw(16)
      << "speed_avg_kmh" << "heartrate_avg_bpm\n";
  out << std::fixed;
  for (const auto& s : scenarios) {
    out << std::setw(12) << std::setprecision(0) << s.request.target_calories << std::setw(16) << std::setprecision(3)
        << s.predicted_distance_km << std::setw(16) << std::setprecision(2) << s.speed_avg << std::setprecision(1)
        << s.heartrate_avg << '\n';
  }
  return out.str();
}

void write_scenarios(std::ostream& out, const std::vector<RecommendationResponse>& scenarios) {
  if (scenarios.empty()) throw ValidationError("scenarios", "nothing to write");
  const std::size_t L = scenarios.front().speed.size();
  for (const auto& s : scenarios) {
    if (s.speed.size() != L || s.heartrate.size() != L) throw DimensionError("scenarios differ in length");
  }
  out << "step";
  for (const auto& s : scenarios) {
    std::ostringstream cal;
    cal << s.request.target_calories;
    out << ",speed_" << cal.str() << ",heartrate_" << cal.str();
  }
  out << '\n' << std::setprecision(10);
  for (std::size_t t = 0; t < L; ++t) {
    out << t;
    for (const auto& s : scenarios) out << ',' << s.speed[t] << ',' << s.heartrate[t];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

struct Service::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string field_for(const NotFoundError& e) {
  if (e.kind() == "user") return "user_id";
  if (e.kind() == "route") return "route_id";
  return e.kind();
}

}  // namespace

Service::Service(const Bundle& bundle, ServiceConfig config)
    : bundle_(bundle), config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  // httplib defaults to SO_REUSEPORT, which lets a second instance share the port
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"status", "ok"}}); });

  s.Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
    const auto& cal = bundle_.norm.range(feature::calories);
    send(res, 200,
         {{"model_version", bundle_.model_version},
          {"schema_version", kBundleSchemaVersion},
          {"rank", bundle_.layout.rank},
          {"sequence_length", bundle_.sequence_length},
          {"calories", {{"min", cal.min}, {"max", cal.max}}},
          {"sports", {"run", "bike", "mountain_bike"}}});
  });

  s.Get("/users", [this](const httplib::Request&, httplib::Response& res) {
    send(res, 200, {{"users", bundle_.embeddings.users.ids}});
  });

  s.Get("/routes", [this](const httplib::Request&, httplib::Response& res) {
    json routes = json::array();
    for (const auto& r : bundle_.routes) {
      routes.push_back({{"id", r.route_id}, {"total_distance_km", r.total_km()}, {"cluster", r.cluster}});
    }
    send(res, 200, {{"routes", routes}});
  });

  s.Get(R"(/routes/([^/]+)/profile)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    try {
      const auto& r = bundle_.route(id);
      send(res, 200, {{"id", r.route_id}, {"altitude_seq", r.altitude}, {"distance_seq", r.distance}});
    } catch (const NotFoundError& e) {
      send(res, 404, error_body("not_found", "route_id", e.what()));
    }
  });

  s.Post("/recommend", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      send(res, 200, to_json(recommend(bundle_, request_from_json(body))));
    } catch (const json::parse_error& e) {
      send(res, 400, error_body("malformed_body", "body", e.what()));
    } catch (const ValidationError& e) {
      send(res, 400, error_body("validation_error", e.field(), e.what()));
    } catch (const NotFoundError& e) {
      send(res, 404, error_body("not_found", field_for(e), e.what()));
    } catch (const std::exception& e) {
      send(res, 500, error_body("internal_error", "", e.what()));
    }
  });
}

Service::~Service() { stop(); }

void Service::bind() {
  auto& s = impl_->server;
  if (config_.port == 0) {
    port_ = s.bind_to_any_port(config_.host);
    if (port_ <= 0) throw Error("could not bind " + config_.host);
  } else {
    if (!s.bind_to_port(config_.host, config_.port)) {
      throw Error("port " + std::to_string(config_.port) + " on " + config_.host + " is unavailable");
    }
    port_ = config_.port;
  }
}

void Service::start() {
  bind();
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::run() {
  bind();
  impl_->server.listen_after_bind();
}

void Service::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fitforge
