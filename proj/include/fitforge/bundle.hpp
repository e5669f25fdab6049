#pragma once

// Model bundle file.
//
//   "FITFORGE"                       8 bytes
//   schema version                   u32
//   manifest length, manifest JSON   u64, bytes
//   array count                      u32
//   per array: name length, name, ndim, dims[ndim], data
//              u32, bytes, u32, u64 x ndim, f64 x prod(dims)
//   CRC-32 (zlib) of every byte above   u32
//
// Integers and doubles are little-endian. Two-dimensional arrays hold an
// Eigen matrix in column-major order with dims {rows, cols}.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fitforge/cp_tensor.hpp"
#include "fitforge/models.hpp"
#include "fitforge/route_cluster.hpp"
#include "fitforge/workout.hpp"

namespace fitforge {

inline constexpr std::uint32_t kBundleSchemaVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

struct Container {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  std::vector<NamedArray> arrays;

  void add(std::string name, std::vector<std::uint64_t> dims, std::vector<double> data);
  void add(std::string name, const Eigen::MatrixXd& m);
  void add(std::string name, const Eigen::VectorXd& v);
  void add(std::string name, const std::vector<double>& v);
  bool contains(const std::string& name) const;
  const NamedArray& at(const std::string& name) const;  // NotFoundError
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
};

std::string encode_container(const Container& c, std::uint32_t schema_version = kBundleSchemaVersion);
// Checks magic and checksum (ChecksumError), then the schema version (VersionError).
Container decode_container(const std::string& bytes, std::uint32_t reader_version = kBundleSchemaVersion);
void write_container(const std::string& path, const Container& c, std::uint32_t schema_version = kBundleSchemaVersion);
Container read_container(const std::string& path, std::uint32_t reader_version = kBundleSchemaVersion);

// Sections shared by the full bundle and the per-stage CLI files.
void put_norm(Container& c, const NormStats& norm);
NormStats get_norm(const Container& c);
void put_clusters(Container& c, const ClusterModel& m);
ClusterModel get_clusters(const Container& c);
void put_factors(Container& c, const CpFactors& f, const IndexMap& users);
std::pair<CpFactors, IndexMap> get_factors(const Container& c);
void put_mlp(Container& c, const std::string& prefix, const nn::Mlp& mlp);
nn::Mlp get_mlp(const Container& c, const std::string& prefix);
void put_sequence_net(Container& c, const std::string& prefix, const nn::SequenceNet& net);
nn::SequenceNet get_sequence_net(const Container& c, const std::string& prefix);

// ---------------------------------------------------------------------------

struct RouteEntry {
  std::string route_id;  // id of the workout that recorded the route
  std::size_t cluster = 0;
  std::vector<double> altitude;
  std::vector<double> distance;
  double total_km() const { return distance.empty() ? 0.0 : distance.back(); }
};

struct Bundle {
  std::string model_version = "fitforge-1";
  ContextLayout layout;
  std::size_t sequence_length = 0;
  NormStats norm;
  ClusterModel clusters;
  CpFactors factors;
  Embeddings embeddings;
  DistanceModel distance;
  SequenceModel sequence;
  std::vector<RouteEntry> routes;
  std::map<std::string, Gender> user_gender;  // kept for request defaults, never served
  std::vector<RankDiagnostic> rank_sweep;
  nlohmann::ordered_json hyperparameters = nlohmann::ordered_json::object();

  void index_routes();
  const RouteEntry& route(const std::string& id) const;  // NotFoundError
  Gender gender_of(const std::string& user_id) const;    // unknown when absent

 private:
  std::unordered_map<std::string, std::size_t> route_index_;
};

Container to_container(const Bundle& b);
Bundle from_container(const Container& c);
void save_bundle(const std::string& path, const Bundle& b, std::uint32_t schema_version = kBundleSchemaVersion);
Bundle load_bundle(const std::string& path, std::uint32_t reader_version = kBundleSchemaVersion);

}  // namespace fitforge
