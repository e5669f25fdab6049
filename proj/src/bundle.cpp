#include "fitforge/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "fitforge/errors.hpp"

namespace fitforge {

using json = nlohmann::ordered_json;

void Container::add(std::string name, std::vector<std::uint64_t> dims, std::vector<double> data) {
  const std::uint64_t n = std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  if (n != data.size()) throw DimensionError("array " + name + ": dims do not match data size");
  if (contains(name)) throw ValidationError(name, "duplicate array name");
  arrays.push_back(NamedArray{std::move(name), std::move(dims), std::move(data)});
}

void Container::add(std::string name, const Eigen::MatrixXd& m) {
  add(std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
      std::vector<double>(m.data(), m.data() + m.size()));
}

void Container::add(std::string name, const Eigen::VectorXd& v) {
  add(std::move(name), {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

void Container::add(std::string name, const std::vector<double>& v) {
  add(std::move(name), {static_cast<std::uint64_t>(v.size())}, v);
}

bool Container::contains(const std::string& name) const {
  return std::any_of(arrays.begin(), arrays.end(), [&](const NamedArray& a) { return a.name == name; });
}

const NamedArray& Container::at(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw NotFoundError("bundle array", name);
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const auto& a = at(name);
  if (a.dims.size() != 2) throw DimensionError("array " + name + " is not two-dimensional");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.dims[0]), static_cast<Eigen::Index>(a.dims[1]));
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

Eigen::VectorXd Container::vector(const std::string& name) const {
  const auto& a = at(name);
  if (a.dims.size() != 1) throw DimensionError("array " + name + " is not one-dimensional");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.dims[0]));
  std::copy(a.data.begin(), a.data.end(), v.data());
  return v;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'I', 'T', 'F', 'O', 'R', 'G', 'E'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw ChecksumError("bundle is truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::string& bytes, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < n) {
    const auto step = static_cast<uInt>(std::min<std::size_t>(n - done, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + done), step);
    done += step;
  }
  return static_cast<std::uint32_t>(c);
}

}  // namespace

std::string encode_container(const Container& c, std::uint32_t schema_version) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, schema_version);
  const std::string manifest = c.manifest.dump();
  put_le<std::uint64_t>(out, manifest.size());
  out += manifest;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put_le<std::uint64_t>(out, d);
    for (double v : a.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  put_le<std::uint32_t>(out, crc(out, out.size()));
  return out;
}

Container decode_container(const std::string& bytes, std::uint32_t reader_version) {
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ChecksumError("not a fitforge bundle (bad magic header)");
  }
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes, bytes.size());
  (void)tail.str(body);
  if (tail.le<std::uint32_t>() != crc(bytes, body)) throw ChecksumError("bundle checksum mismatch");

  Reader r(bytes, body);
  (void)r.str(sizeof(kMagic));
  const auto version = r.le<std::uint32_t>();
  if (version != reader_version) throw VersionError(version, reader_version);

  Container c;
  const auto manifest_len = r.le<std::uint64_t>();
  try {
    c.manifest = json::parse(r.str(manifest_len));
  } catch (const json::exception& e) {
    throw ChecksumError(std::string("bundle manifest is corrupt: ") + e.what());
  }
  const auto n_arrays = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = r.str(r.le<std::uint32_t>());
    const auto ndim = r.le<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      a.dims.push_back(r.le<std::uint64_t>());
      n *= a.dims.back();
    }
    if (n > r.remaining() / 8) throw ChecksumError("array " + a.name + " runs past the end of the bundle");
    a.data.resize(n);
    for (auto& v : a.data) v = r.f64();
    c.arrays.push_back(std::move(a));
  }
  if (r.remaining() != 0) throw ChecksumError("trailing bytes in bundle");
  return c;
}

void write_container(const std::string& path, const Container& c, std::uint32_t schema_version) {
  const std::string bytes = encode_container(c, schema_version);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Container read_container(const std::string& path, std::uint32_t reader_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("bundle file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_container(ss.str(), reader_version);
}

// ---------------------------------------------------------------------------

namespace {

std::string activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::identity: return "identity";
    case nn::Activation::relu: return "relu";
    case nn::Activation::sigmoid: return "sigmoid";
    case nn::Activation::tanh: return "tanh";
    case nn::Activation::selu: return "selu";
  }
  return "identity";
}

nn::Activation activation_from(const std::string& s) {
  for (auto a : {nn::Activation::identity, nn::Activation::relu, nn::Activation::sigmoid, nn::Activation::tanh,
                 nn::Activation::selu}) {
    if (activation_name(a) == s) return a;
  }
  throw ValidationError("activation", "unknown activation " + s);
}

const json& section(const Container& c, const char* key) {
  if (!c.manifest.contains(key)) throw NotFoundError("bundle section", key);
  return c.manifest.at(key);
}

}  // namespace

void put_norm(Container& c, const NormStats& norm) {
  json names = json::array();
  std::vector<double> ranges;
  for (const auto& [name, r] : norm.ranges()) {
    names.push_back(name);
    ranges.push_back(r.min);
    ranges.push_back(r.max);
  }
  c.manifest["norm_features"] = names;
  c.add("norm.ranges", {names.size(), 2}, ranges);
}

NormStats get_norm(const Container& c) {
  const auto& names = section(c, "norm_features");
  const auto& a = c.at("norm.ranges");
  if (a.data.size() != 2 * names.size()) throw DimensionError("norm ranges do not match feature names");
  NormStats n;
  for (std::size_t i = 0; i < names.size(); ++i) {
    n.set(names[i].get<std::string>(), FeatureRange{a.data[2 * i], a.data[2 * i + 1]});
  }
  return n;
}

void put_clusters(Container& c, const ClusterModel& m) {
  c.manifest["clusters"] = {{"k", m.k()}, {"seed", m.seed}, {"resample_points", m.resample_points}};
  c.add("clusters.centroids", m.centroids);
  c.add("clusters.mean", m.scaler.mean);
  c.add("clusters.stddev", m.scaler.stddev);
  c.add("clusters.inertia", m.inertia_history);
}

ClusterModel get_clusters(const Container& c) {
  const auto& s = section(c, "clusters");
  ClusterModel m;
  m.seed = s.at("seed").get<std::uint64_t>();
  m.resample_points = s.at("resample_points").get<std::size_t>();
  m.centroids = c.matrix("clusters.centroids");
  m.scaler.mean = c.vector("clusters.mean");
  m.scaler.stddev = c.vector("clusters.stddev");
  const auto& inertia = c.at("clusters.inertia").data;
  m.inertia_history.assign(inertia.begin(), inertia.end());
  return m;
}

void put_factors(Container& c, const CpFactors& f, const IndexMap& users) {
  c.manifest["factors"] = {{"rank", f.rank}, {"users", users.ids}};
  c.add("cp.a", f.a);
  c.add("cp.b", f.b);
  c.add("cp.c", f.c);
  c.add("cp.lambda", f.lambda);
  c.add("cp.fit_history", f.fit_history);
}

std::pair<CpFactors, IndexMap> get_factors(const Container& c) {
  const auto& s = section(c, "factors");
  CpFactors f;
  f.rank = s.at("rank").get<std::size_t>();
  f.a = c.matrix("cp.a");
  f.b = c.matrix("cp.b");
  f.c = c.matrix("cp.c");
  f.lambda = c.vector("cp.lambda");
  f.fit_history = c.at("cp.fit_history").data;
  IndexMap users = IndexMap::from(s.at("users").get<std::vector<std::string>>());
  if (users.size() != static_cast<std::size_t>(f.a.rows())) throw DimensionError("user ids do not match factor rows");
  return {std::move(f), std::move(users)};
}

void put_mlp(Container& c, const std::string& prefix, const nn::Mlp& mlp) {
  c.manifest[prefix] = {{"layers", mlp.layers.size()},
                        {"hidden_activation", activation_name(mlp.hidden)},
                        {"output_activation", activation_name(mlp.output)}};
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    c.add(prefix + ".layer" + std::to_string(l) + ".w", mlp.layers[l].w);
    c.add(prefix + ".layer" + std::to_string(l) + ".b", mlp.layers[l].b);
  }
}

nn::Mlp get_mlp(const Container& c, const std::string& prefix) {
  const auto& s = section(c, prefix.c_str());
  nn::Mlp m;
  m.hidden = activation_from(s.at("hidden_activation").get<std::string>());
  m.output = activation_from(s.at("output_activation").get<std::string>());
  const auto n = s.at("layers").get<std::size_t>();
  for (std::size_t l = 0; l < n; ++l) {
    m.layers.push_back(nn::DenseLayer{c.matrix(prefix + ".layer" + std::to_string(l) + ".w"),
                                      c.vector(prefix + ".layer" + std::to_string(l) + ".b")});
  }
  return m;
}

void put_sequence_net(Container& c, const std::string& prefix, const nn::SequenceNet& net) {
  c.manifest[prefix] = {{"hidden1", net.layer1.hidden()},
                        {"hidden2", net.layer2.hidden()},
                        {"input", net.input()},
                        {"head_activation", activation_name(net.head_activation)}};
  auto cell = [&](const std::string& name, const nn::LstmCell& k) {
    c.add(prefix + "." + name + ".w", k.w);
    c.add(prefix + "." + name + ".b", k.b);
  };
  cell("layer1.fwd", net.layer1.fwd);
  cell("layer1.bwd", net.layer1.bwd);
  cell("layer2.fwd", net.layer2.fwd);
  cell("layer2.bwd", net.layer2.bwd);
  c.add(prefix + ".hr_head.w", net.hr_head.w);
  c.add(prefix + ".hr_head.b", net.hr_head.b);
  c.add(prefix + ".speed_head.w", net.speed_head.w);
  c.add(prefix + ".speed_head.b", net.speed_head.b);
}

nn::SequenceNet get_sequence_net(const Container& c, const std::string& prefix) {
  const auto& s = section(c, prefix.c_str());
  nn::SequenceNet net;
  net.head_activation = activation_from(s.at("head_activation").get<std::string>());
  auto cell = [&](const std::string& name) {
    return nn::LstmCell{c.matrix(prefix + "." + name + ".w"), c.vector(prefix + "." + name + ".b")};
  };
  net.layer1 = nn::BiLstm{cell("layer1.fwd"), cell("layer1.bwd")};
  net.layer2 = nn::BiLstm{cell("layer2.fwd"), cell("layer2.bwd")};
  net.hr_head = nn::DenseLayer{c.matrix(prefix + ".hr_head.w"), c.vector(prefix + ".hr_head.b")};
  net.speed_head = nn::DenseLayer{c.matrix(prefix + ".speed_head.w"), c.vector(prefix + ".speed_head.b")};
  if (net.layer1.hidden() != s.at("hidden1").get<Eigen::Index>() ||
      net.layer2.hidden() != s.at("hidden2").get<Eigen::Index>() || net.input() != s.at("input").get<Eigen::Index>()) {
    throw DimensionError("sequence network arrays disagree with the manifest");
  }
  return net;
}

// ---------------------------------------------------------------------------

void Bundle::index_routes() {
  route_index_.clear();
  for (std::size_t i = 0; i < routes.size(); ++i) route_index_.emplace(routes[i].route_id, i);
}

const RouteEntry& Bundle::route(const std::string& id) const {
  auto it = route_index_.find(id);
  if (it == route_index_.end()) throw NotFoundError("route", id);
  return routes[it->second];
}

Gender Bundle::gender_of(const std::string& user_id) const {
  auto it = user_gender.find(user_id);
  return it == user_gender.end() ? Gender::unknown : it->second;
}

Container to_container(const Bundle& b) {
  Container c;
  c.manifest["model_version"] = b.model_version;
  c.manifest["layout"] = {{"rank", b.layout.rank}, {"include_gender", b.layout.include_gender},
                          {"names", b.layout.names()}};
  c.manifest["sequence_length"] = b.sequence_length;
  c.manifest["seeds"] = {{"distance", b.distance.seed}, {"sequence", b.sequence.seed}};
  c.manifest["hyperparameters"] = b.hyperparameters;
  json sweep = json::array();
  for (const auto& e : b.rank_sweep) {
    sweep.push_back({{"rank", e.rank}, {"core_consistency", e.core_consistency},
                     {"relative_fit", e.relative_fit}, {"sweeps", e.sweeps}});
  }
  c.manifest["rank_sweep"] = sweep;

  put_norm(c, b.norm);
  put_clusters(c, b.clusters);
  put_factors(c, b.factors, b.embeddings.users);
  put_mlp(c, "distance", b.distance.mlp);
  put_sequence_net(c, "sequence", b.sequence.net);

  json genders = json::object();
  for (const auto& [user, g] : b.user_gender) genders[user] = std::string(to_string(g));
  c.manifest["user_gender"] = genders;

  json routes = json::array();
  std::vector<double> altitude, distance, offsets{0.0};
  for (const auto& r : b.routes) {
    routes.push_back({{"id", r.route_id}, {"cluster", r.cluster}});
    altitude.insert(altitude.end(), r.altitude.begin(), r.altitude.end());
    distance.insert(distance.end(), r.distance.begin(), r.distance.end());
    offsets.push_back(static_cast<double>(altitude.size()));
  }
  c.manifest["routes"] = routes;
  c.add("routes.altitude", altitude);
  c.add("routes.distance", distance);
  c.add("routes.offsets", offsets);
  return c;
}

Bundle from_container(const Container& c) {
  Bundle b;
  b.model_version = section(c, "model_version").get<std::string>();
  const auto& layout = section(c, "layout");
  b.layout = ContextLayout{layout.at("rank").get<std::size_t>(), layout.at("include_gender").get<bool>()};
  b.sequence_length = section(c, "sequence_length").get<std::size_t>();
  b.hyperparameters = section(c, "hyperparameters");
  for (const auto& e : section(c, "rank_sweep")) {
    b.rank_sweep.push_back(RankDiagnostic{e.at("rank").get<std::size_t>(), e.at("core_consistency").get<double>(),
                                          e.at("relative_fit").get<double>(), e.at("sweeps").get<std::size_t>()});
  }

  b.norm = get_norm(c);
  b.clusters = get_clusters(c);
  auto [factors, users] = get_factors(c);
  b.factors = std::move(factors);
  b.embeddings = Embeddings{std::move(users), b.factors.a, b.factors.b};
  if (b.embeddings.rank() != b.layout.rank) throw DimensionError("layout rank does not match the factors");

  const auto& seeds = section(c, "seeds");
  b.distance = DistanceModel{get_mlp(c, "distance"), b.norm, b.layout, seeds.at("distance").get<std::uint64_t>()};
  b.sequence = SequenceModel{get_sequence_net(c, "sequence"), b.norm, b.layout, seeds.at("sequence").get<std::uint64_t>()};
  if (b.distance.mlp.in() != static_cast<Eigen::Index>(b.layout.size()) ||
      b.sequence.net.input() != static_cast<Eigen::Index>(b.layout.size()) + 3) {
    throw DimensionError("model input widths do not match the context layout");
  }

  for (const auto& [user, g] : section(c, "user_gender").items()) {
    b.user_gender.emplace(user, gender_from_string(g.get<std::string>()));
  }

  const auto& routes = section(c, "routes");
  const auto& altitude = c.at("routes.altitude").data;
  const auto& distance = c.at("routes.distance").data;
  const auto& offsets = c.at("routes.offsets").data;
  if (offsets.size() != routes.size() + 1 || altitude.size() != distance.size()) {
    throw DimensionError("route catalog arrays are inconsistent");
  }
  for (std::size_t i = 0; i < routes.size(); ++i) {
    const auto lo = static_cast<std::size_t>(offsets[i]), hi = static_cast<std::size_t>(offsets[i + 1]);
    if (lo > hi || hi > altitude.size()) throw DimensionError("route catalog offsets are out of range");
    b.routes.push_back(RouteEntry{routes[i].at("id").get<std::string>(), routes[i].at("cluster").get<std::size_t>(),
                                  std::vector<double>(altitude.begin() + static_cast<std::ptrdiff_t>(lo),
                                                      altitude.begin() + static_cast<std::ptrdiff_t>(hi)),
                                  std::vector<double>(distance.begin() + static_cast<std::ptrdiff_t>(lo),
                                                      distance.begin() + static_cast<std::ptrdiff_t>(hi))});
  }
  b.index_routes();
  return b;
}

void save_bundle(const std::string& path, const Bundle& b, std::uint32_t schema_version) {
  write_container(path, to_container(b), schema_version);
}

Bundle load_bundle(const std::string& path, std::uint32_t reader_version) {
  return from_container(read_container(path, reader_version));
}

}  // namespace fitforge
