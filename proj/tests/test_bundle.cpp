#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fitforge/bundle.hpp"
#include "fitforge/errors.hpp"
#include "fitforge/service.hpp"
#include "fixtures.hpp"

using namespace fitforge;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Container sample() {
  Container c;
  c.manifest["name"] = "sample";
  c.manifest["n"] = 3;
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6.5;
  c.add("m", m);
  c.add("v", std::vector<double>{-1.0, 0.25});
  c.add("empty", std::vector<double>{});
  return c;
}

}  // namespace

TEST_CASE("container round trip") {
  const auto c = sample();
  const auto d = decode_container(encode_container(c));
  CHECK(d.manifest == c.manifest);
  REQUIRE(d.arrays.size() == 3);
  CHECK(d.matrix("m") == c.matrix("m"));
  CHECK(d.matrix("m")(1, 2) == 6.5);
  CHECK(d.at("v").data == std::vector<double>{-1.0, 0.25});
  CHECK(d.at("empty").data.empty());
  CHECK_THROWS_AS(d.at("missing"), NotFoundError);
  CHECK(encode_container(d) == encode_container(c));
}

TEST_CASE("container corruption") {
  const std::string bytes = encode_container(sample());
  SUBCASE("wrong magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(decode_container(b), ChecksumError);
  }
  SUBCASE("every flipped byte is caught") {
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      auto b = bytes;
      b[i] = static_cast<char>(b[i] ^ 0x10);
      CHECK_THROWS_AS(decode_container(b), ChecksumError);
    }
  }
  SUBCASE("truncation") {
    for (std::size_t n : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
      CHECK_THROWS_AS(decode_container(bytes.substr(0, n)), ChecksumError);
    }
  }
  SUBCASE("version mismatch names both versions") {
    try {
      decode_container(bytes, 2);
      FAIL("expected VersionError");
    } catch (const VersionError& e) {
      CHECK(e.file_version() == 1);
      CHECK(e.reader_version() == 2);
      const std::string msg = e.what();
      CHECK(msg.find('1') != std::string::npos);
      CHECK(msg.find('2') != std::string::npos);
    }
    CHECK_THROWS_AS(decode_container(encode_container(sample(), 2)), VersionError);
  }
  CHECK_THROWS_AS(read_container(fixtures::temp_path("does_not_exist.ffb").string()), NotFoundError);
}

TEST_CASE("bundle round trip gives identical predictions") {
  const Bundle& b = fixtures::tiny_bundle();
  const auto path = fixtures::temp_path("tiny.ffb").string();
  save_bundle(path, b);
  const Bundle loaded = load_bundle(path);

  CHECK(loaded.model_version == b.model_version);
  CHECK(loaded.layout.size() == b.layout.size());
  CHECK(loaded.sequence_length == b.sequence_length);
  CHECK(loaded.routes.size() == b.routes.size());
  CHECK(loaded.embeddings.users.ids == b.embeddings.users.ids);
  CHECK(loaded.clusters.centroids == b.clusters.centroids);
  CHECK(loaded.factors.lambda == b.factors.lambda);

  int probes = 0;
  for (std::size_t u = 0; u < b.embeddings.users.ids.size(); u += 2) {
    for (std::size_t r = 0; r < b.routes.size(); r += 5) {
      for (double cal : {250.0, 600.0}) {
        RecommendationRequest q{b.embeddings.users.ids[u], b.routes[r].route_id, Sport::run, cal, std::nullopt};
        const auto x = recommend(b, q);
        const auto y = recommend(loaded, q);
        CHECK(x.predicted_distance_km == y.predicted_distance_km);
        CHECK(x.speed == y.speed);
        CHECK(x.heartrate == y.heartrate);
        ++probes;
      }
    }
  }
  CHECK(probes > 8);

  // saving the loaded copy reproduces the file byte for byte
  const auto again = fixtures::temp_path("tiny_again.ffb").string();
  save_bundle(again, loaded);
  CHECK(slurp(path) == slurp(again));

  SUBCASE("tampered file") {
    auto bytes = slurp(path);
    bytes[bytes.size() / 3] ^= 0x01;
    const auto bad = fixtures::temp_path("tampered.ffb");
    std::ofstream(bad, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_bundle(bad.string()), ChecksumError);
  }
  SUBCASE("newer reader") { CHECK_THROWS_AS(load_bundle(path, 2), VersionError); }
  CHECK_THROWS_AS(load_bundle(fixtures::temp_path("nope.ffb").string()), NotFoundError);
}

TEST_CASE("bundle lookups") {
  const Bundle& b = fixtures::tiny_bundle();
  CHECK_THROWS_AS(b.route("no-such-route"), NotFoundError);
  CHECK(b.route(b.routes.front().route_id).route_id == b.routes.front().route_id);
  CHECK(b.gender_of("no-such-user") == Gender::unknown);
}
