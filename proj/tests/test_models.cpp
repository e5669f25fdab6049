#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fitforge/errors.hpp"
#include "fitforge/models.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fitforge;
using nn::Matrix;

namespace {

NormStats toy_norm() {
  NormStats n;
  n.set(feature::calories, {100.0, 900.0});
  n.set(feature::distance, {0.0, 20.0});
  n.set(feature::route_distance, {0.0, 25.0});
  n.set(feature::altitude, {0.0, 500.0});
  n.set(feature::distance_seq, {0.0, 25.0});
  n.set(feature::speed, {10.0, 14.0});
  n.set(feature::heartrate, {100.0, 180.0});
  return n;
}

Embeddings toy_embeddings(std::size_t R) {
  Embeddings e;
  e.users = IndexMap::from({"u1", "u2"});
  e.user_factors = Eigen::MatrixXd::Constant(2, static_cast<Eigen::Index>(R), 0.3);
  e.user_factors(1, 0) = -0.4;
  e.route_factors = Eigen::MatrixXd::Constant(3, static_cast<Eigen::Index>(R), -0.2);
  return e;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double selu(double x) { return x > 0 ? nn::kSeluLambda * x : nn::kSeluLambda * nn::kSeluAlpha * (std::exp(x) - 1); }

// Plain-loop LSTM step for the hand evaluation below.
void lstm_step(const nn::LstmCell& c, const std::vector<double>& x, std::vector<double>& h, std::vector<double>& cs) {
  const int H = static_cast<int>(c.hidden());
  std::vector<double> z(h);
  z.insert(z.end(), x.begin(), x.end());
  std::vector<double> nh(H), nc(H);
  for (int k = 0; k < H; ++k) {
    double a[4];
    for (int gate = 0; gate < 4; ++gate) {
      a[gate] = c.b(gate * H + k);
      for (std::size_t j = 0; j < z.size(); ++j) a[gate] += c.w(gate * H + k, static_cast<int>(j)) * z[j];
    }
    const double f = sigmoid(a[0]), i = sigmoid(a[1]), g = std::tanh(a[2]), o = sigmoid(a[3]);
    nc[k] = f * cs[k] + i * g;
    nh[k] = o * std::tanh(nc[k]);
  }
  h = nh;
  cs = nc;
}

std::vector<std::vector<double>> bilstm(const nn::BiLstm& l, const std::vector<std::vector<double>>& xs) {
  const std::size_t L = xs.size();
  const auto H = static_cast<std::size_t>(l.hidden());
  std::vector<std::vector<double>> out(L);
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    lstm_step(l.fwd, xs[t], h, c);
    out[t] = h;
  }
  std::fill(h.begin(), h.end(), 0.0);
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t t = L; t-- > 0;) {
    lstm_step(l.bwd, xs[t], h, c);
    out[t].insert(out[t].end(), h.begin(), h.end());
  }
  return out;
}

}  // namespace

TEST_CASE("context layout") {
  ContextLayout with{2, true}, without{2, false};
  CHECK(with.size() == 10);
  CHECK(without.size() == 9);
  CHECK(with.names().size() == with.size());
  CHECK(with.names()[with.calories_slot()] == "calories");
  CHECK_THROWS_AS(without.gender_slot(), DimensionError);
}

TEST_CASE("assemble_context") {
  const auto e = toy_embeddings(2);
  const auto norm = toy_norm();
  ContextLayout layout{2, true};
  ContextQuery q{"u2", 1, Sport::bike, 900.0, Gender::female, 12.5};
  auto v = assemble_context(e, q, norm, layout);
  REQUIRE(v.size() == 10);
  CHECK(v[0] == -0.4);
  CHECK(v[2] == -0.2);
  CHECK(v[layout.calories_slot()] == 1.0);
  CHECK(v[layout.sport_offset()] == 0.0);
  CHECK(v[layout.sport_offset() + 1] == 1.0);
  CHECK(v[layout.gender_slot()] == -1.0);
  CHECK(v[layout.route_distance_slot()] == doctest::Approx(0.5));

  SUBCASE("gender switched off") {
    auto w = assemble_context(e, q, norm, ContextLayout{2, false});
    CHECK(w.size() == 9);
  }
  SUBCASE("calories 474 vs 651 differ only in the calorie slot") {
    q.calories = 474;
    auto a = assemble_context(e, q, norm, layout);
    q.calories = 651;
    auto b = assemble_context(e, q, norm, layout);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (i == static_cast<Eigen::Index>(layout.calories_slot())) {
        CHECK(b[i] - a[i] == doctest::Approx((651.0 - 474.0) / 800.0));
      } else {
        CHECK(a[i] == b[i]);
      }
    }
  }
  SUBCASE("clamped to +-10") {
    q.calories = 1e6;
    CHECK(assemble_context(e, q, norm, layout)[layout.calories_slot()] == kContextClamp);
  }
  SUBCASE("errors") {
    q.user_id = "nobody";
    CHECK_THROWS_AS(assemble_context(e, q, norm, layout), NotFoundError);
    q.user_id = "u1";
    q.route_cluster = 7;
    CHECK_THROWS_AS(assemble_context(e, q, norm, layout), NotFoundError);
    q.route_cluster = 0;
    q.calories = -1;
    CHECK_THROWS_AS(assemble_context(e, q, norm, layout), ValidationError);
    q.calories = 1;
    q.sport = Sport::other;
    CHECK_THROWS_AS(assemble_context(e, q, norm, layout), ValidationError);
    CHECK_THROWS_AS(assemble_context(e, q, norm, ContextLayout{3, true}), DimensionError);
  }
}

TEST_CASE("predict_distance") {
  Rng rng(1);
  DistanceModel m{nn::Mlp::init({4, 3, 1}, rng), toy_norm(), ContextLayout{}, 0};
  nn::fill_zero(m.mlp.params());
  Eigen::VectorXd ctx = Eigen::VectorXd::Ones(4);
  CHECK(predict_distance(m, ctx) == doctest::Approx(10.0));
  m.mlp.layers.back().b(0) = -1e4;
  CHECK(predict_distance(m, ctx) == doctest::Approx(0.0));
  CHECK_THROWS_AS(predict_distance(m, Eigen::VectorXd(Eigen::VectorXd::Ones(5))), DimensionError);

  SUBCASE("one hidden unit by hand") {
    DistanceModel h{nn::Mlp::init({1, 1, 1}, rng), toy_norm(), ContextLayout{}, 0};
    h.mlp.layers[0].w(0, 0) = 0.7;
    h.mlp.layers[0].b(0) = 0.1;
    h.mlp.layers[1].w(0, 0) = -1.3;
    h.mlp.layers[1].b(0) = 0.4;
    Eigen::VectorXd x(1);
    x << 2.0;
    const double expect = 20.0 * sigmoid(-1.3 * std::max(0.0, 0.7 * 2.0 + 0.1) + 0.4);
    CHECK(predict_distance(h, x) == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("always inside the training range") {
    auto r = DistanceModel{nn::Mlp::init({4, 6, 1}, rng), toy_norm(), ContextLayout{}, 0};
    for (auto v : r.mlp.params())
      for (double& p : v) p *= 30.0;
    Eigen::MatrixXd xs = Eigen::MatrixXd::Random(4, 200) * 10;
    auto out = predict_distance(r, xs);
    CHECK(out.minCoeff() >= 0.0);
    CHECK(out.maxCoeff() <= 20.0);
  }
}

TEST_CASE("predict_sequences") {
  Rng rng(2);
  SequenceModel m{nn::SequenceNet::init(4, 3, 2, rng), toy_norm(), ContextLayout{}, 0};
  Eigen::VectorXd ctx(1);
  ctx << 0.4;
  std::vector<double> alt{10, 40, 80, 120, 90, 60, 30}, dist{0, 1, 2, 3, 4, 5, 6};

  auto p = predict_sequences(m, ctx, 8.0, alt, dist);
  CHECK(p.speed.size() == 7);
  CHECK(p.heartrate.size() == 7);
  std::vector<double> short_dist(dist.begin(), dist.end() - 1);
  CHECK_THROWS_AS(predict_sequences(m, ctx, 8.0, alt, short_dist), DimensionError);

  SUBCASE("zeroed head weights give constant sequences") {
    m.net.speed_head.w.setZero();
    m.net.hr_head.w.setZero();
    m.net.speed_head.b(0) = 0.3;
    m.net.hr_head.b(0) = -0.2;
    auto c = predict_sequences(m, ctx, 8.0, alt, dist);
    for (double s : c.speed) CHECK(s == doctest::Approx(10.0 + 4.0 * selu(0.3)));
    for (double h : c.heartrate) CHECK(h == doctest::Approx(100.0 + 80.0 * selu(-0.2)));
  }

  SUBCASE("hand evaluation on L = 2") {
    SequenceModel t{nn::SequenceNet::init(4, 2, 2, rng), toy_norm(), ContextLayout{}, 0};
    std::vector<double> a2{100, 250}, d2{0, 5};
    auto got = predict_sequences(t, ctx, 8.0, a2, d2);
    const auto& n = t.norm;
    std::vector<std::vector<double>> xs;
    for (int s = 0; s < 2; ++s) {
      xs.push_back({0.4, n.normalize(feature::distance, 8.0), n.normalize(feature::altitude, a2[s]),
                    n.normalize(feature::distance_seq, d2[s])});
    }
    auto h1 = bilstm(t.net.layer1, xs);
    auto h2 = bilstm(t.net.layer2, h1);
    for (int s = 0; s < 2; ++s) {
      double zs = t.net.speed_head.b(0), zh = t.net.hr_head.b(0);
      for (int k = 0; k < 4; ++k) {
        zs += t.net.speed_head.w(0, k) * h2[s][k];
        zh += t.net.hr_head.w(0, k) * h1[s][k];
      }
      CHECK(got.speed[s] == doctest::Approx(n.denormalize(feature::speed, selu(zs))).epsilon(1e-13));
      CHECK(got.heartrate[s] == doctest::Approx(n.denormalize(feature::heartrate, selu(zh))).epsilon(1e-13));
    }
  }
}

TEST_CASE("train_distance: constant target, determinism, empty data") {
  Rng rng(3);
  DistanceDataset d;
  d.contexts = Eigen::MatrixXd::Random(5, 64);
  d.target_km = Eigen::VectorXd::Constant(64, 7.0);
  NormStats norm = toy_norm();
  TrainingConfig cfg;
  cfg.distance_hidden = {8};
  cfg.distance_epochs = 300;
  auto [m, curve] = train_distance(d, DistanceDataset{}, norm, ContextLayout{}, cfg);
  CHECK(curve.train_loss.back() < 1e-4);
  auto pred = predict_distance(m, d.contexts);
  for (Eigen::Index i = 0; i < pred.size(); ++i) CHECK(std::abs(pred[i] - 7.0) / 20.0 < 0.01);

  auto [m2, curve2] = train_distance(d, DistanceDataset{}, norm, ContextLayout{}, cfg);
  CHECK(curve.train_loss == curve2.train_loss);
  CHECK(m.mlp.layers[0].w == m2.mlp.layers[0].w);

  CHECK_THROWS_AS(train_distance(DistanceDataset{}, DistanceDataset{}, norm, ContextLayout{}, cfg),
                  InsufficientDataError);
}

TEST_CASE("train_distance beats the mean on a learnable target") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  auto make = [&](int n) {
    DistanceDataset d;
    d.contexts.resize(4, n);
    d.target_km.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 4; ++k) d.contexts(k, i) = u(rng);
      d.target_km[i] = 10.0 + 4.0 * d.contexts(0, i) - 3.0 * d.contexts(1, i) * d.contexts(2, i);
    }
    return d;
  };
  auto train = make(400), val = make(100), test = make(100);
  TrainingConfig cfg;
  cfg.distance_hidden = {16};
  cfg.distance_lr = 1e-2;
  cfg.distance_epochs = 150;
  auto [m, curve] = train_distance(train, val, toy_norm(), ContextLayout{}, cfg);
  auto pred = predict_distance(m, test.contexts);
  std::vector<double> p(pred.data(), pred.data() + pred.size()), t(test.target_km.data(), test.target_km.data() + 100);
  const double mean = train.target_km.mean();
  std::vector<double> base(100, mean);
  CHECK(oracle::rmse(p, t) < 0.7 * oracle::rmse(base, t));
  CHECK(curve.best_epoch < curve.validation_loss.size());
}

TEST_CASE("train_sequence") {
  NormStats norm = toy_norm();
  auto make = [](std::size_t n, std::size_t L, bool constant) {
    SequenceDataset d;
    d.contexts = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(n));
    d.distance_km = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 5.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> alt(L), dist(L), sp(L), hr(L);
      for (std::size_t t = 0; t < L; ++t) {
        alt[t] = 100.0 + 50.0 * std::sin(0.5 * static_cast<double>(t + i));
        dist[t] = 0.2 * static_cast<double>(t);
        const double grade = std::cos(0.5 * static_cast<double>(t + i));
        sp[t] = constant ? 12.0 : 12.0 - 1.5 * grade;
        hr[t] = constant ? 140.0 : 140.0 + 20.0 * grade;
      }
      d.contexts(0, static_cast<Eigen::Index>(i)) = 0.1 * static_cast<double>(i % 3);
      d.altitude.push_back(alt);
      d.distance.push_back(dist);
      d.speed.push_back(sp);
      d.heartrate.push_back(hr);
    }
    return d;
  };
  TrainingConfig cfg;
  cfg.hidden1 = 6;
  cfg.hidden2 = 4;
  cfg.sequence_batch = 8;

  SUBCASE("constant targets") {
    cfg.sequence_epochs = 10;
    auto d = make(16, 6, true);
    auto [m, curve] = train_sequence(d, SequenceDataset{}, norm, ContextLayout{}, cfg);
    Eigen::VectorXd ctx = d.contexts.col(0);
    auto p = predict_sequences(m, ctx, 5.0, d.altitude[0], d.distance[0]);
    for (double s : p.speed) CHECK(std::abs(s - 12.0) < 0.02 * 4.0);
    for (double h : p.heartrate) CHECK(std::abs(h - 140.0) < 0.02 * 80.0);
  }
  SUBCASE("loss falls over the first epochs and runs repeat exactly") {
    cfg.sequence_epochs = 5;
    auto d = make(24, 8, false);
    auto [m, curve] = train_sequence(d, make(8, 8, false), norm, ContextLayout{}, cfg);
    REQUIRE(curve.train_loss.size() == 5);
    CHECK(curve.train_loss.back() < curve.train_loss.front());
    auto [m2, curve2] = train_sequence(d, make(8, 8, false), norm, ContextLayout{}, cfg);
    CHECK(curve.train_loss == curve2.train_loss);
  }
  CHECK_THROWS_AS(train_sequence(SequenceDataset{}, SequenceDataset{}, norm, ContextLayout{}, cfg),
                  InsufficientDataError);
}

TEST_CASE("metrics") {
  std::vector<double> a{1, 2, 3};
  CHECK(rmse(a, a) == 0.0);
  std::vector<double> p{1, -1}, t{0, 0};
  CHECK(rmse(p, t) == 1.0);
  CHECK(mae_seq({{1.0, 3.0}}, {{0.0, 0.0}}) == 2.0);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), InsufficientDataError);
  CHECK_THROWS_AS(rmse(a, p), DimensionError);
  CHECK_THROWS_AS(mae_seq({{1.0}}, {{1.0, 2.0}}), DimensionError);
  CHECK_THROWS_AS(mae_seq({}, {}), InsufficientDataError);

  Rng rng(5);
  std::uniform_real_distribution<double> u(-50, 50);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = len(rng);
    std::vector<double> x(n), y(n);
    std::vector<std::vector<double>> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
      const int L = len(rng);
      for (int s = 0; s < L; ++s) {
        xs[i].push_back(u(rng));
        ys[i].push_back(u(rng));
      }
    }
    CHECK(std::abs(rmse(x, y) - oracle::rmse(x, y)) <= 1e-12);
    CHECK(std::abs(mae_seq(xs, ys) - oracle::mae_seq(xs, ys)) <= 1e-12);
  }
}

namespace {

struct Oracle : WorkoutPredictor {
  double distance_km(const WorkoutRecord& r) const override { return r.target_distance(); }
  SequencePrediction sequences(const WorkoutRecord& r, double) const override { return {r.speed, r.heartrate}; }
};

// Records which distance evaluate hands to the sequence stage.
struct Recorder : WorkoutPredictor {
  double distance_km(const WorkoutRecord& r) const override { return 100.0 + r.calories; }
  SequencePrediction sequences(const WorkoutRecord& r, double d) const override {
    return {std::vector<double>(r.length(), d), std::vector<double>(r.length(), 0.0)};
  }
};

}  // namespace

TEST_CASE("evaluate") {
  std::vector<WorkoutRecord> test;
  for (int i = 0; i < 3; ++i) {
    auto r = fixtures::line_record(2, "t" + std::to_string(i));
    r.distance = {0.0, 1.0 + i};
    r.speed = {10.0 + i, 12.0};
    r.heartrate = {120.0, 130.0 + 10 * i};
    r.calories = i;
    test.push_back(r);
  }
  auto perfect = evaluate(Oracle{}, test);
  CHECK(perfect.distance_rmse == 0.0);
  CHECK(perfect.speed_mae == 0.0);
  CHECK(perfect.heartrate_mae == 0.0);
  CHECK(perfect.n_test == 3);

  // mean baseline fitted on the same three records:
  // distance mean 2, errors {-1,0,1} -> rmse sqrt(2/3)
  // speed step means {11,12}: record errors {1,0},{0,0},{1,0} -> mae (0.5+0+0.5)/3
  // hr step means {120,140}: record errors {0,10},{0,0},{0,10} -> mae (5+0+5)/3
  auto base = evaluate(MeanBaseline(test), test);
  CHECK(base.distance_rmse == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(base.speed_mae == doctest::Approx(1.0 / 3.0));
  CHECK(base.heartrate_mae == doctest::Approx(10.0 / 3.0));

  // the sequence stage receives the predicted distance, not the truth
  auto rec = evaluate(Recorder{}, test);
  std::vector<std::vector<double>> pred, truth;
  for (const auto& r : test) {
    pred.push_back(std::vector<double>(2, 100.0 + r.calories));
    truth.push_back(r.speed);
  }
  CHECK(rec.speed_mae == doctest::Approx(oracle::mae_seq(pred, truth)));
  CHECK_THROWS_AS(evaluate(Oracle{}, std::vector<WorkoutRecord>{}), InsufficientDataError);
}
