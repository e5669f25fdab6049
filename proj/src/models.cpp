#include "fitforge/models.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "fitforge/errors.hpp"
#include "fitforge/kernels.hpp"

namespace fitforge {

std::size_t ContextLayout::gender_slot() const {
  if (!include_gender) throw DimensionError("layout has no gender slot");
  return 2 * rank + 4;
}

std::vector<std::string> ContextLayout::names() const {
  std::vector<std::string> n;
  for (std::size_t r = 0; r < rank; ++r) n.push_back("user_" + std::to_string(r));
  for (std::size_t r = 0; r < rank; ++r) n.push_back("route_" + std::to_string(r));
  n.insert(n.end(), {"calories", "sport_run", "sport_bike", "sport_mountain_bike"});
  if (include_gender) n.emplace_back("gender");
  n.emplace_back("route_distance");
  return n;
}

Eigen::VectorXd assemble_context(const Embeddings& embeddings, const ContextQuery& query, const NormStats& norm,
                                 const ContextLayout& layout) {
  if (embeddings.rank() != layout.rank) {
    throw DimensionError("embedding rank " + std::to_string(embeddings.rank()) + " does not match layout rank " +
                         std::to_string(layout.rank));
  }
  if (!(query.calories >= 0.0)) throw ValidationError("calories", "must be non-negative");
  if (query.sport == Sport::other) throw ValidationError("sport", "must be run, bike or mountain_bike");

  const Eigen::VectorXd user = embeddings.user(query.user_id);
  const Eigen::VectorXd route = embeddings.route_cluster(query.route_cluster);
  const auto R = static_cast<Eigen::Index>(layout.rank);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  v.segment(0, R) = user;
  v.segment(R, R) = route;
  v[static_cast<Eigen::Index>(layout.calories_slot())] = norm.normalize(feature::calories, query.calories);
  v[static_cast<Eigen::Index>(layout.sport_offset() + sport_index(query.sport))] = 1.0;
  if (layout.include_gender) v[static_cast<Eigen::Index>(layout.gender_slot())] = gender_code(query.gender);
  v[static_cast<Eigen::Index>(layout.route_distance_slot())] =
      norm.normalize(feature::route_distance, query.route_distance_km);
  return v.cwiseMax(-kContextClamp).cwiseMin(kContextClamp);
}

ContextQuery ContextBuilder::query(const WorkoutRecord& record) const {
  return ContextQuery{record.user_id, assign(*clusters_, record), record.sport,
                      record.calories, record.gender, record.route_distance()};
}

Eigen::VectorXd ContextBuilder::operator()(const ContextQuery& q) const {
  return assemble_context(*embeddings_, q, *norm_, layout_);
}

Eigen::MatrixXd ContextBuilder::contexts(std::span<const WorkoutRecord> records) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(layout_.size()), static_cast<Eigen::Index>(records.size()));
  for (std::size_t n = 0; n < records.size(); ++n) out.col(static_cast<Eigen::Index>(n)) = (*this)(records[n]);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_width(const nn::Mlp& mlp, Eigen::Index rows) {
  if (rows != mlp.in()) {
    throw DimensionError("context width " + std::to_string(rows) + " does not match model input " +
                         std::to_string(mlp.in()));
  }
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

double predict_distance(const DistanceModel& model, const Eigen::VectorXd& context) {
  return predict_distance(model, Eigen::MatrixXd(context))[0];
}

Eigen::VectorXd predict_distance(const DistanceModel& model, const Eigen::MatrixXd& contexts) {
  check_width(model.mlp, contexts.rows());
  Rng unused(0);
  const Eigen::MatrixXd y = nn::mlp_forward(model.mlp, contexts, 0.0, nn::Mode::eval, unused);
  Eigen::VectorXd out(y.cols());
  for (Eigen::Index n = 0; n < y.cols(); ++n) out[n] = model.norm.denormalize(feature::distance, y(0, n));
  return out;
}

std::vector<Eigen::MatrixXd> sequence_inputs(const SequenceModel& model, const Eigen::MatrixXd& contexts,
                                             std::span<const double> distance_km,
                                             std::span<const std::span<const double>> altitude,
                                             std::span<const std::span<const double>> distance) {
  const auto B = static_cast<std::size_t>(contexts.cols());
  if (distance_km.size() != B || altitude.size() != B || distance.size() != B || B == 0) {
    throw DimensionError("sequence inputs need one distance and one route per context");
  }
  const std::size_t L = altitude.front().size();
  for (std::size_t b = 0; b < B; ++b) {
    if (altitude[b].size() != L || distance[b].size() != L) {
      throw DimensionError("altitude and distance sequences must share one length");
    }
  }
  const Eigen::Index C = contexts.rows();
  if (C + 3 != model.net.input()) {
    throw DimensionError("context width " + std::to_string(C) + " does not match the sequence model");
  }
  std::vector<Eigen::MatrixXd> xs(L, Eigen::MatrixXd(C + 3, static_cast<Eigen::Index>(B)));
  for (std::size_t b = 0; b < B; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const double d = model.norm.normalize(feature::distance, distance_km[b]);
    for (std::size_t t = 0; t < L; ++t) {
      auto& x = xs[t];
      x.block(0, col, C, 1) = contexts.col(col);
      x(C, col) = d;
      x(C + 1, col) = model.norm.normalize(feature::altitude, altitude[b][t]);
      x(C + 2, col) = model.norm.normalize(feature::distance_seq, distance[b][t]);
    }
  }
  return xs;
}

SequencePrediction predict_sequences(const SequenceModel& model, const Eigen::VectorXd& context,
                                     double predicted_distance_km, std::span<const double> altitude,
                                     std::span<const double> distance) {
  if (altitude.size() != distance.size()) {
    throw DimensionError("altitude length " + std::to_string(altitude.size()) + " != distance length " +
                         std::to_string(distance.size()));
  }
  if (altitude.empty()) throw InsufficientDataError("route has no steps");
  const std::array<std::span<const double>, 1> alt{altitude}, dist{distance};
  const std::array<double, 1> km{predicted_distance_km};
  const auto xs = sequence_inputs(model, Eigen::MatrixXd(context), km, alt, dist);
  Rng unused(0);
  const nn::SequenceOutput out = nn::sequence_forward(model.net, xs, 0.0, nn::Mode::eval, unused);
  SequencePrediction p;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    p.speed.push_back(model.norm.denormalize(feature::speed, out.speed[t](0, 0)));
    p.heartrate.push_back(model.norm.denormalize(feature::heartrate, out.hr[t](0, 0)));
  }
  return p;
}

// ---------------------------------------------------------------------------

DistanceDataset make_distance_dataset(std::span<const WorkoutRecord> records, const ContextBuilder& builder) {
  DistanceDataset d;
  d.contexts = builder.contexts(records);
  d.target_km.resize(static_cast<Eigen::Index>(records.size()));
  for (std::size_t n = 0; n < records.size(); ++n) d.target_km[static_cast<Eigen::Index>(n)] = records[n].target_distance();
  return d;
}

SequenceDataset make_sequence_dataset(std::span<const WorkoutRecord> records, const ContextBuilder& builder,
                                      const DistanceModel* distance_model) {
  SequenceDataset d;
  d.contexts = builder.contexts(records);
  if (distance_model) {
    d.distance_km = predict_distance(*distance_model, d.contexts);
  } else {
    d.distance_km.resize(static_cast<Eigen::Index>(records.size()));
    for (std::size_t n = 0; n < records.size(); ++n) d.distance_km[static_cast<Eigen::Index>(n)] = records[n].target_distance();
  }
  for (const auto& r : records) {
    d.altitude.push_back(r.altitude);
    d.distance.push_back(r.distance);
    d.speed.push_back(r.speed);
    d.heartrate.push_back(r.heartrate);
  }
  return d;
}

namespace {

Rng chunk_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::size_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch),
                    static_cast<std::uint32_t>(chunk)};
  return Rng(seq);
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

template <typename Indexable>
std::vector<std::vector<std::size_t>> split_chunks(const Indexable& batch, std::size_t chunk) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < batch.size(); s += chunk) {
    out.emplace_back(batch.begin() + static_cast<std::ptrdiff_t>(s),
                     batch.begin() + static_cast<std::ptrdiff_t>(std::min(batch.size(), s + chunk)));
  }
  return out;
}

void check_config(const TrainingConfig& c) {
  if (c.chunk == 0) throw ValidationError("chunk", "must be positive");
  if (c.distance_batch == 0 || c.sequence_batch == 0) throw ValidationError("batch", "must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ValidationError("dropout", "must be in [0, 1)");
}

struct MlpChunk {
  nn::Mlp grads;
  double loss = 0.0;
};

double distance_loss(const nn::Mlp& mlp, const DistanceDataset& data, const NormStats& norm) {
  Rng unused(0);
  const Eigen::MatrixXd y = nn::mlp_forward(mlp, data.contexts, 0.0, nn::Mode::eval, unused);
  double s = 0.0;
  for (Eigen::Index n = 0; n < y.cols(); ++n) {
    const double d = y(0, n) - norm.normalize(feature::distance, data.target_km[n]);
    s += d * d;
  }
  return s / static_cast<double>(y.cols());
}

}  // namespace

std::pair<DistanceModel, TrainingCurve> train_distance(const DistanceDataset& train, const DistanceDataset& validation,
                                                       const NormStats& norm, const ContextLayout& layout,
                                                       const TrainingConfig& config) {
  check_config(config);
  if (train.size() == 0) throw InsufficientDataError("distance model needs training records");
  if (train.contexts.cols() != static_cast<Eigen::Index>(train.size()) ||
      (validation.size() > 0 && validation.contexts.rows() != train.contexts.rows())) {
    throw DimensionError("distance dataset shapes are inconsistent");
  }

  Rng rng(config.seed);
  std::vector<Eigen::Index> sizes{train.contexts.rows()};
  sizes.insert(sizes.end(), config.distance_hidden.begin(), config.distance_hidden.end());
  sizes.push_back(1);
  DistanceModel model{nn::Mlp::init(sizes, rng), norm, layout, config.seed};

  Eigen::VectorXd y(train.target_km.size());
  for (Eigen::Index n = 0; n < y.size(); ++n) y[n] = norm.normalize(feature::distance, train.target_km[n]);
  model.mlp.layers.back().b.setConstant(logit(std::clamp(y.mean(), 1e-3, 1.0 - 1e-3)));

  nn::Optimizer opt(nn::OptimizerConfig::adam(config.distance_lr, config.distance_weight_decay));
  TrainingCurve curve;
  nn::Mlp best = model.mlp;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.distance_epochs; ++epoch) {
    const auto order = shuffled(train.size(), rng);
    double epoch_loss = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += config.distance_batch, ++batch_id) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.distance_batch)));
      const auto chunks = split_chunks(batch, config.chunk);
      const double scale = 1.0 / static_cast<double>(batch.size());
      const nn::Mlp& mlp = model.mlp;
      auto results = kernels::map_chunks<MlpChunk>(chunks.size(), [&](std::size_t c) {
        const auto& ids = chunks[c];
        Eigen::MatrixXd x(train.contexts.rows(), static_cast<Eigen::Index>(ids.size()));
        Eigen::MatrixXd target(1, static_cast<Eigen::Index>(ids.size()));
        for (std::size_t k = 0; k < ids.size(); ++k) {
          x.col(static_cast<Eigen::Index>(k)) = train.contexts.col(static_cast<Eigen::Index>(ids[k]));
          target(0, static_cast<Eigen::Index>(k)) = y[static_cast<Eigen::Index>(ids[k])];
        }
        Rng local = chunk_rng(config.seed, epoch, batch_id, c);
        nn::MlpCache cache;
        const Eigen::MatrixXd pred = nn::mlp_forward(mlp, x, config.dropout, nn::Mode::train, local, &cache);
        const Eigen::MatrixXd diff = pred - target;
        MlpChunk out;
        out.loss = diff.squaredNorm();
        out.grads = nn::mlp_backward(mlp, cache, (2.0 * scale) * diff).params;
        return out;
      });
      nn::Mlp total = std::move(results.front().grads);
      double loss = results.front().loss;
      for (std::size_t c = 1; c < results.size(); ++c) {
        nn::accumulate(total.params(), nn::as_const(results[c].grads.params()));
        loss += results[c].loss;
      }
      epoch_loss += loss;
      opt.step(model.mlp.params(), nn::as_const(total.params()));
    }
    curve.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    const double val = validation.size() > 0 ? distance_loss(model.mlp, validation, norm) : curve.train_loss.back();
    curve.validation_loss.push_back(val);
    if (config.verbose) {
      std::cerr << "distance epoch " << epoch << " train " << curve.train_loss.back() << " val " << val << '\n';
    }
    if (val < best_loss) {
      best_loss = val;
      best = model.mlp;
      curve.best_epoch = epoch;
      since_best = 0;
    } else if (validation.size() > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  model.mlp = best;
  return {std::move(model), std::move(curve)};
}

// ---------------------------------------------------------------------------

namespace {

struct SeqChunk {
  nn::SequenceNet grads;
  double loss = 0.0;
};

std::vector<Eigen::MatrixXd> gather_inputs(const SequenceModel& model, const SequenceDataset& data,
                                           const std::vector<std::size_t>& ids) {
  Eigen::MatrixXd ctx(data.contexts.rows(), static_cast<Eigen::Index>(ids.size()));
  std::vector<double> km;
  std::vector<std::span<const double>> alt, dist;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    ctx.col(static_cast<Eigen::Index>(k)) = data.contexts.col(static_cast<Eigen::Index>(ids[k]));
    km.push_back(data.distance_km[static_cast<Eigen::Index>(ids[k])]);
    alt.emplace_back(data.altitude[ids[k]]);
    dist.emplace_back(data.distance[ids[k]]);
  }
  return sequence_inputs(model, ctx, km, alt, dist);
}

// Sum over steps and samples of squared normalized errors for both heads;
// fills upstream gradients scaled by `scale` when asked.
double sequence_sq_error(const SequenceModel& model, const SequenceDataset& data, const std::vector<std::size_t>& ids,
                         const nn::SequenceOutput& out, double scale, std::vector<Eigen::MatrixXd>* d_speed,
                         std::vector<Eigen::MatrixXd>* d_hr) {
  const std::size_t L = out.speed.size();
  if (d_speed) {
    d_speed->assign(L, Eigen::MatrixXd(1, static_cast<Eigen::Index>(ids.size())));
    d_hr->assign(L, Eigen::MatrixXd(1, static_cast<Eigen::Index>(ids.size())));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    for (std::size_t t = 0; t < L; ++t) {
      const double es = out.speed[t](0, col) - model.norm.normalize(feature::speed, data.speed[ids[k]][t]);
      const double eh = out.hr[t](0, col) - model.norm.normalize(feature::heartrate, data.heartrate[ids[k]][t]);
      s += es * es + eh * eh;
      if (d_speed) {
        (*d_speed)[t](0, col) = 2.0 * scale * es;
        (*d_hr)[t](0, col) = 2.0 * scale * eh;
      }
    }
  }
  return s;
}

// Batches never mix sequence lengths.
std::vector<std::vector<std::size_t>> length_batches(const SequenceDataset& data, std::size_t batch, Rng& rng) {
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t n : shuffled(data.size(), rng)) by_length[data.altitude[n].size()].push_back(n);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [len, ids] : by_length) {
    for (std::size_t s = 0; s < ids.size(); s += batch) {
      out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                       ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), s + batch)));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

double sequence_loss(const SequenceModel& model, const SequenceDataset& data, std::size_t chunk) {
  Rng order(0);
  const auto batches = length_batches(data, chunk, order);
  const auto losses = kernels::map_chunks<std::pair<double, double>>(batches.size(), [&](std::size_t b) {
    const auto xs = gather_inputs(model, data, batches[b]);
    Rng unused(0);
    const auto out = nn::sequence_forward(model.net, xs, 0.0, nn::Mode::eval, unused);
    return std::pair{sequence_sq_error(model, data, batches[b], out, 0.0, nullptr, nullptr),
                     static_cast<double>(xs.size() * batches[b].size())};
  });
  double s = 0.0, n = 0.0;
  for (const auto& [l, c] : losses) {
    s += l;
    n += c;
  }
  return s / n;
}

void check_sequence_data(const SequenceDataset& d, Eigen::Index width) {
  const std::size_t n = d.size();
  if (d.contexts.cols() != static_cast<Eigen::Index>(n) || d.distance_km.size() != static_cast<Eigen::Index>(n) ||
      d.distance.size() != n || d.speed.size() != n || d.heartrate.size() != n ||
      (n > 0 && d.contexts.rows() != width)) {
    throw DimensionError("sequence dataset shapes are inconsistent");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t L = d.altitude[i].size();
    if (L == 0 || d.distance[i].size() != L || d.speed[i].size() != L || d.heartrate[i].size() != L) {
      throw DimensionError("sequence dataset record " + std::to_string(i) + " has misaligned sequences");
    }
  }
}

}  // namespace

std::pair<SequenceModel, TrainingCurve> train_sequence(const SequenceDataset& train, const SequenceDataset& validation,
                                                       const NormStats& norm, const ContextLayout& layout,
                                                       const TrainingConfig& config) {
  check_config(config);
  if (train.size() == 0) throw InsufficientDataError("sequence model needs training records");
  check_sequence_data(train, train.contexts.rows());
  check_sequence_data(validation, train.contexts.rows());

  Rng rng(config.seed);
  SequenceModel model{nn::SequenceNet::init(train.contexts.rows() + 3, config.hidden1, config.hidden2, rng), norm,
                      layout, config.seed};
  {
    double ms = 0.0, mh = 0.0, count = 0.0;
    for (std::size_t n = 0; n < train.size(); ++n) {
      for (std::size_t t = 0; t < train.speed[n].size(); ++t) {
        ms += norm.normalize(feature::speed, train.speed[n][t]);
        mh += norm.normalize(feature::heartrate, train.heartrate[n][t]);
        count += 1.0;
      }
    }
    // SELU is lambda * x on the positive side.
    model.net.speed_head.b.setConstant(std::max(0.0, ms / count) / nn::kSeluLambda);
    model.net.hr_head.b.setConstant(std::max(0.0, mh / count) / nn::kSeluLambda);
  }

  nn::Optimizer opt(nn::OptimizerConfig::adagrad(config.sequence_lr));
  TrainingCurve curve;
  nn::SequenceNet best = model.net;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.sequence_epochs; ++epoch) {
    const auto batches = length_batches(train, config.sequence_batch, rng);
    double epoch_loss = 0.0, epoch_terms = 0.0;
    for (std::size_t batch_id = 0; batch_id < batches.size(); ++batch_id) {
      const auto chunks = split_chunks(batches[batch_id], config.chunk);
      const std::size_t L = train.altitude[batches[batch_id].front()].size();
      const double scale = 1.0 / static_cast<double>(L * batches[batch_id].size());
      const SequenceModel& m = model;
      auto results = kernels::map_chunks<SeqChunk>(chunks.size(), [&](std::size_t c) {
        const auto xs = gather_inputs(m, train, chunks[c]);
        Rng local = chunk_rng(config.seed, epoch, batch_id, c);
        nn::SequenceCache cache;
        const auto out = nn::sequence_forward(m.net, xs, config.dropout, nn::Mode::train, local, &cache);
        std::vector<Eigen::MatrixXd> ds, dh;
        SeqChunk r;
        r.loss = sequence_sq_error(m, train, chunks[c], out, scale, &ds, &dh);
        r.grads = nn::sequence_backward(m.net, cache, ds, dh).params;
        return r;
      });
      nn::SequenceNet total = std::move(results.front().grads);
      double loss = results.front().loss;
      for (std::size_t c = 1; c < results.size(); ++c) {
        nn::accumulate(total.params(), nn::as_const(results[c].grads.params()));
        loss += results[c].loss;
      }
      epoch_loss += loss;
      epoch_terms += static_cast<double>(L * batches[batch_id].size());
      opt.step(model.net.params(), nn::as_const(total.params()));
    }
    curve.train_loss.push_back(epoch_loss / epoch_terms);
    const double val = validation.size() > 0 ? sequence_loss(model, validation, config.chunk) : curve.train_loss.back();
    curve.validation_loss.push_back(val);
    if (config.verbose) {
      std::cerr << "sequence epoch " << epoch << " train " << curve.train_loss.back() << " val " << val << '\n';
    }
    if (val < best_loss) {
      best_loss = val;
      best = model.net;
      curve.best_epoch = epoch;
      since_best = 0;
    } else if (validation.size() > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  model.net = best;
  return {std::move(model), std::move(curve)};
}

// ---------------------------------------------------------------------------

double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size()) throw DimensionError("rmse: prediction and truth counts differ");
  if (predictions.empty()) throw InsufficientDataError("rmse of an empty set");
  double s = 0.0;
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    const double d = predictions[n] - truths[n];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

double mae_seq(const std::vector<std::vector<double>>& predictions, const std::vector<std::vector<double>>& truths) {
  if (predictions.size() != truths.size()) throw DimensionError("mae_seq: record counts differ");
  if (predictions.empty()) throw InsufficientDataError("mae_seq of an empty set");
  double total = 0.0;
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    const auto& p = predictions[n];
    const auto& t = truths[n];
    if (p.size() != t.size()) throw DimensionError("mae_seq: record " + std::to_string(n) + " lengths differ");
    if (p.empty()) throw InsufficientDataError("mae_seq: record " + std::to_string(n) + " is empty");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
    total += s / static_cast<double>(p.size());
  }
  return total / static_cast<double>(predictions.size());
}

double ModelPredictor::distance_km(const WorkoutRecord& record) const {
  return predict_distance(*distance_, (*builder_)(record));
}

SequencePrediction ModelPredictor::sequences(const WorkoutRecord& record, double predicted_distance_km) const {
  return predict_sequences(*sequence_, (*builder_)(record), predicted_distance_km, record.altitude, record.distance);
}

MeanBaseline::MeanBaseline(std::span<const WorkoutRecord> train) {
  if (train.empty()) throw InsufficientDataError("baseline needs training records");
  std::vector<double> count;
  for (const auto& r : train) {
    distance_ += r.target_distance();
    if (r.length() > speed_.size()) {
      speed_.resize(r.length(), 0.0);
      heartrate_.resize(r.length(), 0.0);
      count.resize(r.length(), 0.0);
    }
    for (std::size_t t = 0; t < r.length(); ++t) {
      speed_[t] += r.speed[t];
      heartrate_[t] += r.heartrate[t];
      count[t] += 1.0;
    }
  }
  distance_ /= static_cast<double>(train.size());
  for (std::size_t t = 0; t < count.size(); ++t) {
    speed_[t] /= count[t];
    heartrate_[t] /= count[t];
  }
}

double MeanBaseline::distance_km(const WorkoutRecord&) const { return distance_; }

SequencePrediction MeanBaseline::sequences(const WorkoutRecord& record, double) const {
  SequencePrediction p;
  for (std::size_t t = 0; t < record.length(); ++t) {
    const std::size_t k = std::min(t, speed_.size() - 1);
    p.speed.push_back(speed_[k]);
    p.heartrate.push_back(heartrate_[k]);
  }
  return p;
}

EvalReport evaluate(const WorkoutPredictor& predictor, std::span<const WorkoutRecord> test) {
  if (test.empty()) throw InsufficientDataError("evaluation needs test records");
  struct One {
    double distance = 0.0;
    SequencePrediction seq;
  };
  const auto results = kernels::map_chunks<One>(test.size(), [&](std::size_t n) {
    One o;
    o.distance = predictor.distance_km(test[n]);
    o.seq = predictor.sequences(test[n], o.distance);
    return o;
  });
  std::vector<double> dp, dt;
  std::vector<std::vector<double>> sp, st, hp, ht;
  for (std::size_t n = 0; n < test.size(); ++n) {
    dp.push_back(results[n].distance);
    dt.push_back(test[n].target_distance());
    sp.push_back(results[n].seq.speed);
    st.push_back(test[n].speed);
    hp.push_back(results[n].seq.heartrate);
    ht.push_back(test[n].heartrate);
  }
  EvalReport report;
  report.distance_rmse = rmse(dp, dt);
  report.speed_mae = mae_seq(sp, st);
  report.heartrate_mae = mae_seq(hp, ht);
  report.n_test = test.size();
  return report;
}

}  // namespace fitforge
