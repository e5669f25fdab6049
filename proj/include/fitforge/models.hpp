#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fitforge/cp_tensor.hpp"
#include "fitforge/neural.hpp"
#include "fitforge/route_cluster.hpp"
#include "fitforge/workout.hpp"

namespace fitforge {

// ---------------------------------------------------------------------------
// Context vector
//
// [user embedding (R) | route-cluster embedding (R) | calories | run bike mtb |
//  gender (optional) | route distance]
// Scalars are min-max normalized with training statistics and every entry is
// clamped to [-10, 10].

inline constexpr double kContextClamp = 10.0;

struct ContextLayout {
  std::size_t rank = 0;
  bool include_gender = true;

  std::size_t size() const { return 2 * rank + 5 + (include_gender ? 1 : 0); }
  std::size_t user_offset() const { return 0; }
  std::size_t route_offset() const { return rank; }
  std::size_t calories_slot() const { return 2 * rank; }
  std::size_t sport_offset() const { return 2 * rank + 1; }
  std::size_t gender_slot() const;  // DimensionError when gender is excluded
  std::size_t route_distance_slot() const { return size() - 1; }
  std::vector<std::string> names() const;
  bool operator==(const ContextLayout&) const = default;
};

struct ContextQuery {
  std::string user_id;
  std::size_t route_cluster = 0;
  Sport sport = Sport::run;
  double calories = 0.0;
  Gender gender = Gender::unknown;
  double route_distance_km = 0.0;
};

// Throws NotFoundError for unknown users or clusters, ValidationError for
// negative calories or a sport outside run/bike/mountain_bike.
Eigen::VectorXd assemble_context(const Embeddings& embeddings, const ContextQuery& query, const NormStats& norm,
                                 const ContextLayout& layout);

// Resolves records to route clusters and assembles their contexts.
// Holds references; the arguments must outlive it.
class ContextBuilder {
 public:
  ContextBuilder(const Embeddings& embeddings, const ClusterModel& clusters, const NormStats& norm,
                 ContextLayout layout)
      : embeddings_(&embeddings), clusters_(&clusters), norm_(&norm), layout_(layout) {}

  ContextQuery query(const WorkoutRecord& record) const;
  Eigen::VectorXd operator()(const ContextQuery& query) const;
  Eigen::VectorXd operator()(const WorkoutRecord& record) const { return (*this)(query(record)); }
  // One column per record.
  Eigen::MatrixXd contexts(std::span<const WorkoutRecord> records) const;
  const ContextLayout& layout() const { return layout_; }
  const NormStats& norm() const { return *norm_; }

 private:
  const Embeddings* embeddings_;
  const ClusterModel* clusters_;
  const NormStats* norm_;
  ContextLayout layout_;
};

// ---------------------------------------------------------------------------
// Models

struct DistanceModel {
  nn::Mlp mlp;
  NormStats norm;
  ContextLayout layout;
  std::uint64_t seed = 0;
};

struct SequenceModel {
  nn::SequenceNet net;
  NormStats norm;
  ContextLayout layout;
  std::uint64_t seed = 0;
};

struct SequencePrediction {
  std::vector<double> speed;      // km/h
  std::vector<double> heartrate;  // bpm
};

// Denormalized sigmoid output; always inside the training distance range.
// Throws DimensionError when the context width does not match the network.
double predict_distance(const DistanceModel& model, const Eigen::VectorXd& context);
Eigen::VectorXd predict_distance(const DistanceModel& model, const Eigen::MatrixXd& contexts);

// Per-step input [context; predicted distance; altitude_t; distance_t], all normalized.
std::vector<Eigen::MatrixXd> sequence_inputs(const SequenceModel& model, const Eigen::MatrixXd& contexts,
                                             std::span<const double> distance_km,
                                             std::span<const std::span<const double>> altitude,
                                             std::span<const std::span<const double>> distance);

SequencePrediction predict_sequences(const SequenceModel& model, const Eigen::VectorXd& context,
                                     double predicted_distance_km, std::span<const double> altitude,
                                     std::span<const double> distance);

// ---------------------------------------------------------------------------
// Training

struct TrainingConfig {
  // distance model
  std::vector<Eigen::Index> distance_hidden{64};
  double distance_lr = 1e-3;
  double distance_weight_decay = 1e-7;
  std::size_t distance_epochs = 300;
  std::size_t distance_batch = 32;
  // sequence model
  Eigen::Index hidden1 = 128;
  Eigen::Index hidden2 = 64;
  double sequence_lr = 5e-3;
  std::size_t sequence_epochs = 30;
  std::size_t sequence_batch = 16;
  // shared
  double dropout = 0.2;
  std::size_t patience = 10;  // epochs without validation improvement
  // Gradients of a batch are computed in chunks of this many samples, in
  // parallel, and summed in chunk order.
  std::size_t chunk = 8;
  std::uint64_t seed = 0;
  bool verbose = false;
};

struct TrainingCurve {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // index into the curves of the kept parameters
};

struct DistanceDataset {
  Eigen::MatrixXd contexts;  // layout.size() x N
  Eigen::VectorXd target_km;
  std::size_t size() const { return static_cast<std::size_t>(target_km.size()); }
};

struct SequenceDataset {
  Eigen::MatrixXd contexts;
  Eigen::VectorXd distance_km;  // distance fed to the network, usually the distance model's prediction
  std::vector<std::vector<double>> altitude, distance, speed, heartrate;
  std::size_t size() const { return altitude.size(); }
};

DistanceDataset make_distance_dataset(std::span<const WorkoutRecord> records, const ContextBuilder& builder);
// Uses `distance_model` for the distance input when given, the ground truth otherwise.
SequenceDataset make_sequence_dataset(std::span<const WorkoutRecord> records, const ContextBuilder& builder,
                                      const DistanceModel* distance_model);

// MSE on the normalized target, Adam with decoupled weight decay, early
// stopping on validation loss. An empty validation set disables early stopping.
std::pair<DistanceModel, TrainingCurve> train_distance(const DistanceDataset& train, const DistanceDataset& validation,
                                                       const NormStats& norm, const ContextLayout& layout,
                                                       const TrainingConfig& config);

// MSE(speed) + MSE(heart rate) on normalized targets, Adagrad, full BPTT.
std::pair<SequenceModel, TrainingCurve> train_sequence(const SequenceDataset& train, const SequenceDataset& validation,
                                                       const NormStats& norm, const ContextLayout& layout,
                                                       const TrainingConfig& config);

// ---------------------------------------------------------------------------
// Metrics and evaluation

double rmse(std::span<const double> predictions, std::span<const double> truths);
// Mean over records of the per-record mean absolute error over steps.
double mae_seq(const std::vector<std::vector<double>>& predictions, const std::vector<std::vector<double>>& truths);

class WorkoutPredictor {
 public:
  virtual ~WorkoutPredictor() = default;
  virtual double distance_km(const WorkoutRecord& record) const = 0;
  virtual SequencePrediction sequences(const WorkoutRecord& record, double predicted_distance_km) const = 0;
};

// Distance model feeding the sequence model, as deployed.
class ModelPredictor : public WorkoutPredictor {
 public:
  ModelPredictor(const DistanceModel& distance, const SequenceModel& sequence, const ContextBuilder& builder)
      : distance_(&distance), sequence_(&sequence), builder_(&builder) {}
  double distance_km(const WorkoutRecord& record) const override;
  SequencePrediction sequences(const WorkoutRecord& record, double predicted_distance_km) const override;

 private:
  const DistanceModel* distance_;
  const SequenceModel* sequence_;
  const ContextBuilder* builder_;
};

// Training-mean distance and per-step mean speed and heart rate.
class MeanBaseline : public WorkoutPredictor {
 public:
  explicit MeanBaseline(std::span<const WorkoutRecord> train);
  double distance_km(const WorkoutRecord& record) const override;
  SequencePrediction sequences(const WorkoutRecord& record, double predicted_distance_km) const override;

 private:
  double distance_ = 0.0;
  std::vector<double> speed_, heartrate_;
};

struct EvalReport {
  double distance_rmse = 0.0;  // km
  double speed_mae = 0.0;      // km/h
  double heartrate_mae = 0.0;  // bpm
  std::size_t n_test = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
};

// Sequence predictions use the predicted distance, never the ground truth.
EvalReport evaluate(const WorkoutPredictor& predictor, std::span<const WorkoutRecord> test);

}  // namespace fitforge
