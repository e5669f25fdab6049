#include "fitforge/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>

#include "fitforge/errors.hpp"

namespace fitforge {

PreparedData prepare(std::span<const WorkoutRecord> raw, const PipelineConfig& config) {
  PreparedData d;
  auto [retained, report] = clean(raw, config.cleaning);
  d.retained = std::move(retained);
  d.cleaning = std::move(report);
  d.split = split_records(d.retained, config.ratios, config.split_seed);
  d.train = select(d.retained, d.split.train);
  d.validation = select(d.retained, d.split.validation);
  d.test = select(d.retained, d.split.test);

  if (config.augment) {
    Rng rng(config.augment_seed);
    for (const auto& r : d.train) {
      if (r.length() >= 2 && is_loop(r)) d.augmented.push_back(augment_route(r, config.augment_range, rng));
    }
  }
  std::vector<WorkoutRecord> stats_input = d.train;
  stats_input.insert(stats_input.end(), d.augmented.begin(), d.augmented.end());
  d.norm = compute_norm_stats(stats_input);
  return d;
}

ClusterModel fit_route_clusters(std::span<const WorkoutRecord> records, std::size_t k, std::size_t resample_points,
                                std::uint64_t seed) {
  std::vector<RouteSignature> sigs;
  sigs.reserve(records.size());
  for (const auto& r : records) sigs.push_back(route_signature(r, resample_points));
  return kmeans_fit(sigs, k, seed);
}

Decomposition decompose(std::span<const WorkoutRecord> train, const ClusterModel& clusters,
                        const PipelineConfig& config) {
  if (config.rank_min == 0 || config.rank_max < config.rank_min) {
    throw ValidationError("rank_range", "need 1 <= rank_min <= rank_max");
  }
  Decomposition d;
  d.tensor = build_context_tensor(train, clusters, config.context);
  std::vector<std::size_t> ranks(config.rank_max - config.rank_min + 1);
  std::iota(ranks.begin(), ranks.end(), config.rank_min);
  d.report = rank_sweep(d.tensor.values, ranks, config.cp);
  d.embeddings = Embeddings::from(d.tensor, d.report.selected_factors());
  return d;
}

PipelineResult run_pipeline(std::span<const WorkoutRecord> raw, const PipelineConfig& config) {
  PipelineResult res;
  auto log = [&](const std::string& msg) {
    if (config.verbose) std::cerr << msg << '\n';
  };
  res.data = prepare(raw, config);
  log("prepared: " + std::to_string(res.data.train.size()) + " train, " + std::to_string(res.data.validation.size()) +
      " validation, " + std::to_string(res.data.test.size()) + " test, " + std::to_string(res.data.augmented.size()) +
      " augmented");

  res.clusters = fit_route_clusters(res.data.train, config.clusters, config.resample_points, config.cluster_seed);
  res.decomposition = decompose(res.data.train, res.clusters, config);
  log("rank sweep selected rank " + std::to_string(res.decomposition.report.selected_rank));

  res.layout = ContextLayout{res.decomposition.embeddings.rank(), config.context.include_gender};
  const ContextBuilder builder(res.decomposition.embeddings, res.clusters, res.data.norm, res.layout);

  std::vector<WorkoutRecord> distance_train = res.data.train;
  distance_train.insert(distance_train.end(), res.data.augmented.begin(), res.data.augmented.end());
  TrainingConfig tc = config.training;
  tc.verbose = tc.verbose || config.verbose;
  auto [dm, dcurve] = train_distance(make_distance_dataset(distance_train, builder),
                                     make_distance_dataset(res.data.validation, builder), res.data.norm, res.layout, tc);
  res.distance = std::move(dm);
  res.distance_curve = std::move(dcurve);

  auto [sm, scurve] =
      train_sequence(make_sequence_dataset(res.data.train, builder, &res.distance),
                     make_sequence_dataset(res.data.validation, builder, &res.distance), res.data.norm, res.layout, tc);
  res.sequence = std::move(sm);
  res.sequence_curve = std::move(scurve);

  const ModelPredictor predictor(res.distance, res.sequence, builder);
  res.model_report = evaluate(predictor, res.data.test);
  res.baseline_report = evaluate(MeanBaseline(res.data.train), res.data.test);
  for (EvalReport* r : {&res.model_report, &res.baseline_report}) {
    r->n_train = res.data.train.size();
    r->n_validation = res.data.validation.size();
  }
  return res;
}

Bundle make_bundle(const PipelineResult& result, const PipelineConfig& config) {
  Bundle b;
  b.layout = result.layout;
  b.norm = result.data.norm;
  b.clusters = result.clusters;
  b.factors = result.decomposition.report.selected_factors();
  b.embeddings = result.decomposition.embeddings;
  b.distance = result.distance;
  b.sequence = result.sequence;
  b.rank_sweep = result.decomposition.report.entries;

  std::map<std::size_t, std::size_t> lengths;
  for (const auto& r : result.data.retained) {
    b.routes.push_back(RouteEntry{r.workout_id, assign(result.clusters, r), r.altitude, r.distance});
    b.user_gender.emplace(r.user_id, r.gender);
    ++lengths[r.length()];
  }
  b.sequence_length = std::max_element(lengths.begin(), lengths.end(), [](const auto& x, const auto& y) {
                        return x.second < y.second;
                      })->first;
  b.index_routes();

  const TrainingConfig& t = config.training;
  b.hyperparameters = {
      {"distance_hidden", t.distance_hidden},
      {"distance_lr", t.distance_lr},
      {"distance_weight_decay", t.distance_weight_decay},
      {"distance_epochs", t.distance_epochs},
      {"distance_batch", t.distance_batch},
      {"hidden1", t.hidden1},
      {"hidden2", t.hidden2},
      {"sequence_lr", t.sequence_lr},
      {"sequence_epochs", t.sequence_epochs},
      {"sequence_batch", t.sequence_batch},
      {"dropout", t.dropout},
      {"patience", t.patience},
      {"chunk", t.chunk},
      {"training_seed", t.seed},
      {"split_seed", config.split_seed},
      {"augment_seed", config.augment_seed},
      {"cluster_seed", config.cluster_seed},
      {"cp_seed", config.cp.seed},
      {"clusters", config.clusters},
      {"rank_min", config.rank_min},
      {"rank_max", config.rank_max},
      {"selected_rank", result.decomposition.report.selected_rank},
  };
  return b;
}

}  // namespace fitforge
