#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fitforge/bundle.hpp"
#include "fitforge/cp_tensor.hpp"
#include "fitforge/models.hpp"
#include "fitforge/route_cluster.hpp"
#include "fitforge/workout.hpp"

namespace fitforge {

struct PipelineConfig {
  CleaningRules cleaning;
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 0;

  // Extended copies of training loop routes are added for the distance model only.
  bool augment = true;
  std::pair<double, double> augment_range{0.1, 0.5};
  std::uint64_t augment_seed = 0;

  std::size_t clusters = kDefaultRouteClusters;
  std::size_t resample_points = kDefaultResamplePoints;
  std::uint64_t cluster_seed = 0;

  std::size_t rank_min = 2;
  std::size_t rank_max = 20;
  CpAlsOptions cp;
  ContextSpec context;

  TrainingConfig training;
  bool verbose = false;
};

// Cleaned records split three ways, plus the augmented training copies.
struct PreparedData {
  std::vector<WorkoutRecord> retained;  // every record that survived cleaning
  CleaningReport cleaning;
  DatasetSplit split;
  std::vector<WorkoutRecord> train, validation, test;
  std::vector<WorkoutRecord> augmented;  // extended copies of training loops
  NormStats norm;                        // from train + augmented
};

PreparedData prepare(std::span<const WorkoutRecord> raw, const PipelineConfig& config);

// Signatures of `records`, then k-means.
ClusterModel fit_route_clusters(std::span<const WorkoutRecord> records, std::size_t k, std::size_t resample_points,
                                std::uint64_t seed);

struct Decomposition {
  ContextTensor tensor;
  CoreConsistencyReport report;
  Embeddings embeddings;
};

Decomposition decompose(std::span<const WorkoutRecord> train, const ClusterModel& clusters,
                        const PipelineConfig& config);

struct PipelineResult {
  PreparedData data;
  ClusterModel clusters;
  Decomposition decomposition;
  ContextLayout layout;
  DistanceModel distance;
  SequenceModel sequence;
  TrainingCurve distance_curve;
  TrainingCurve sequence_curve;
  EvalReport model_report;
  EvalReport baseline_report;
};

// clean -> split -> augment -> cluster -> tensor -> rank sweep -> train both models -> evaluate.
PipelineResult run_pipeline(std::span<const WorkoutRecord> raw, const PipelineConfig& config);

// Route catalog: every retained record, resolved to its cluster.
Bundle make_bundle(const PipelineResult& result, const PipelineConfig& config);

}  // namespace fitforge
