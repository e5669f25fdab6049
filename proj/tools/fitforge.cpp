// fitforge command line: data preparation, staged training, evaluation,
// recommendation and the HTTP service.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fitforge/bundle.hpp"
#include "fitforge/errors.hpp"
#include "fitforge/pipeline.hpp"
#include "fitforge/service.hpp"
#include "fitforge/synthetic.hpp"

using namespace fitforge;
using json = nlohmann::ordered_json;

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("calories", "not a number: " + item);
    }
  }
  return out;
}

void print_report(const char* label, const EvalReport& r) {
  std::cout << label << ": distance_rmse_km=" << r.distance_rmse << " speed_mae_kmh=" << r.speed_mae
            << " heartrate_mae_bpm=" << r.heartrate_mae << " n_test=" << r.n_test << '\n';
}

void write_rank_report(const std::string& path, const std::vector<RankDiagnostic>& entries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "rank,cc,relative_fit\n" << std::setprecision(10);
  for (const auto& e : entries) out << e.rank << ',' << e.core_consistency << ',' << e.relative_fit << '\n';
}

void write_embeddings(const std::string& path, const Embeddings& emb) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << std::setprecision(10);
  for (std::size_t u = 0; u < emb.users.size(); ++u) {
    out << "user\t" << emb.users.ids[u];
    for (Eigen::Index r = 0; r < emb.user_factors.cols(); ++r) out << '\t' << emb.user_factors(static_cast<Eigen::Index>(u), r);
    out << '\n';
  }
  for (Eigen::Index c = 0; c < emb.route_factors.rows(); ++c) {
    out << "route_cluster\t" << c;
    for (Eigen::Index r = 0; r < emb.route_factors.cols(); ++r) out << '\t' << emb.route_factors(c, r);
    out << '\n';
  }
}

struct Stage {
  ClusterModel clusters;
  CpFactors factors;
  Embeddings embeddings;
  ContextLayout layout;
};

Stage load_stage(const std::string& clusters_path, const std::string& factors_path) {
  Stage s;
  s.clusters = get_clusters(read_container(clusters_path));
  const Container fc = read_container(factors_path);
  auto [factors, users] = get_factors(fc);
  s.factors = std::move(factors);
  s.embeddings = Embeddings{std::move(users), s.factors.a, s.factors.b};
  s.layout = ContextLayout{s.factors.rank, fc.manifest.value("include_gender", true)};
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fitforge: personalized workout recommendation from context tensors and recurrent models"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic workouts");
  synthetic::SyntheticConfig sc;
  std::string synth_out;
  synth->add_option("--users", sc.n_users, "Number of users")->capture_default_str();
  synth->add_option("--routes", sc.n_routes, "Number of routes")->capture_default_str();
  synth->add_option("--per-user", sc.workouts_per_user, "Workouts per user")->capture_default_str();
  synth->add_option("--length", sc.sequence_length, "Steps per workout")->capture_default_str();
  synth->add_option("--noise", sc.noise_scale, "Noise scale")->capture_default_str();
  synth->add_option("--seed", sc.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output records file")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and validate raw records");
  std::string ingest_in, ingest_out;
  ingest->add_option("--in", ingest_in, "Line-delimited JSON records")->required();
  ingest->add_option("--out", ingest_out, "Re-serialized records");

  // clean
  auto* clean_cmd = app.add_subcommand("clean", "Drop abnormal records");
  std::string clean_in, clean_out, clean_report;
  std::optional<double> max_speed;
  CleaningRules rules;
  clean_cmd->add_option("--in", clean_in)->required();
  clean_cmd->add_option("--out", clean_out)->required();
  clean_cmd->add_option("--max-speed", max_speed, "Speed cap in km/h for every sport");
  clean_cmd->add_option("--max-alt", rules.max_mean_altitude, "Mean altitude cap in m")->capture_default_str();
  clean_cmd->add_option("--min-length", rules.min_length, "Minimum number of steps")->capture_default_str();
  clean_cmd->add_option("--report", clean_report, "CSV of removed workouts and the rule that removed them");

  // split
  auto* split_cmd = app.add_subcommand("split", "Train/validation/test split");
  std::string split_in, split_dir = ".";
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 0;
  split_cmd->add_option("--in", split_in)->required();
  split_cmd->add_option("--out-dir", split_dir)->capture_default_str();
  split_cmd->add_option("--ratios", ratios, "train validation test")->expected(3)->capture_default_str();
  split_cmd->add_option("--seed", split_seed)->capture_default_str();

  // cluster-routes
  auto* cluster_cmd = app.add_subcommand("cluster-routes", "k-means over route signatures");
  std::string cluster_in, cluster_out;
  std::size_t k = kDefaultRouteClusters, resample = kDefaultResamplePoints;
  std::uint64_t cluster_seed = 0;
  cluster_cmd->add_option("--in", cluster_in)->required();
  cluster_cmd->add_option("--out", cluster_out)->required();
  cluster_cmd->add_option("--k", k)->capture_default_str();
  cluster_cmd->add_option("--resample", resample)->capture_default_str();
  cluster_cmd->add_option("--seed", cluster_seed)->capture_default_str();

  // decompose
  auto* decomp_cmd = app.add_subcommand("decompose", "Context tensor, rank sweep and CP embeddings");
  std::string decomp_in, decomp_clusters, decomp_out, decomp_report, decomp_embeddings;
  PipelineConfig dconf;
  bool no_gender = false;
  decomp_cmd->add_option("--in", decomp_in, "Training records")->required();
  decomp_cmd->add_option("--clusters", decomp_clusters)->required();
  decomp_cmd->add_option("--out", decomp_out)->required();
  decomp_cmd->add_option("--rank-min", dconf.rank_min)->capture_default_str();
  decomp_cmd->add_option("--rank-max", dconf.rank_max)->capture_default_str();
  decomp_cmd->add_option("--seed", dconf.cp.seed)->capture_default_str();
  decomp_cmd->add_option("--max-sweeps", dconf.cp.max_sweeps)->capture_default_str();
  decomp_cmd->add_option("--report", decomp_report, "CSV: rank,cc,relative_fit");
  decomp_cmd->add_option("--embeddings", decomp_embeddings, "Tab-separated embedding table");
  decomp_cmd->add_flag("--no-gender", no_gender, "Leave gender out of the context");

  // train-distance
  auto* td_cmd = app.add_subcommand("train-distance", "Train the distance model");
  std::string td_train, td_val, td_clusters, td_factors, td_out;
  TrainingConfig tconf;
  bool td_augment = false;
  std::uint64_t augment_seed = 0;
  td_cmd->add_option("--train", td_train)->required();
  td_cmd->add_option("--validation", td_val)->required();
  td_cmd->add_option("--clusters", td_clusters)->required();
  td_cmd->add_option("--factors", td_factors)->required();
  td_cmd->add_option("--out", td_out)->required();
  td_cmd->add_option("--epochs", tconf.distance_epochs)->capture_default_str();
  td_cmd->add_option("--batch", tconf.distance_batch)->capture_default_str();
  td_cmd->add_option("--lr", tconf.distance_lr)->capture_default_str();
  td_cmd->add_option("--seed", tconf.seed)->capture_default_str();
  td_cmd->add_flag("--augment", td_augment, "Add extended copies of loop routes");
  td_cmd->add_option("--augment-seed", augment_seed)->capture_default_str();

  // train-sequence
  auto* ts_cmd = app.add_subcommand("train-sequence", "Train the speed/heart-rate model and write the bundle");
  std::string ts_train, ts_val, ts_clusters, ts_factors, ts_distance, ts_catalog, ts_out;
  ts_cmd->add_option("--train", ts_train)->required();
  ts_cmd->add_option("--validation", ts_val)->required();
  ts_cmd->add_option("--clusters", ts_clusters)->required();
  ts_cmd->add_option("--factors", ts_factors)->required();
  ts_cmd->add_option("--distance", ts_distance, "Output of train-distance")->required();
  ts_cmd->add_option("--catalog", ts_catalog, "Records whose routes the service offers")->required();
  ts_cmd->add_option("--out", ts_out, "Bundle file")->required();
  ts_cmd->add_option("--epochs", tconf.sequence_epochs)->capture_default_str();
  ts_cmd->add_option("--batch", tconf.sequence_batch)->capture_default_str();
  ts_cmd->add_option("--lr", tconf.sequence_lr)->capture_default_str();
  ts_cmd->add_option("--seed", tconf.seed)->capture_default_str();

  // build
  auto* build_cmd = app.add_subcommand("build", "Run every stage and write a bundle");
  std::string build_in, build_out;
  PipelineConfig bconf;
  build_cmd->add_option("--in", build_in, "Raw records")->required();
  build_cmd->add_option("--out", build_out, "Bundle file")->required();
  build_cmd->add_option("--k", bconf.clusters)->capture_default_str();
  build_cmd->add_option("--rank-min", bconf.rank_min)->capture_default_str();
  build_cmd->add_option("--rank-max", bconf.rank_max)->capture_default_str();
  build_cmd->add_option("--distance-epochs", bconf.training.distance_epochs)->capture_default_str();
  build_cmd->add_option("--sequence-epochs", bconf.training.sequence_epochs)->capture_default_str();
  build_cmd->add_option("--seed", bconf.training.seed)->capture_default_str();
  build_cmd->add_flag("--verbose", bconf.verbose);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Distance RMSE and speed/heart-rate MAE on a test file");
  std::string eval_bundle, eval_test, eval_train;
  eval_cmd->add_option("--bundle", eval_bundle)->required();
  eval_cmd->add_option("--test", eval_test)->required();
  eval_cmd->add_option("--train", eval_train, "Training records, for the mean baseline");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API over a bundle");
  std::string serve_bundle;
  ServiceConfig service_config;
  serve_cmd->add_option("--bundle", serve_bundle)->required();
  serve_cmd->add_option("--port", service_config.port)->capture_default_str();
  serve_cmd->add_option("--host", service_config.host)->capture_default_str();

  // recommend
  auto* rec_cmd = app.add_subcommand("recommend", "What-if recommendations for one user and route");
  std::string rec_bundle, rec_user, rec_route, rec_sport = "run", rec_calories, rec_gender, rec_out;
  rec_cmd->add_option("--bundle", rec_bundle)->required();
  rec_cmd->add_option("--user", rec_user)->required();
  rec_cmd->add_option("--route", rec_route)->required();
  rec_cmd->add_option("--sport", rec_sport)->capture_default_str();
  rec_cmd->add_option("--calories", rec_calories, "Comma-separated kcal values")->required();
  rec_cmd->add_option("--gender", rec_gender, "Override the stored gender");
  rec_cmd->add_option("--out", rec_out, "CSV with the full sequences");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto records = synthetic::generate(sc);
      write_records_file(synth_out, records);
      std::cout << "wrote " << records.size() << " records to " << synth_out << '\n';
    } else if (*ingest) {
      const auto records = read_records_file(ingest_in);
      std::set<std::string> users;
      for (const auto& r : records) users.insert(r.user_id);
      std::cout << "parsed " << records.size() << " records from " << users.size() << " users\n";
      if (!ingest_out.empty()) write_records_file(ingest_out, records);
    } else if (*clean_cmd) {
      if (max_speed) {
        for (auto& [sport, cap] : rules.max_speed) cap = *max_speed;
      }
      const auto records = read_records_file(clean_in);
      const auto [kept, report] = clean(records, rules);
      write_records_file(clean_out, kept);
      std::cout << "kept " << report.retained_count << " of " << report.input_count << " records\n";
      if (!clean_report.empty()) {
        std::ofstream out(clean_report);
        out << "workout_id,rule\n";
        for (const auto& [id, rule] : report.removals) out << id << ',' << rule << '\n';
      }
    } else if (*split_cmd) {
      const auto records = read_records_file(split_in);
      const auto split = split_records(records, ratios, split_seed);
      write_records_file(split_dir + "/train.jsonl", select(records, split.train));
      write_records_file(split_dir + "/validation.jsonl", select(records, split.validation));
      write_records_file(split_dir + "/test.jsonl", select(records, split.test));
      std::cout << "train " << split.train.size() << ", validation " << split.validation.size() << ", test "
                << split.test.size() << '\n';
    } else if (*cluster_cmd) {
      const auto records = read_records_file(cluster_in);
      const ClusterModel model = fit_route_clusters(records, k, resample, cluster_seed);
      Container c;
      put_clusters(c, model);
      write_container(cluster_out, c);
      std::cout << "k=" << model.k() << " inertia=" << model.inertia_history.back() << " after "
                << model.inertia_history.size() << " passes\n";
    } else if (*decomp_cmd) {
      dconf.context.include_gender = !no_gender;
      const auto records = read_records_file(decomp_in);
      const ClusterModel clusters = get_clusters(read_container(decomp_clusters));
      const Decomposition d = decompose(records, clusters, dconf);
      Container c;
      put_factors(c, d.report.selected_factors(), d.tensor.users);
      c.manifest["include_gender"] = dconf.context.include_gender;
      write_container(decomp_out, c);
      for (const auto& e : d.report.entries) {
        std::cout << "rank " << e.rank << " cc " << e.core_consistency << " relative_fit " << e.relative_fit << '\n';
      }
      std::cout << "selected rank " << d.report.selected_rank << '\n';
      if (!decomp_report.empty()) write_rank_report(decomp_report, d.report.entries);
      if (!decomp_embeddings.empty()) write_embeddings(decomp_embeddings, d.embeddings);
    } else if (*td_cmd) {
      const Stage s = load_stage(td_clusters, td_factors);
      auto train = read_records_file(td_train);
      const auto val = read_records_file(td_val);
      if (td_augment) {
        Rng rng(augment_seed);
        const std::size_t n = train.size();
        for (std::size_t i = 0; i < n; ++i) {
          if (is_loop(train[i])) train.push_back(augment_route(train[i], {0.1, 0.5}, rng));
        }
      }
      const NormStats norm = compute_norm_stats(train);
      const ContextBuilder builder(s.embeddings, s.clusters, norm, s.layout);
      auto [model, curve] = train_distance(make_distance_dataset(train, builder), make_distance_dataset(val, builder),
                                           norm, s.layout, tconf);
      Container c;
      put_norm(c, norm);
      put_mlp(c, "distance", model.mlp);
      c.manifest["seed"] = model.seed;
      write_container(td_out, c);
      std::cout << "epochs " << curve.train_loss.size() << ", best validation loss "
                << curve.validation_loss[curve.best_epoch] << '\n';
    } else if (*ts_cmd) {
      const Stage s = load_stage(ts_clusters, ts_factors);
      const Container dc = read_container(ts_distance);
      const NormStats norm = get_norm(dc);
      const DistanceModel distance{get_mlp(dc, "distance"), norm, s.layout, dc.manifest.value("seed", std::uint64_t{0})};
      const auto train = read_records_file(ts_train);
      const auto val = read_records_file(ts_val);
      const ContextBuilder builder(s.embeddings, s.clusters, norm, s.layout);
      auto [model, curve] = train_sequence(make_sequence_dataset(train, builder, &distance),
                                           make_sequence_dataset(val, builder, &distance), norm, s.layout, tconf);
      Bundle b;
      b.layout = s.layout;
      b.norm = norm;
      b.clusters = s.clusters;
      b.factors = s.factors;
      b.embeddings = s.embeddings;
      b.distance = distance;
      b.sequence = std::move(model);
      std::map<std::size_t, std::size_t> lengths;
      for (const auto& r : read_records_file(ts_catalog)) {
        b.routes.push_back(RouteEntry{r.workout_id, assign(b.clusters, r), r.altitude, r.distance});
        b.user_gender.emplace(r.user_id, r.gender);
        ++lengths[r.length()];
      }
      std::size_t most = 0;
      for (const auto& [len, n] : lengths) {
        if (n > most) {
          most = n;
          b.sequence_length = len;
        }
      }
      b.index_routes();
      save_bundle(ts_out, b);
      std::cout << "epochs " << curve.train_loss.size() << ", best validation loss "
                << curve.validation_loss[curve.best_epoch] << "; bundle written to " << ts_out << '\n';
    } else if (*build_cmd) {
      const auto records = read_records_file(build_in);
      const PipelineResult res = run_pipeline(records, bconf);
      save_bundle(build_out, make_bundle(res, bconf));
      std::cout << "selected rank " << res.decomposition.report.selected_rank << '\n';
      print_report("model", res.model_report);
      print_report("mean baseline", res.baseline_report);
      std::cout << "bundle written to " << build_out << '\n';
    } else if (*eval_cmd) {
      const Bundle b = load_bundle(eval_bundle);
      const auto test = read_records_file(eval_test);
      const ContextBuilder builder(b.embeddings, b.clusters, b.norm, b.layout);
      print_report("model", evaluate(ModelPredictor(b.distance, b.sequence, builder), test));
      if (!eval_train.empty()) {
        const auto train = read_records_file(eval_train);
        print_report("mean baseline", evaluate(MeanBaseline(train), test));
      }
    } else if (*serve_cmd) {
      const Bundle b = load_bundle(serve_bundle);
      Service service(b, service_config);
      std::cout << "serving on " << service_config.host << ':' << service_config.port << std::endl;
      service.run();
    } else if (*rec_cmd) {
      const Bundle b = load_bundle(rec_bundle);
      std::vector<RecommendationResponse> scenarios;
      for (double cal : parse_list(rec_calories)) {
        RecommendationRequest req;
        req.user_id = rec_user;
        req.route_id = rec_route;
        req.sport = sport_from_string(rec_sport);
        req.target_calories = cal;
        if (!rec_gender.empty()) req.gender = gender_from_string(rec_gender);
        scenarios.push_back(recommend(b, req));
      }
      std::cout << render_table(scenarios);
      if (!rec_out.empty()) {
        std::ofstream out(rec_out);
        if (!out) throw Error("cannot write " + rec_out);
        write_scenarios(out, scenarios);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
