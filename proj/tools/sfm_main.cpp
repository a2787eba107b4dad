#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "streamsfm/dataset.hpp"
#include "streamsfm/engine.hpp"
#include "streamsfm/metrics.hpp"
#include "streamsfm/reconstruction_io.hpp"
#include "streamsfm/server.hpp"
#include "streamsfm/synth_scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streamsfm;

namespace {

// Engine settings come from an optional JSON config file; explicit flags win.
EngineConfig LoadEngineConfig(const std::string& config_path) {
  EngineConfig config;
  if (config_path.empty()) return config;
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot read config: " + config_path);
  const json parsed = json::parse(in);
  config.top_n = parsed.value("top_n", config.top_n);
  config.tree_depth = parsed.value("tree_depth", config.tree_depth);
  config.tree_fanout = parsed.value("tree_fanout", config.tree_fanout);
  config.n_si = parsed.value("n_si", config.n_si);
  config.descriptor_dim = parsed.value("descriptor_dim", config.descriptor_dim);
  config.seed = parsed.value("seed", config.seed);
  config.hnsw.max_elements = parsed.value("hnsw_max_elements", config.hnsw.max_elements);
  config.hnsw.ef_construction = parsed.value("hnsw_ef_construction", config.hnsw.ef_construction);
  config.hnsw.max_connections = parsed.value("hnsw_max_connections", config.hnsw.max_connections);
  config.hnsw.ef_search = parsed.value("hnsw_ef_search", config.hnsw.ef_search);
  config.two_view.threshold_px = parsed.value("epipolar_threshold_px", config.two_view.threshold_px);
  config.two_view.min_inliers = parsed.value("min_two_view_inliers", config.two_view.min_inliers);
  config.pnp.threshold_px = parsed.value("pnp_threshold_px", config.pnp.threshold_px);
  config.triangulation.threshold_px =
      parsed.value("triangulation_threshold_px", config.triangulation.threshold_px);
  config.triangulation.min_angle_deg =
      parsed.value("min_triangulation_angle_deg", config.triangulation.min_angle_deg);
  config.merge.min_ior = parsed.value("merge_min_ior", config.merge.min_ior);
  config.merge.max_re = parsed.value("merge_max_re_px", config.merge.max_re);
  config.merge.num_trials = parsed.value("merge_num_trials", config.merge.num_trials);
  if (parsed.value("global_ba", std::string("final-only")) == std::string("every-k")) {
    config.global_ba = GlobalBaPolicy::kEveryK;
    config.global_ba_every_k = parsed.value("global_ba_every_k", config.global_ba_every_k);
  }
  return config;
}

void WriteRunOutputs(Engine& engine, const FinalReport& report, const std::string& out_dir,
                     const std::string& dataset_dir) {
  fs::create_directories(out_dir);
  const ReconstructionExport data = BuildExport(engine.Registry());
  WriteExportFile(data, (fs::path(out_dir) / "reconstruction.txt").string());
  engine.Index().SaveFile((fs::path(out_dir) / "index.hnsw").string());

  std::optional<EvaluationResult> evaluation;
  std::optional<RetrievalStats> retrieval;
  if (!dataset_dir.empty() && fs::exists(fs::path(dataset_dir) / "groundtruth.txt")) {
    try {
      const GroundTruth gt = LoadGroundTruth(dataset_dir);
      const DatasetManifest manifest = LoadManifest(dataset_dir);
      evaluation = Evaluate(data, gt, engine.Keypoints(), manifest.diameter);
      retrieval = ScoreRetrieval(engine.FrameEvents(), gt);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "evaluation skipped: %s\n", e.what());
    }
  }
  std::ofstream metrics(fs::path(out_dir) / "metrics.json");
  metrics << MetricsReportJson(report, engine.FrameEvents(), engine.MergeEvents(), evaluation,
                               retrieval)
          << "\n";

  std::printf("frames: %zu registered: %zu submaps: %zu\n", report.frames_seen,
              report.frames_registered, report.submap_count);
  std::printf("AMRE: %.3f px  MFRE: %.3f px  MTL: %.2f  mean frame time: %.1f ms\n",
              report.amre, report.mfre, report.mtl, report.mean_frame_ms);
  if (evaluation) {
    std::printf("MRE: %.3f px  MRD: %.4f deg  ATE: %.4f (%.3f%% of diameter)\n",
                evaluation->mre, evaluation->mrd_deg, evaluation->ate,
                100.0 * evaluation->ate_fraction);
  }
  std::printf("outputs in %s\n", out_dir.c_str());
}

int RunGen(const std::string& out_dir, const std::string& name, int agents, int frames,
           double sigma, double outliers, uint64_t seed, int dim) {
  SceneSpec spec = agents >= 2 ? DefaultTwoAgentSpec(seed) : DefaultSingleAgentSpec(frames, seed);
  spec.sigma_px = sigma;
  spec.outlier_fraction = outliers;
  spec.descriptor_dim = dim;
  if (agents >= 2 && frames > 0) {
    // Scale both arcs to roughly the requested total.
    const int per_agent = std::max(8, frames / agents);
    for (AgentArc& arc : spec.agents) arc.frames = per_agent;
  }
  const SyntheticScene scene = Generate(spec);
  const auto packets = RenderPackets(scene);
  SaveDataset(scene, packets, out_dir, name);
  std::printf("dataset '%s': %zu frames, %zu points, seed %llu -> %s\n", name.c_str(),
              packets.size(), scene.points.size(), static_cast<unsigned long long>(seed),
              out_dir.c_str());
  return 0;
}

int RunReplay(const std::string& dataset_dir, const std::string& out_dir,
              const std::string& config_path, double cadence_ms, std::optional<uint64_t> seed) {
  EngineConfig config = LoadEngineConfig(config_path);
  const DatasetManifest manifest = LoadManifest(dataset_dir);
  config.descriptor_dim = manifest.descriptor_dim;
  if (seed) config.seed = *seed;
  config.hnsw.seed = config.seed;
  std::printf("replaying '%s' (%zu frames), engine seed %llu\n", manifest.name.c_str(),
              manifest.frame_count, static_cast<unsigned long long>(config.seed));

  Engine engine(config, std::make_shared<OracleMatcher>());
  ReplayDataset(dataset_dir, &engine, cadence_ms);
  const FinalReport report = engine.Finalize();
  WriteRunOutputs(engine, report, out_dir, dataset_dir);
  return 0;
}

int RunServe(const std::string& bind, uint16_t port, const std::string& out_dir,
             const std::string& config_path, std::optional<uint64_t> seed,
             const std::string& dataset_for_eval) {
  EngineConfig config = LoadEngineConfig(config_path);
  if (seed) config.seed = *seed;
  config.hnsw.seed = config.seed;

  PacketQueue queue(64);
  ServerOptions options;
  options.bind_address = bind;
  options.port = port;
  WireServer server(options, &queue);
  server.Start();
  std::printf("listening on %s:%u (engine seed %llu)\n", bind.c_str(), server.Port(),
              static_cast<unsigned long long>(config.seed));

  Engine engine(config, std::make_shared<OracleMatcher>());
  std::thread closer([&] {
    server.WaitUntilIdle();
    queue.Close();
  });
  while (true) {
    auto packet = queue.Pop();
    if (!packet) break;
    const FrameEvent event = engine.ProcessFrame(*packet);
    std::printf("frame %llu/%u: %s (submaps %zu)\n",
                static_cast<unsigned long long>(packet->frame_id), packet->agent_id,
                event.registered ? "registered" : (event.rejected ? "rejected" : "pooled"),
                event.submap_count_after);
  }
  closer.join();
  server.Stop();

  const FinalReport report = engine.Finalize();
  WriteRunOutputs(engine, report, out_dir, dataset_for_eval);
  return 0;
}

int RunEval(const std::string& dataset_dir, const std::string& export_path) {
  const ReconstructionExport data = ReadExportFile(export_path);
  const GroundTruth gt = LoadGroundTruth(dataset_dir);
  const DatasetManifest manifest = LoadManifest(dataset_dir);
  const auto packets = LoadPackets(dataset_dir);
  std::map<uint64_t, std::vector<Eigen::Vector2d>> keypoints;
  for (const FramePacket& packet : packets) {
    auto& list = keypoints[MakeImageId(packet.agent_id, packet.frame_id)];
    for (const auto& kp : packet.keypoints) list.push_back(kp.cast<double>());
  }
  const KeypointLookup lookup = [&](uint64_t image_id, uint32_t kp) {
    return keypoints.at(image_id).at(kp);
  };
  const EvaluationResult result = Evaluate(data, gt, lookup, manifest.diameter);
  std::printf("images: %zu evaluated: %zu submaps aligned: %zu\n", result.registered_images,
              result.evaluated_images, result.aligned_submaps);
  std::printf("MRE: %.4f px  MTL: %.2f\n", result.mre, result.mtl);
  std::printf("MRD: %.4f deg  ATE: %.5f (%.3f%% of diameter)\n", result.mrd_deg, result.ate,
              100.0 * result.ate_fraction);
  return 0;
}

int RunBenchRetrieval(int max_elements, int dim, int queries, uint64_t seed,
                      const std::string& csv_path) {
  HnswParams params;
  params.max_elements = static_cast<size_t>(max_elements) + 1;
  params.seed = seed;
  HnswIndex index(dim, params);
  Rng rng(seed);
  std::vector<GlobalDescriptor> all;

  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path);
    csv << "n,hnsw_query_ms,exhaustive_ms,recall_at_30\n";
  }
  std::printf("%8s %14s %14s %10s\n", "n", "hnsw_ms", "exhaustive_ms", "recall@30");

  const std::vector<int> checkpoints = {1000, 2000, 4000, 6000, 8000};
  size_t next_checkpoint = 0;
  for (int i = 0; i < max_elements; ++i) {
    std::vector<float> values(dim);
    for (float& v : values) v = static_cast<float>(rng.Gaussian());
    all.push_back(GlobalDescriptor::Normalized(i, std::move(values)));
    index.Insert(all.back());

    if (next_checkpoint < checkpoints.size() && i + 1 == checkpoints[next_checkpoint]) {
      double hnsw_ms = 0.0, exhaustive_ms = 0.0, recall = 0.0;
      for (int q = 0; q < queries; ++q) {
        std::vector<float> query(dim);
        for (float& v : query) v = static_cast<float>(rng.Gaussian());
        const auto qd = GlobalDescriptor::Normalized(0, std::move(query));

        auto t0 = std::chrono::steady_clock::now();
        const auto approx = index.QueryTopN(qd.values, 30);
        auto t1 = std::chrono::steady_clock::now();
        const auto exact = ExhaustiveQuery(all, qd.values, 30);
        auto t2 = std::chrono::steady_clock::now();
        hnsw_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        exhaustive_ms += std::chrono::duration<double, std::milli>(t2 - t1).count();

        std::set<uint64_t> truth;
        for (const auto& r : exact) truth.insert(r.image_id);
        size_t hits = 0;
        for (const auto& r : approx) hits += truth.count(r.image_id);
        recall += static_cast<double>(hits) / exact.size();
      }
      hnsw_ms /= queries;
      exhaustive_ms /= queries;
      recall /= queries;
      std::printf("%8d %14.4f %14.4f %10.4f\n", i + 1, hnsw_ms, exhaustive_ms, recall);
      if (csv.is_open()) {
        csv << (i + 1) << "," << hnsw_ms << "," << exhaustive_ms << "," << recall << "\n";
      }
      ++next_checkpoint;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental streaming structure-from-motion engine"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_out, gen_name = "scene";
  int gen_agents = 1, gen_frames = 150, gen_dim = 256;
  double gen_sigma = 0.5, gen_outliers = 0.1;
  uint64_t gen_seed = 7;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--name", gen_name, "Dataset name");
  gen->add_option("--agents", gen_agents, "Number of agents (1 or 2)");
  gen->add_option("--frames", gen_frames, "Total frame count");
  gen->add_option("--sigma", gen_sigma, "Keypoint noise sigma in pixels");
  gen->add_option("--outliers", gen_outliers, "Outlier keypoint fraction");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--dim", gen_dim, "Descriptor dimension");

  // replay
  auto* replay = app.add_subcommand("replay", "Run the engine over a stored dataset");
  std::string replay_dataset, replay_out = "out", replay_config;
  double replay_cadence = 0.0;
  std::optional<uint64_t> replay_seed;
  replay->add_option("--dataset", replay_dataset, "Dataset directory")->required();
  replay->add_option("--out-dir", replay_out, "Output directory");
  replay->add_option("--config", replay_config, "Engine config JSON");
  replay->add_option("--cadence-ms", replay_cadence, "Delay between frames");
  replay->add_option("--seed", replay_seed, "Engine seed override");

  // serve
  auto* serve = app.add_subcommand("serve", "Accept live agents over TCP");
  std::string serve_bind = "127.0.0.1", serve_out = "out", serve_config, serve_eval_dataset;
  uint16_t serve_port = 8765;
  std::optional<uint64_t> serve_seed;
  serve->add_option("--bind", serve_bind, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 = ephemeral)");
  serve->add_option("--out-dir", serve_out, "Output directory");
  serve->add_option("--config", serve_config, "Engine config JSON");
  serve->add_option("--seed", serve_seed, "Engine seed override");
  serve->add_option("--eval-dataset", serve_eval_dataset,
                    "Dataset directory with ground truth for post-run evaluation");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate an export against ground truth");
  std::string eval_dataset, eval_export;
  eval->add_option("--dataset", eval_dataset, "Dataset directory (ground truth + keypoints)")
      ->required();
  eval->add_option("--export", eval_export, "reconstruction.txt path")->required();

  // bench-retrieval
  auto* bench = app.add_subcommand("bench-retrieval", "Index recall/latency benchmark");
  int bench_n = 8000, bench_dim = 256, bench_queries = 50;
  uint64_t bench_seed = 3;
  std::string bench_csv;
  bench->add_option("--n", bench_n, "Element count");
  bench->add_option("--dim", bench_dim, "Descriptor dimension");
  bench->add_option("--queries", bench_queries, "Queries per checkpoint");
  bench->add_option("--seed", bench_seed, "Seed");
  bench->add_option("--csv", bench_csv, "CSV output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return RunGen(gen_out, gen_name, gen_agents, gen_frames, gen_sigma, gen_outliers,
                    gen_seed, gen_dim);
    }
    if (replay->parsed()) {
      return RunReplay(replay_dataset, replay_out, replay_config, replay_cadence, replay_seed);
    }
    if (serve->parsed()) {
      return RunServe(serve_bind, serve_port, serve_out, serve_config, serve_seed,
                      serve_eval_dataset);
    }
    if (eval->parsed()) return RunEval(eval_dataset, eval_export);
    if (bench->parsed()) {
      return RunBenchRetrieval(bench_n, bench_dim, bench_queries, bench_seed, bench_csv);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
