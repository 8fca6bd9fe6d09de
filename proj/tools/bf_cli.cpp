// bf: train / sample / eval / simulate / gradcheck / selftest for the
// branching-flows library. One JSON config fully determines a run; all
// artifact files are written atomically and are byte-stable under a fixed
// seed.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "branchflow/run.hpp"

using namespace branchflow;

namespace {

RunConfig require_config(const std::string& path) {
  if (path.empty()) throw std::runtime_error("missing --config");
  return load_config(path);
}

int cmd_train(const std::string& config_path, uint64_t seed, std::string out, int steps) {
  const RunConfig cfg = require_config(config_path);
  if (out.empty()) out = "bf_model.ckpt";
  const TrainArtifacts art = train_model(cfg, seed, steps);
  save_checkpoint(out, art.model, config_to_json(cfg).dump());
  atomic_write_file(out + ".metrics.csv", art.metrics_csv);
  std::printf("trained %zu params, %ld elements seen; wrote %s\n", art.model.params.size(),
              art.elements_seen, out.c_str());
  return 0;
}

int cmd_sample(const std::string& ckpt_path, uint64_t seed, std::string out, int n,
               int steps_override, const std::string& schedule_override,
               const std::string& trajectory_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg = config_from_json(nlohmann::json::parse(ckpt.run_config_json));
  if (steps_override > 0) cfg.sampler_steps = steps_override;
  if (!schedule_override.empty()) cfg.schedule = schedule_kind_from_string(schedule_override);
  if (out.empty()) out = "bf_samples.jsonl";

  const std::vector<Sequence> samples = generate_samples(ckpt.model, cfg, n, seed);
  atomic_write_file(out, samples_to_jsonl(samples, seed));

  if (!trajectory_path.empty()) {
    // one extra trajectory-recorded sample for plotting
    Rng rng(derive_seed(seed, 0x7472616aULL));
    const int len = 1 + rng.poisson(cfg.latent.lambda_group);
    const SampleResult res = sample(ckpt.model, make_schedule(cfg.schedule, cfg.sampler_steps),
                                    SampleInit::single_group(len), cfg.split_hazard,
                                    cfg.del_hazard, cfg.ou, cfg.dfm, rng, true);
    std::ostringstream csv;
    const int d = cfg.data.dim();
    csv << "step,t,element_index";
    for (int c = 0; c < d; ++c) csv << ",continuous_" << c;
    csv << ",token\n";
    for (const TrajectoryRow& row : res.trajectory) {
      csv << row.step << ',' << format_double(row.t) << ',' << row.element_index;
      for (int c = 0; c < d; ++c) csv << ',' << format_double(row.element.continuous[c]);
      csv << ',' << row.element.token << '\n';
    }
    atomic_write_file(trajectory_path, csv.str());
  }
  std::printf("wrote %d samples to %s\n", n, out.c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, uint64_t seed, std::string out,
             const std::string& samples_path, int n) {
  const RunConfig cfg = require_config(config_path);
  if (out.empty()) out = "bf_eval.json";
  std::vector<Sequence> samples;
  if (samples_path.empty()) {
    // data-vs-data split: two disjoint streams from the data law
    samples = draw_dataset(cfg.data, n, derive_seed(seed, 0xaaULL));
  } else {
    samples = read_samples_jsonl(samples_path);
  }
  const std::vector<Sequence> data = draw_dataset(cfg.data, n, derive_seed(seed, 0xbbULL));
  const EvalReport report = evaluate(cfg.data, samples, data, seed);
  atomic_write_file(out, report_to_json(report).dump(2) + "\n");
  for (const auto& [name, v] : report.overlaps)
    std::printf("overlap %-18s %.4f\n", name.c_str(), v);
  for (const auto& [name, v] : report.extras)
    std::printf("extra   %-18s %.4f\n", name.c_str(), v);
  return 0;
}

int cmd_simulate(const std::string& config_path, uint64_t seed, std::string out, int n,
                 int n_times) {
  const RunConfig cfg = require_config(config_path);
  if (out.empty()) out = "bf_trajectories.csv";
  const SimulateArtifacts art = simulate_dump(cfg, n, n_times, seed);
  atomic_write_file(out, art.trajectory_csv);
  atomic_write_file(out + ".z.jsonl", art.z_jsonl);
  std::printf("wrote %d conditional paths to %s (+ .z.jsonl)\n", n, out.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& config_path, uint64_t seed) {
  const RunConfig cfg = require_config(config_path);
  double worst = 0.0;
  for (uint64_t s = 0; s < 3; ++s) {
    Rng rng(derive_seed(seed, 0x6763ULL, s));
    const Model model = Model::create(cfg.model, derive_seed(seed, s));
    const ConditionalSample sample = draw_training_sample(cfg, rng);
    worst = std::max(worst, grad_check(model, sample, {}, rng));
  }
  std::printf("gradcheck max relative error = %.3g\n", worst);
  return worst < 1e-4 ? 0 : 1;
}

int cmd_selftest(uint64_t seed, const std::string& out) {
  const std::vector<SelftestResult> results = run_selftest(seed);
  bool all = true;
  std::string report;
  for (const SelftestResult& r : results) {
    all = all && r.pass;
    const std::string line =
        std::string(r.pass ? "[ok]   " : "[FAIL] ") + r.name + ": " + r.detail + "\n";
    std::fputs(line.c_str(), stdout);
    report += line;
  }
  if (!out.empty()) atomic_write_file(out, report);
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branching-flows desk-scale trainer and sampler"};
  app.require_subcommand(1);

  std::string config_path, out, samples_path, schedule_override, trajectory_path, ckpt_path;
  uint64_t seed = 0;
  int steps = -1, n = 100, eval_n = 10000, n_times = 11;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config JSON");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output path");
  };

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  add_common(train);
  train->add_option("--steps", steps, "override config step count");

  CLI::App* smp = app.add_subcommand("sample", "sample from a checkpoint");
  smp->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  smp->add_option("--seed", seed, "master seed");
  smp->add_option("--out", out, "samples JSONL path");
  smp->add_option("-n,--num", n, "number of samples");
  smp->add_option("--steps", steps, "override sampler step count");
  smp->add_option("--schedule", schedule_override, "uniform|cosine");
  smp->add_option("--trajectory", trajectory_path, "trajectory CSV path");

  CLI::App* ev = app.add_subcommand("eval", "distribution-matching report");
  add_common(ev);
  ev->add_option("--samples", samples_path, "samples JSONL (default: data-vs-data)");
  ev->add_option("-n,--num", eval_n, "held-out sample count");

  CLI::App* sim = app.add_subcommand("simulate", "dump conditional paths and Z");
  add_common(sim);
  sim->add_option("-n,--num", n, "number of conditional paths");
  sim->add_option("--steps", n_times, "snapshot count over [0,1]");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gc);

  CLI::App* st = app.add_subcommand("selftest", "oracle-equivalence suites");
  st->add_option("--seed", seed, "master seed");
  st->add_option("--out", out, "report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, seed, out, steps);
    if (smp->parsed())
      return cmd_sample(ckpt_path, seed, out, n, steps, schedule_override, trajectory_path);
    if (ev->parsed()) return cmd_eval(config_path, seed, out, samples_path, eval_n);
    if (sim->parsed()) return cmd_simulate(config_path, seed, out, n, n_times);
    if (gc->parsed()) return cmd_gradcheck(config_path, seed);
    if (st->parsed()) return cmd_selftest(seed, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
