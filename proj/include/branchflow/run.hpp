#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "branchflow/config.hpp"
#include "branchflow/conditional_path.hpp"
#include "branchflow/eval.hpp"
#include "branchflow/io.hpp"
#include "branchflow/parallel.hpp"
#include "branchflow/sampler.hpp"

namespace branchflow {

// --------------------------------------------------------------------------
// Sample serialization (JSONL)
// --------------------------------------------------------------------------

inline nlohmann::json sequence_to_json(const Sequence& seq, uint64_t seed) {
  nlohmann::json els = nlohmann::json::array();
  for (const Element& e : seq) {
    nlohmann::json je = {{"continuous", e.continuous}, {"token", e.token}};
    if (e.fixed) je["fixed"] = true;
    els.push_back(std::move(je));
  }
  return {{"elements", std::move(els)}, {"length", seq.size()}, {"seed", seed}};
}

inline Sequence sequence_from_json(const nlohmann::json& j) {
  Sequence seq;
  for (const auto& je : j.at("elements")) {
    Element e;
    e.continuous = je.at("continuous").get<std::vector<double>>();
    e.token = je.at("token").get<int>();
    e.fixed = je.value("fixed", false);
    seq.push_back(std::move(e));
  }
  return seq;
}

inline std::vector<Sequence> read_samples_jsonl(const std::string& path) {
  std::vector<Sequence> out;
  for (const std::string& line : read_lines(path))
    out.push_back(sequence_from_json(nlohmann::json::parse(line)));
  return out;
}

// --------------------------------------------------------------------------
// Batch assembly and training
// --------------------------------------------------------------------------

inline ConditionalSample draw_training_sample(const RunConfig& cfg, Rng& rng,
                                              double t_override = -1.0) {
  const Sequence x1 = gen_sample(cfg.data, rng);
  const LatentZ z = make_latent(x1, cfg.latent, cfg.data.dim(), cfg.data.mask_token(), rng);
  const double t = t_override >= 0.0 ? t_override : rng.uniform();
  return sample_conditional_state(z, t, cfg.split_hazard, cfg.del_hazard, cfg.ou, cfg.dfm, rng);
}

/// Warmup then cosine decay to 10% of the peak rate.
inline double lr_at_step(const ModelConfig& cfg, int step, int total_steps) {
  if (!cfg.lr_decay) return cfg.learning_rate;
  const int warmup = std::max(20, total_steps / 20);
  if (step < warmup) return cfg.learning_rate * (step + 1) / warmup;
  const double progress = static_cast<double>(step - warmup) /
                          std::max(1, total_steps - warmup);
  const double floor = 0.1;
  return cfg.learning_rate *
         (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(kTwoPi / 2.0 * progress)));
}

struct TrainArtifacts {
  Model model;
  std::string metrics_csv;
  long elements_seen = 0;
  std::vector<double> loss_curve;
};

/**
 * Full training loop: per step, assemble a batch of conditional-path draws
 * (worker pool, one derived stream per (step, index) so the result is
 * independent of the worker count) and take one optimizer step.
 */
inline TrainArtifacts train_model(const RunConfig& cfg, uint64_t seed,
                                  int steps_override = -1) {
  const int steps = steps_override > 0 ? steps_override : cfg.model.steps;
  TrainArtifacts art{Model::create(cfg.model, seed), "", 0, {}};
  OptimizerState opt;
  const uint64_t train_seed = derive_seed(seed, 0x747261696eULL);
  std::ostringstream csv;
  csv << "step,split,delete,continuous,discrete,total\n";
  TrainBatch batch(cfg.model.batch_size);
  for (int step = 0; step < steps; ++step) {
    parallel_for(batch.size(), [&](size_t idx) {
      Rng rng(derive_seed(train_seed, static_cast<uint64_t>(step), idx));
      // t stratified across the batch: same uniform marginal, less variance
      const double t = (static_cast<double>(idx) + rng.uniform()) / batch.size();
      batch[idx] = draw_training_sample(cfg, rng, t);
    });
    for (const ConditionalSample& s : batch)
      art.elements_seen += static_cast<long>(s.state.elements.size());
    const CbfLossBreakdown stats = train_step(art.model, opt, batch, {}, "bf_bad_batch.json",
                                              lr_at_step(cfg.model, step, steps));
    art.loss_curve.push_back(stats.total);
    csv << step << ',' << format_double(stats.split) << ',' << format_double(stats.del) << ','
        << format_double(stats.continuous) << ',' << format_double(stats.discrete) << ','
        << format_double(stats.total) << '\n';
  }
  if (!opt.ema.empty()) art.model.params = opt.ema;  // sample from the average
  art.metrics_csv = csv.str();
  return art;
}

// --------------------------------------------------------------------------
// Generation and evaluation
// --------------------------------------------------------------------------

inline std::vector<Sequence> draw_dataset(const ToyDatasetSpec& spec, size_t n, uint64_t seed) {
  std::vector<Sequence> out(n);
  const uint64_t data_seed = derive_seed(seed, 0x64617461ULL);
  parallel_for(n, [&](size_t i) {
    Rng rng(derive_seed(data_seed, i));
    out[i] = gen_sample(spec, rng);
  });
  return out;
}

inline std::vector<Sequence> generate_samples(const Model& model, const RunConfig& cfg, size_t n,
                                              uint64_t seed,
                                              std::vector<double>* grid_out = nullptr) {
  const std::vector<double> grid = make_schedule(cfg.schedule, cfg.sampler_steps);
  if (grid_out) *grid_out = grid;
  std::vector<Sequence> out(n);
  const uint64_t gen_seed = derive_seed(seed, 0x67656eULL);
  parallel_for(n, [&](size_t i) {
    Rng rng(derive_seed(gen_seed, i));
    const int len = 1 + rng.poisson(cfg.latent.lambda_group);
    const SampleResult res = sample(model, grid, SampleInit::single_group(len), cfg.split_hazard,
                                    cfg.del_hazard, cfg.ou, cfg.dfm, rng);
    out[i] = res.elements;
  });
  return out;
}

inline std::string samples_to_jsonl(const std::vector<Sequence>& samples, uint64_t seed) {
  std::string out;
  for (size_t i = 0; i < samples.size(); ++i)
    out += sequence_to_json(samples[i], derive_seed(seed, i)).dump() + "\n";
  return out;
}

// --------------------------------------------------------------------------
// Conditional-path trajectory dumps (`simulate`)
// --------------------------------------------------------------------------

inline std::string branch_path_string(const BranchId& id) {
  if (!id.on_tree()) return "-";
  std::string s;
  for (int d = 0; d < id.depth; ++d) s += ((id.path >> d) & 1) ? '1' : '0';
  return s;
}

inline nlohmann::json latent_to_json(const LatentZ& z) {
  auto anchor_json = [](const AnchorState& a) {
    return nlohmann::json{{"continuous", a.continuous}, {"token", a.token}};
  };
  std::function<nlohmann::json(int)> tree_json = [&](int n) -> nlohmann::json {
    const ForestNode& node = z.forest.nodes[n];
    nlohmann::json j = {{"anchor", anchor_json(node.anchor)}, {"w", node.w}};
    if (node.is_leaf()) {
      j["leaf"] = node.leaf_pos;
      j["deleted"] = node.deleted;
    } else {
      j["children"] = nlohmann::json::array({tree_json(node.left), tree_json(node.right)});
    }
    return j;
  };
  nlohmann::json aug = nlohmann::json::array();
  for (size_t i = 0; i < z.x1_aug.size(); ++i) {
    aug.push_back({{"continuous", z.x1_aug[i].continuous},
                   {"token", z.x1_aug[i].token},
                   {"group", z.x1_aug[i].group},
                   {"fixed", z.x1_aug[i].fixed},
                   {"deleted", static_cast<bool>(z.deleted[i])}});
  }
  nlohmann::json x0 = nlohmann::json::array();
  for (const Element& e : z.x0)
    x0.push_back({{"continuous", e.continuous},
                  {"token", e.token},
                  {"group", e.group},
                  {"fixed", e.fixed}});
  nlohmann::json trees = nlohmann::json::array();
  for (int r : z.forest.roots) trees.push_back(tree_json(r));
  return {{"x1_aug", std::move(aug)}, {"x0", std::move(x0)}, {"trees", std::move(trees)}};
}

struct SimulateArtifacts {
  std::string trajectory_csv;
  std::string z_jsonl;
};

inline SimulateArtifacts simulate_dump(const RunConfig& cfg, size_t n_samples, int n_times,
                                       uint64_t seed) {
  const int d = cfg.data.dim();
  std::ostringstream csv;
  csv << "sample_id,t,element_index,tree,path";
  for (int c = 0; c < d; ++c) csv << ",continuous_" << c;
  csv << ",token,r_z,rho_z\n";
  std::string zs;
  std::vector<double> times(n_times);
  for (int k = 0; k < n_times; ++k) times[k] = static_cast<double>(k) / (n_times - 1);
  const uint64_t sim_seed = derive_seed(seed, 0x73696dULL);
  for (size_t s = 0; s < n_samples; ++s) {
    Rng rng(derive_seed(sim_seed, s));
    const Sequence x1 = gen_sample(cfg.data, rng);
    const LatentZ z = make_latent(x1, cfg.latent, d, cfg.data.mask_token(), rng);
    zs += latent_to_json(z).dump() + "\n";
    const PathRealization path =
        sample_conditional_path(z, times, cfg.split_hazard, cfg.del_hazard, cfg.ou, cfg.dfm, rng);
    for (const ConditionalSample& snap : path.snapshots) {
      for (size_t i = 0; i < snap.state.elements.size(); ++i) {
        const AugElement& ae = snap.state.elements[i];
        const ElementTargets& tg = snap.targets[i];
        csv << s << ',' << format_double(snap.state.t) << ',' << i << ',' << ae.branch.tree << ','
            << branch_path_string(ae.branch);
        for (int c = 0; c < d; ++c) csv << ',' << format_double(ae.value.continuous[c]);
        csv << ',' << ae.value.token << ',' << tg.remaining_splits << ',' << tg.deleted << '\n';
      }
    }
  }
  return {csv.str(), std::move(zs)};
}

// --------------------------------------------------------------------------
// Selftest: reduced-size oracle-equivalence suites behind the CLI contract
// --------------------------------------------------------------------------

struct SelftestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  return 1.0 - ks_overlap(std::move(a), std::move(b));
}

/// Exact shape distribution of the uniform adjacent-merge chain on n leaves.
inline std::map<std::string, double> enumerate_merge_shapes(int n_leaves) {
  std::map<std::string, double> probs;
  std::vector<std::string> frontier;
  for (int i = 0; i < n_leaves; ++i) frontier.push_back(std::string(1, static_cast<char>('a' + i)));
  std::function<void(std::vector<std::string>, double)> recurse =
      [&](std::vector<std::string> fr, double p) {
        if (fr.size() == 1) {
          probs[fr[0]] += p;
          return;
        }
        const double share = p / static_cast<double>(fr.size() - 1);
        for (size_t i = 0; i + 1 < fr.size(); ++i) {
          std::vector<std::string> next;
          next.reserve(fr.size() - 1);
          for (size_t k = 0; k < fr.size(); ++k) {
            if (k == i) {
              next.push_back("(" + fr[i] + fr[i + 1] + ")");
              ++k;  // skip i+1
            } else {
              next.push_back(fr[k]);
            }
          }
          recurse(std::move(next), share);
        }
      };
  recurse(std::move(frontier), 1.0);
  return probs;
}

inline std::string tree_shape_string(const Forest& forest, int node) {
  const ForestNode& n = forest.nodes[node];
  if (n.is_leaf()) return std::string(1, static_cast<char>('a' + n.leaf_pos));
  return "(" + tree_shape_string(forest, n.left) + tree_shape_string(forest, n.right) + ")";
}

}  // namespace detail

inline std::vector<SelftestResult> run_selftest(uint64_t seed) {
  std::vector<SelftestResult> results;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  };

  {  // interarrival law vs direct order-statistic minima
    const int n = 20000;
    double worst = 0.0;
    Rng rng(derive_seed(seed, 1));
    for (const HazardSpec& spec : {HazardSpec::uniform(), HazardSpec::make_beta(1.0, 1.5)}) {
      for (double t : {0.0, 0.5}) {
        for (int r : {1, 4}) {
          std::vector<double> impl(n), oracle(n);
          for (int i = 0; i < n; ++i)
            impl[i] = t + sample_interarrival(spec, t, r, rng);
          const double ft = hazard_cdf(spec, t);
          for (int i = 0; i < n; ++i) {
            double mn = 2.0;
            for (int k = 0; k < r; ++k)
              mn = std::min(mn, hazard_quantile(spec, ft + rng.uniform() * (1.0 - ft)));
            oracle[i] = mn;
          }
          worst = std::max(worst, detail::ks_distance(impl, oracle));
        }
      }
    }
    add("interarrival_law", worst < 0.02, "max KS = " + format_double(worst));
  }

  {  // counting CTMC: event-time construction vs delta-stepped chain
    const int n = 20000, zc = 5;
    const double t_end = 0.5, delta = 1e-3;
    const HazardSpec h = HazardSpec::uniform();
    Rng rng(derive_seed(seed, 2));
    std::vector<double> count_a(zc + 1, 0.0), count_b(zc + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      int x = 0;
      double t = 0.0;
      while (x < zc) {
        const double w = sample_interarrival(h, t, zc - x, rng);
        if (t + w > t_end) break;
        t += w;
        ++x;
      }
      count_a[x] += 1.0;
    }
    const int n_steps = static_cast<int>(t_end / delta);
    std::vector<double> rate(n_steps);
    for (int k = 0; k < n_steps; ++k) rate[k] = hazard_rate(h, k * delta) * delta;
    for (int i = 0; i < n; ++i) {
      int x = 0;
      for (int k = 0; k < n_steps && x < zc; ++k)
        if (rng.uniform() < std::min(1.0, (zc - x) * rate[k])) ++x;
      count_b[x] += 1.0;
    }
    double tv = 0.0;
    for (int x = 0; x <= zc; ++x) tv += std::fabs(count_a[x] - count_b[x]) / n;
    tv *= 0.5;
    add("ctmc_equivalence", tv < 0.04, "TV = " + format_double(tv));
  }

  {  // OU bridge pinning + Chapman-Kolmogorov composition
    bool ok = true;
    std::string note;
    for (const OUSpec& spec :
         {OUSpec{5.0, 1.0, 1.0, VarianceSchedule::Geometric},
          OUSpec{5.0, 10.0, 0.001, VarianceSchedule::Geometric},
          OUSpec{2.0, 3.0, 0.5, VarianceSchedule::Linear}}) {
      if (ou_bridge_moments(spec, 0.3, 1.0).variance > 1e-12) ok = false;
      Rng rng(derive_seed(seed, 3));
      std::vector<double> one{0.25};
      if (ou_bridge_sample(spec, one, {1.5}, 0.3, 1.0, rng) != std::vector<double>{1.5}) ok = false;
      for (double s : {0.0, 0.2}) {
        for (double u : {0.4, 0.6}) {
          for (double v : {0.7, 0.95}) {
            const BridgeMoments direct = ou_bridge_moments(spec, s, v);
            const BridgeMoments first = ou_bridge_moments(spec, s, u);
            const BridgeMoments second = ou_bridge_moments(spec, u, v);
            const double coef = second.xs_coef * first.xs_coef;
            const double var = second.xs_coef * second.xs_coef * first.variance + second.variance;
            if (std::fabs(coef - direct.xs_coef) > 1e-8 || std::fabs(var - direct.variance) > 1e-8)
              ok = false;
          }
        }
      }
    }
    add("ou_bridge", ok, ok ? "pinning + composition hold" : "bridge inconsistency");
  }

  {  // DFM scheduler simplex, interval weights, interval composition
    bool ok = true;
    DFMSpec dfm;
    dfm.f1 = HazardSpec::make_beta(2.0, 2.0);
    dfm.f2 = HazardSpec::make_beta(2.0, 2.0);
    dfm.omega_u = 0.2;
    dfm.alphabet_size = 4;
    dfm.mask_token = 3;
    Rng rng(derive_seed(seed, 4));
    for (int i = 0; i < 1000; ++i) {
      const double t = rng.uniform();
      const Schedulers k = dfm_schedulers(dfm, t);
      if (k.k1 < 0 || k.k2 < 0 || k.k3 < 0 || std::fabs(k.k1 + k.k2 + k.k3 - 1.0) > 1e-12)
        ok = false;
      double t0 = rng.uniform() * 0.98;
      double t1 = t0 + rng.uniform() * (1.0 - t0);
      const IntervalWeights w = dfm_interval_weights(dfm, t0, t1);
      if (std::fabs(w.to_endpoint + w.to_uniform + w.stay - 1.0) > 1e-12) ok = false;
    }
    // mixture frequencies at (t0=0, t=0.5) under uniform CDFs
    DFMSpec uni;
    uni.alphabet_size = 4;
    uni.mask_token = 3;
    uni.omega_u = 0.2;
    const int n = 20000;
    std::vector<double> freq(4, 0.0);
    for (int i = 0; i < n; ++i) freq[dfm_interval_sample(uni, 3, 0, 0.0, 0.5, rng)] += 1.0 / n;
    // expected: 0.5 to endpoint 0, 0.05 uniform over 4, 0.45 stay at 3
    const double exp0 = 0.5 + 0.05 / 4, exp3 = 0.45 + 0.05 / 4, expu = 0.05 / 4;
    if (std::fabs(freq[0] - exp0) > 0.02 || std::fabs(freq[3] - exp3) > 0.02 ||
        std::fabs(freq[1] - expu) > 0.02)
      ok = false;
    add("dfm_consistency", ok, ok ? "simplex + interval law hold" : "dfm inconsistency");
  }

  {  // forest invariants + 4-leaf shape frequencies vs enumeration
    bool ok = true;
    Rng rng(derive_seed(seed, 5));
    for (int trial = 0; trial < 1000 && ok; ++trial) {
      const int l1 = 1 + rng.uniform_int(8);
      Sequence x1(l1);
      for (int i = 0; i < l1; ++i) x1[i].token = rng.uniform_int(3);
      LatentSpec ls;
      ls.lambda_group = 0.5;
      const LatentZ z = make_latent(x1, ls, 0, 3, rng);
      int leaves_seen = 0;
      for (size_t r = 0; r < z.forest.roots.size(); ++r) {
        std::function<void(int)> walk = [&](int node) {
          const ForestNode& nd = z.forest.nodes[node];
          if (nd.is_leaf()) {
            if (nd.leaf_pos != leaves_seen) ok = false;  // planarity
            ++leaves_seen;
            return;
          }
          if (nd.w != z.forest.nodes[nd.left].w + z.forest.nodes[nd.right].w) ok = false;
          walk(nd.left);
          walk(nd.right);
        };
        walk(z.forest.roots[r]);
      }
      if (leaves_seen != static_cast<int>(z.x1_aug.size())) ok = false;
      if (z.x1_aug.size() < z.x0.size()) ok = false;  // condition 1 (single group)
      for (const ForestNode& nd : z.forest.nodes) {
        if (!nd.is_leaf() || nd.deleted) continue;
        if (nd.anchor.token != z.x1_aug[nd.leaf_pos].token) ok = false;  // condition 2
      }
    }
    const auto expected = detail::enumerate_merge_shapes(4);
    std::map<std::string, double> observed;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      Sequence leaves(4);
      const LatentZ z = [&] {
        LatentZ zz;
        zz.x1_aug = leaves;
        zz.deleted.assign(4, false);
        zz.forest = coalesce_forest(leaves, zz.deleted, {{0, 1}}, rng);
        return zz;
      }();
      observed[detail::tree_shape_string(z.forest, z.forest.roots[0])] += 1.0 / n;
    }
    for (const auto& [shape, p] : expected)
      if (std::fabs(observed[shape] - p) > 0.02) ok = false;
    add("forest_coalescence", ok, ok ? "invariants + shape law hold" : "forest inconsistency");
  }

  {  // conditional path terminates at x1
    bool ok = true;
    RunConfig cfg;  // defaults: token_runs
    cfg.dfm.alphabet_size = cfg.data.alphabet_size();
    cfg.dfm.mask_token = cfg.data.mask_token();
    RunConfig cfg2 = cfg;
    cfg2.data.kind = ToyDatasetSpec::Kind::Polyline2d;
    cfg2.dfm.alphabet_size = cfg2.data.alphabet_size();
    cfg2.dfm.mask_token = cfg2.data.mask_token();
    Rng rng(derive_seed(seed, 6));
    for (const RunConfig& c : {cfg, cfg2}) {
      for (int trial = 0; trial < 300 && ok; ++trial) {
        const Sequence x1 = gen_sample(c.data, rng);
        const LatentZ z = make_latent(x1, c.latent, c.data.dim(), c.data.mask_token(), rng);
        const ConditionalSample end =
            sample_conditional_state(z, 1.0, c.split_hazard, c.del_hazard, c.ou, c.dfm, rng);
        if (end.state.elements.size() != x1.size()) {
          ok = false;
          break;
        }
        for (size_t i = 0; i < x1.size(); ++i) {
          if (end.state.elements[i].value.token != x1[i].token) ok = false;
          for (size_t cc = 0; cc < x1[i].continuous.size(); ++cc)
            if (std::fabs(end.state.elements[i].value.continuous[cc] - x1[i].continuous[cc]) >
                1e-9)
              ok = false;
        }
      }
    }
    add("conditional_termination", ok, ok ? "600/600 bridges hit x1" : "termination failure");
  }

  {  // gradient check on a small model
    RunConfig cfg;
    cfg.dfm.alphabet_size = cfg.data.alphabet_size();
    cfg.dfm.mask_token = cfg.data.mask_token();
    cfg.model.d = cfg.data.dim();
    cfg.model.alphabet_size = cfg.data.alphabet_size();
    cfg.model.hidden_dim = 16;
    cfg.model.num_blocks = 2;
    Rng rng(derive_seed(seed, 7));
    const Model model = Model::create(cfg.model, seed);
    const ConditionalSample sample = draw_training_sample(cfg, rng);
    const double err = grad_check(model, sample, {}, rng);
    add("grad_check", err < 1e-4, "max rel err = " + format_double(err));
  }

  return results;
}

}  // namespace branchflow
