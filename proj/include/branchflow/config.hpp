#pragma once

#include <stdexcept>
#include <string>

#include "branchflow/dfm.hpp"
#include "branchflow/hazard.hpp"
#include "branchflow/latent.hpp"
#include "branchflow/model.hpp"
#include "branchflow/ou.hpp"
#include "branchflow/sampler.hpp"
#include "branchflow/toy_data.hpp"
#include "json.hpp"

namespace branchflow {

inline nlohmann::json hazard_to_json(const HazardSpec& h) {
  if (h.kind == HazardKind::Uniform) return {{"kind", "uniform"}};
  return {{"kind", "beta"}, {"alpha", h.alpha}, {"beta", h.beta}};
}

inline HazardSpec hazard_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return HazardSpec::uniform();
  if (kind == "beta")
    return HazardSpec::make_beta(j.at("alpha").get<double>(), j.at("beta").get<double>());
  throw std::runtime_error("config: unknown hazard kind '" + kind + "'");
}

/// One JSON document fully determines a run: {hazards, base, latent, model,
/// sampler, data}.
struct RunConfig {
  HazardSpec split_hazard = HazardSpec::make_beta(1.0, 1.5);
  HazardSpec del_hazard = HazardSpec::uniform();
  OUSpec ou;
  DFMSpec dfm;  // alphabet/mask filled from the data section
  LatentSpec latent;
  ModelConfig model;  // d/alphabet filled from the data section
  ScheduleKind schedule = ScheduleKind::Cosine;
  int sampler_steps = 200;
  ToyDatasetSpec data;
};

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("hazards")) {
    const auto& h = j.at("hazards");
    if (h.contains("split")) c.split_hazard = hazard_from_json(h.at("split"));
    if (h.contains("del")) c.del_hazard = hazard_from_json(h.at("del"));
  }
  if (j.contains("base")) {
    const auto& b = j.at("base");
    if (b.contains("ou")) {
      const auto& o = b.at("ou");
      c.ou.theta = o.value("theta", c.ou.theta);
      c.ou.v0 = o.value("v0", c.ou.v0);
      c.ou.v1 = o.value("v1", c.ou.v1);
      const std::string sched = o.value("schedule", std::string("geometric"));
      if (sched == "geometric")
        c.ou.schedule = VarianceSchedule::Geometric;
      else if (sched == "linear")
        c.ou.schedule = VarianceSchedule::Linear;
      else
        throw std::runtime_error("config: unknown variance schedule '" + sched + "'");
    }
    if (b.contains("dfm")) {
      const auto& d = b.at("dfm");
      if (d.contains("f1")) c.dfm.f1 = hazard_from_json(d.at("f1"));
      if (d.contains("f2")) c.dfm.f2 = hazard_from_json(d.at("f2"));
      c.dfm.omega_u = d.value("omega_u", c.dfm.omega_u);
    }
  }
  if (j.contains("latent")) {
    const auto& l = j.at("latent");
    c.latent.lambda_group = l.value("lambda_group", c.latent.lambda_group);
    c.latent.deletion_rate = l.value("deletion_rate", c.latent.deletion_rate);
    const std::string scheme = l.value("scheme", std::string("rate"));
    if (scheme == "rate")
      c.latent.scheme = DeletionScheme::Rate;
    else if (scheme == "duplicate_each")
      c.latent.scheme = DeletionScheme::DuplicateEach;
    else
      throw std::runtime_error("config: unknown deletion scheme '" + scheme + "'");
  }
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    c.schedule = schedule_kind_from_string(s.value("schedule", std::string("cosine")));
    c.sampler_steps = s.value("n_steps", c.sampler_steps);
    if (c.sampler_steps < 2) throw std::runtime_error("config: sampler n_steps must be >= 2");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    const std::string kind = d.value("kind", std::string("token_runs"));
    if (kind == "token_runs")
      c.data.kind = ToyDatasetSpec::Kind::TokenRuns;
    else if (kind == "polyline2d")
      c.data.kind = ToyDatasetSpec::Kind::Polyline2d;
    else
      throw std::runtime_error("config: unknown data kind '" + kind + "'");
    c.data.symbols = d.value("symbols", c.data.symbols);
    c.data.run_continue = d.value("run_continue", c.data.run_continue);
    c.data.noise = d.value("noise", c.data.noise);
    if (c.data.symbols < 1) throw std::runtime_error("config: data.symbols must be >= 1");
  }
  // derived dimensions
  c.dfm.alphabet_size = c.data.alphabet_size();
  c.dfm.mask_token = c.data.mask_token();
  c.model.d = c.data.dim();
  c.model.alphabet_size = c.data.alphabet_size();
  c.dfm.validate();
  c.ou.validate();
  c.model.validate();
  if (!(c.latent.deletion_rate >= 1.0))
    throw std::runtime_error("config: latent.deletion_rate must be >= 1");
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["hazards"] = {{"split", hazard_to_json(c.split_hazard)}, {"del", hazard_to_json(c.del_hazard)}};
  j["base"] = {
      {"ou",
       {{"theta", c.ou.theta},
        {"v0", c.ou.v0},
        {"v1", c.ou.v1},
        {"schedule", c.ou.schedule == VarianceSchedule::Geometric ? "geometric" : "linear"}}},
      {"dfm",
       {{"f1", hazard_to_json(c.dfm.f1)},
        {"f2", hazard_to_json(c.dfm.f2)},
        {"omega_u", c.dfm.omega_u}}}};
  j["latent"] = {{"lambda_group", c.latent.lambda_group},
                 {"deletion_rate", c.latent.deletion_rate},
                 {"scheme", c.latent.scheme == DeletionScheme::Rate ? "rate" : "duplicate_each"}};
  j["model"] = c.model;
  j["sampler"] = {{"schedule", c.schedule == ScheduleKind::Cosine ? "cosine" : "uniform"},
                  {"n_steps", c.sampler_steps}};
  j["data"] = {{"kind", c.data.kind == ToyDatasetSpec::Kind::TokenRuns ? "token_runs"
                                                                       : "polyline2d"},
               {"symbols", c.data.symbols},
               {"run_continue", c.data.run_continue},
               {"noise", c.data.noise}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: cannot parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace branchflow
