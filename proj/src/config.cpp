// SPDX-License-Identifier: Apache-2.0
#include "gradalign/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace gradalign {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

UpdateRule rule_from_json(const json& j) {
  reject_unknown(j, {"rule", "lambda", "alpha"}, "rules[]");
  UpdateRule r;
  r.tag = rule_tag_from_string(j.at("rule").get<std::string>());
  r.lambda = r.tag == RuleTag::kProGrad ? j.value("lambda", 1.0) : 0.0;
  r.alpha = r.tag == RuleTag::kL2Reg ? j.value("alpha", 0.01) : 0.0;
  return r;
}

nlohmann::ordered_json rule_to_json(const UpdateRule& r) {
  nlohmann::ordered_json j;
  j["rule"] = std::string(to_string(r.tag));
  if (r.tag == RuleTag::kProGrad) j["lambda"] = r.lambda;
  if (r.tag == RuleTag::kL2Reg) j["alpha"] = r.alpha;
  return j;
}

}  // namespace

void ExperimentConfig::finalize() {
  vlm.validate();
  domain.num_classes = vlm.num_classes;
  domain.feat_dim = vlm.feat_dim;
  domain.validate();
  if (shots.empty() || rules.empty() || seeds.empty()) throw ConfigError("config: shots, rules and seeds must be nonempty");
  for (int s : shots)
    if (s < 1) throw ConfigError("config: shots must be >= 1");
  for (const auto& r : rules) r.validate();
  for (double l : lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("config: lambdas must lie in [0, 1]");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("config: seeds must be distinct");
  if (gaps.empty()) throw ConfigError("config: gaps must be nonempty");
  for (const auto& g : gaps)
    if (!(g.rotation_deg >= 0.0) || !(g.shift >= 0.0)) throw ConfigError("config: gap values must be non-negative");
  if (gradcheck.instances < 1 || !(gradcheck.tolerance > 0.0)) throw ConfigError("config: bad gradcheck settings");
  train_config(rules.front(), shots.front(), seeds.front()).validate();
}

TrainConfig ExperimentConfig::train_config(const UpdateRule& rule, int n_shots, std::uint64_t seed) const {
  TrainConfig cfg;
  cfg.rule = rule;
  cfg.lr0 = train.lr0;
  cfg.warmup_lr = train.warmup_lr;
  cfg.epochs = train.epochs > 0 ? train.epochs : default_epochs(n_shots);
  cfg.batch_size = train.batch_size;
  cfg.target = train.target;
  cfg.seed = run_seed(seed);
  return cfg;
}

ExperimentConfig config_from_json(const std::string& text) {
  ExperimentConfig cfg;
  try {
    const json j = json::parse(text);
    reject_unknown(j,
                   {"experiment", "vlm", "domain", "shots", "rules", "lambdas", "seeds", "master_seed", "train", "gaps",
                    "gradcheck", "output_dir"},
                   "config");
    read(j, "experiment", cfg.experiment);
    if (j.contains("vlm")) {
      const auto& v = j.at("vlm");
      reject_unknown(v, {"context_len", "hand_len", "tok_dim", "feat_dim", "num_classes", "tau", "seed"}, "vlm");
      read(v, "context_len", cfg.vlm.context_len);
      read(v, "hand_len", cfg.vlm.hand_len);
      read(v, "tok_dim", cfg.vlm.tok_dim);
      read(v, "feat_dim", cfg.vlm.feat_dim);
      read(v, "num_classes", cfg.vlm.num_classes);
      read(v, "tau", cfg.vlm.tau);
      read(v, "seed", cfg.vlm.seed);
    }
    if (j.contains("domain")) {
      const auto& d = j.at("domain");
      reject_unknown(d, {"gap_rotation_deg", "gap_shift", "noise_sigma", "prototype_sigma", "seed"}, "domain");
      read(d, "gap_rotation_deg", cfg.domain.gap_rotation_deg);
      read(d, "gap_shift", cfg.domain.gap_shift);
      read(d, "noise_sigma", cfg.domain.noise_sigma);
      read(d, "prototype_sigma", cfg.domain.prototype_sigma);
      read(d, "seed", cfg.domain.seed);
    }
    read(j, "shots", cfg.shots);
    if (j.contains("rules")) {
      cfg.rules.clear();
      for (const auto& r : j.at("rules")) cfg.rules.push_back(rule_from_json(r));
    }
    read(j, "lambdas", cfg.lambdas);
    read(j, "seeds", cfg.seeds);
    read(j, "master_seed", cfg.master_seed);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, {"lr0", "warmup_lr", "epochs", "batch_size", "target"}, "train");
      read(t, "lr0", cfg.train.lr0);
      read(t, "warmup_lr", cfg.train.warmup_lr);
      read(t, "epochs", cfg.train.epochs);
      read(t, "batch_size", cfg.train.batch_size);
      if (t.contains("target")) cfg.train.target = target_from_string(t.at("target").get<std::string>());
    }
    if (j.contains("gaps")) {
      cfg.gaps.clear();
      for (const auto& g : j.at("gaps")) {
        reject_unknown(g, {"rotation_deg", "shift"}, "gaps[]");
        cfg.gaps.push_back({g.value("rotation_deg", 0.0), g.value("shift", 0.0)});
      }
    }
    if (j.contains("gradcheck")) {
      const auto& g = j.at("gradcheck");
      reject_unknown(g, {"instances", "tolerance"}, "gradcheck");
      read(g, "instances", cfg.gradcheck.instances);
      read(g, "tolerance", cfg.gradcheck.tolerance);
    }
    read(j, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  try {
    cfg.finalize();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["experiment"] = cfg.experiment;
  j["vlm"] = {{"context_len", cfg.vlm.context_len}, {"hand_len", cfg.vlm.hand_len}, {"tok_dim", cfg.vlm.tok_dim},
              {"feat_dim", cfg.vlm.feat_dim},       {"num_classes", cfg.vlm.num_classes}, {"tau", cfg.vlm.tau},
              {"seed", cfg.vlm.seed}};
  j["domain"] = {{"gap_rotation_deg", cfg.domain.gap_rotation_deg},
                 {"gap_shift", cfg.domain.gap_shift},
                 {"noise_sigma", cfg.domain.noise_sigma},
                 {"prototype_sigma", cfg.domain.prototype_sigma},
                 {"seed", cfg.domain.seed}};
  j["shots"] = cfg.shots;
  j["rules"] = nlohmann::ordered_json::array();
  for (const auto& r : cfg.rules) j["rules"].push_back(rule_to_json(r));
  j["lambdas"] = cfg.lambdas;
  j["seeds"] = cfg.seeds;
  j["master_seed"] = cfg.master_seed;
  j["train"] = {{"lr0", cfg.train.lr0},
                {"warmup_lr", cfg.train.warmup_lr},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"target", std::string(to_string(cfg.train.target))}};
  j["gaps"] = nlohmann::ordered_json::array();
  for (const auto& g : cfg.gaps) j["gaps"].push_back(nlohmann::ordered_json{{"rotation_deg", g.rotation_deg}, {"shift", g.shift}});
  j["gradcheck"] = {{"instances", cfg.gradcheck.instances}, {"tolerance", cfg.gradcheck.tolerance}};
  j["output_dir"] = cfg.output_dir;
  return j.dump(2);
}

}  // namespace gradalign
