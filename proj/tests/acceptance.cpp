// SPDX-License-Identifier: Apache-2.0
//
// Runs every acceptance criterion and prints one PASS/FAIL line each.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "gradalign/config.hpp"
#include "gradalign/experiments.hpp"
#include "gradalign/gradcheck.hpp"
#include "gradalign/metrics.hpp"
#include "gradalign/report.hpp"
#include "surgery_properties.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace gradalign;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ExperimentConfig reference(const std::string& name) {
  return load_config(std::string(GRADALIGN_CONFIG_DIR) + "/" + name + ".json");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

Verdict gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = run_gradcheck(2024, 100, 1e-6);
  const double elapsed = seconds_since(start);
  std::set<std::string> kinds;
  for (const auto& c : report.cases) kinds.insert(c.name);
  const bool pass = report.all_pass() && kinds.size() == 5 && report.cases.size() == 500 && elapsed < 30.0;
  return {pass, fmt("cases=%zu max_rel_error=%.3g seconds=%.2f", report.cases.size(), report.max_rel_error(), elapsed)};
}

Verdict geometry_suite() {
  const auto start = std::chrono::steady_clock::now();
  const testing::GeometryTally t = testing::check_geometry(77, 10000);
  const double elapsed = seconds_since(start);
  const bool pass = t.failures == 0 && t.triples == 10000 && t.conflicts > 0 && t.aligned > 0 && elapsed < 5.0;
  std::string detail = fmt("triples=%d conflict=%d aligned=%d passthrough=%d failures=%d seconds=%.2f", t.triples,
                           t.conflicts, t.aligned, t.passthrough, t.failures, elapsed);
  if (!t.first_failure.empty()) detail += " first: " + t.first_failure;
  return {pass, detail};
}

Verdict kd_linearity() {
  // 100 random single steps on random small models, then 100 consecutive
  // trainer steps against an independent descent loop.
  RngStream rng(314);
  double worst_single = 0.0;
  for (int i = 0; i < 100; ++i) {
    VlmDims d;
    d.context_len = 1 + static_cast<int>(rng.below(4));
    d.hand_len = static_cast<int>(rng.below(static_cast<std::size_t>(d.context_len) + 1));
    d.tok_dim = 2 + static_cast<int>(rng.below(7));
    d.feat_dim = 2 + static_cast<int>(rng.below(15));
    d.num_classes = 2 + static_cast<int>(rng.below(4));
    d.tau = 0.01 + 0.99 * rng.uniform();
    d.seed = rng.next_u64();
    const FrozenVLM vlm = FrozenVLM::random(d);
    PromptState p = init_prompt(vlm);
    p.flat() += sample_gaussian(rng, p.v.size(), 0.0, 0.3);
    const Batch b = testing::random_batch(rng, 1 + static_cast<int>(rng.below(8)), d.feat_dim, d.num_classes);
    const double lr = rng.uniform();
    const Vector kd = p.flat() - lr * apply_rule(UpdateRule::kd(), grad_pair(vlm, p, b), std::nullopt, 0).direction;
    const Vector gd = p.flat() - lr * grad_summed(vlm, p, b);
    worst_single = std::max(worst_single, (kd - gd).lpNorm<Eigen::Infinity>() / (1.0 + gd.lpNorm<Eigen::Infinity>()));
  }

  const FrozenVLM vlm = FrozenVLM::random(VlmDims{});
  const DomainSpec spec;
  const Episode ep = sample_episode(downstream_prototypes(vlm, spec), spec, 4, 5);
  TrainConfig cfg;
  cfg.rule = UpdateRule::kd();
  cfg.lr0 = 0.5;
  cfg.epochs = 100;
  cfg.seed = 5;
  cfg.record_params = true;
  const TrainResult r = train(vlm, ep, cfg);
  PromptState p = init_prompt(vlm);
  const auto plan = minibatch_plan(static_cast<int>(ep.train.size()), cfg.batch_size, cfg.epochs, cfg.seed);
  const std::size_t per_epoch = plan.size() / static_cast<std::size_t>(cfg.epochs);
  double worst_trace = 0.0;
  for (std::size_t s = 0; s < plan.size(); ++s) {
    p.flat() -= lr_schedule(cfg, s, plan.size(), per_epoch) * grad_summed(vlm, p, select(ep.train, plan[s]));
    worst_trace = std::max(worst_trace, (r.record.param_trace[s] - p.flat()).lpNorm<Eigen::Infinity>() /
                                            (1.0 + p.flat().lpNorm<Eigen::Infinity>()));
  }
  const bool pass = worst_single <= 1e-9 && worst_trace <= 1e-9 && plan.size() >= 100;
  return {pass, fmt("random_steps=100 max_dev=%.3g trainer_steps=%zu max_dev=%.3g", worst_single, plan.size(),
                    worst_trace)};
}

Verdict lambda_zero_is_ce() {
  const ExperimentOutput out = run_lambda_sweep(reference("reference_lambda"), {4, false});
  std::size_t compared = 0, mismatched = 0;
  for (const auto& ce : out.rows) {
    if (ce.rule != "CE") continue;
    for (const auto& pg : out.rows) {
      if (pg.rule != "PROGRAD" || pg.lambda != 0.0 || pg.shots != ce.shots || pg.seed != ce.seed) continue;
      ++compared;
      ResultRow a = ce, b = pg;
      b.rule = a.rule;
      b.lambda = a.lambda;
      std::ostringstream sa, sb;
      write_rows_csv(sa, {a}, false);
      write_rows_csv(sb, {b}, false);
      if (sa.str() != sb.str() || a.status != "ok") ++mismatched;
    }
  }
  std::size_t ce_rows = 0;
  for (const auto& r : out.rows) ce_rows += r.rule == "CE" ? 1 : 0;
  return {compared == ce_rows && compared > 0 && mismatched == 0,
          fmt("pairs=%zu mismatched=%zu", compared, mismatched)};
}

Verdict angle_dynamics() {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = reference("reference_angles");
  const ExperimentOutput out = run_angles(cfg, {4, false});
  const double elapsed = seconds_since(start);
  double ce = -1.0, pg = -1.0;
  std::size_t n_ce = 0, n_pg = 0;
  for (const auto& a : out.aggregates) {
    if (a.shots != 4) continue;
    if (a.rule == "CE") ce = a.mean_late_angle.mean, n_ce = a.mean_late_angle.n;
    if (a.rule == "PROGRAD" && a.lambda == 1.0) pg = a.mean_late_angle.mean, n_pg = a.mean_late_angle.n;
  }
  std::size_t steps = 0;
  for (const auto& t : out.trace)
    if (t.seed == cfg.seeds.front() && t.rule == "CE" && t.shots == 4) ++steps;
  const bool pass = n_ce == 20 && n_pg == 20 && steps >= 200 && ce >= 80.0 && ce <= 100.0 && pg > 95.0 && pg > ce &&
                    !out.any_failure() && elapsed < 120.0;
  return {pass, fmt("ce_late=%.2f prograd_late=%.2f seeds=%zu steps=%zu seconds=%.2f", ce, pg, n_ce, steps, elapsed)};
}

Verdict anti_forgetting() {
  const ExperimentOutput out = run_base2new(reference("reference_base2new"), {4, false});
  std::size_t new_w = 0, new_l = 0, h_w = 0, h_l = 0, seeds = 0;
  double ce_new = 0, pg_new = 0, ce_h = 0, pg_h = 0;
  for (const auto& ce : out.rows) {
    if (ce.rule != "CE") continue;
    for (const auto& pg : out.rows) {
      if (pg.rule != "PROGRAD" || pg.seed != ce.seed || pg.shots != ce.shots) continue;
      ++seeds;
      ce_new += ce.acc_new, pg_new += pg.acc_new, ce_h += ce.harmonic_mean, pg_h += pg.harmonic_mean;
      new_w += pg.acc_new > ce.acc_new, new_l += pg.acc_new < ce.acc_new;
      h_w += pg.harmonic_mean > ce.harmonic_mean, h_l += pg.harmonic_mean < ce.harmonic_mean;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(seeds, 1));
  const double p_new = sign_test_p(new_w, new_l), p_h = sign_test_p(h_w, h_l);
  const bool pass = seeds >= 30 && pg_new >= ce_new && pg_h >= ce_h && p_new < 0.05 && p_h < 0.05;
  return {pass, fmt("seeds=%zu new %.3f vs %.3f (%zu/%zu p=%.2g) H %.3f vs %.3f (%zu/%zu p=%.2g)", seeds, pg_new / n,
                    ce_new / n, new_w, new_l, p_new, pg_h / n, ce_h / n, h_w, h_l, p_h)};
}

Verdict teacher_degeneracy() {
  RngStream rng(99);
  double worst_loss = 0.0, worst_grad = 0.0;
  for (int i = 0; i < 200; ++i) {
    VlmDims d;
    d.context_len = 1 + static_cast<int>(rng.below(16));
    d.hand_len = d.context_len;
    d.tok_dim = 2 + static_cast<int>(rng.below(15));
    d.feat_dim = 2 + static_cast<int>(rng.below(31));
    d.num_classes = 2 + static_cast<int>(rng.below(11));
    d.tau = i % 2 == 0 ? 0.01 : 0.01 + rng.uniform();
    d.seed = rng.next_u64();
    const FrozenVLM vlm = FrozenVLM::random(d);
    const PromptState p = init_prompt(vlm);
    const Batch b = testing::random_batch(rng, 1 + static_cast<int>(rng.below(64)), d.feat_dim, d.num_classes);
    worst_loss = std::max(worst_loss, std::abs(batch_kl_loss(vlm, p, b)));
    worst_grad = std::max(worst_grad, grad_kl(vlm, p, b).norm());
  }
  return {worst_loss <= 1e-10 && worst_grad < 1e-10,
          fmt("instances=200 max_loss_kl=%.3g max_grad_norm=%.3g", worst_loss, worst_grad)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_file(e.path());
  return files;
}

Verdict determinism() {
  const ExperimentConfig cfg = reference("smoke");
  const fs::path root = fs::temp_directory_path() / "gradalign_acceptance_determinism";
  fs::remove_all(root);
  std::size_t compared = 0;
  std::string mismatch;
  for (Command c : {Command::kFewShot, Command::kBase2New, Command::kDomainShift, Command::kLambdaSweep,
                    Command::kAngles}) {
    std::map<std::string, std::string> first;
    for (int threads : {1, 1, 3, 8}) {
      const fs::path dir = root / (std::string(to_string(c)) + "_" + std::to_string(threads) + "_" +
                                   std::to_string(compared));
      write_outputs(dir, run_command(c, cfg, {threads, false}), cfg, true);
      auto files = snapshot(dir);
      ++compared;
      if (first.empty()) first = std::move(files);
      else if (files != first && mismatch.empty()) mismatch = std::string(to_string(c)) + " threads=" + std::to_string(threads);
    }
  }
  std::string grad_first;
  for (int rep = 0; rep < 2; ++rep) {
    std::ostringstream ss;
    write_gradcheck_csv(ss, run_gradcheck(cfg.master_seed, cfg.gradcheck.instances, cfg.gradcheck.tolerance));
    if (rep == 0) grad_first = ss.str();
    else if (ss.str() != grad_first && mismatch.empty()) mismatch = "gradcheck";
  }
  fs::remove_all(root);
  return {mismatch.empty(), fmt("runs=%zu threads={1,1,3,8} gradcheck_runs=2 %s", compared,
                                mismatch.empty() ? "identical" : ("differs: " + mismatch).c_str())};
}

Verdict exhaustive_oracles() {
  std::size_t checks = 0, bad = 0;
  auto expect = [&](bool ok) {
    ++checks;
    bad += ok ? 0 : 1;
  };

  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j) {
      const double a = i / 40.0, b = j / 40.0;
      expect(harmonic_mean(a, b) == (a + b == 0.0 ? 0.0 : 2.0 * a * b / (a + b)));
    }

  for (int n = 1; n <= 4; ++n) {
    const int span = 1 << n;
    auto bits = [n](int code) {
      std::vector<int> v(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (code >> i) & 1;
      return v;
    };
    for (int ca = 0; ca < span; ++ca)
      for (int cb = 0; cb < span; ++cb)
        for (int cz = 0; cz < span; ++cz)
          for (int ct = 0; ct < span; ++ct) {
            const auto a = bits(ca), b = bits(cb), z = bits(cz), t = bits(ct);
            std::size_t failures = 0, shared = 0;
            for (std::size_t k = 0; k < a.size(); ++k) {
              if (a[k] == t[k] || b[k] != t[k]) continue;
              ++failures;
              shared += z[k] != t[k] ? 1 : 0;
            }
            const auto got = failure_overlap(a, b, z, t);
            expect(failures == 0 ? !got.has_value()
                                 : got.has_value() && *got == static_cast<double>(shared) / static_cast<double>(failures));
          }
  }

  for (int k = 2; k <= 16; ++k)
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto [base, novel] = split_base_new(k, seed);
      std::vector<int> all = base;
      all.insert(all.end(), novel.begin(), novel.end());
      std::sort(all.begin(), all.end());
      bool ok = static_cast<int>(base.size()) == (k + 1) / 2 && static_cast<int>(novel.size()) == k / 2 &&
                std::is_sorted(base.begin(), base.end()) && std::is_sorted(novel.begin(), novel.end());
      for (int i = 0; ok && i < k; ++i) ok = all[static_cast<std::size_t>(i)] == i;
      expect(ok);
    }
  for (const auto& c : testing::load_golden("split.json")["cases"]) {
    const auto [base, novel] = split_base_new(c["num_classes"].get<int>(), c["seed"].get<std::uint64_t>());
    expect(base == c["base"].get<std::vector<int>>() && novel == c["new"].get<std::vector<int>>());
  }

  TrainConfig cfg;
  cfg.lr0 = 0.37;
  cfg.warmup_lr = 3e-4;
  for (std::size_t spe = 1; spe <= 6; ++spe)
    for (std::size_t epochs = 1; epochs <= 12; ++epochs) {
      const std::size_t total = spe * epochs;
      const std::size_t T = total > spe ? total - spe - 1 : 0;
      for (std::size_t s = 0; s < total; ++s) {
        double want = cfg.warmup_lr;
        if (s >= spe) {
          const double frac = T == 0 ? 0.0 : static_cast<double>(s - spe) / static_cast<double>(T);
          want = cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
        }
        expect(lr_schedule(cfg, s, total, spe) == want);
      }
    }
  return {bad == 0, fmt("checks=%zu failures=%zu", checks, bad)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"update geometry", geometry_suite},
      {"KD linearity", kd_linearity},
      {"lambda=0 equals CE end to end", lambda_zero_is_ce},
      {"angle dynamics", angle_dynamics},
      {"anti-forgetting direction", anti_forgetting},
      {"teacher-equality degeneracy", teacher_degeneracy},
      {"determinism", determinism},
      {"exhaustive small-instance oracles", exhaustive_oracles},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %zu: %s %s (%s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
