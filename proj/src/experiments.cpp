// SPDX-License-Identifier: Apache-2.0
#include "gradalign/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <thread>
#include <tuple>

namespace gradalign {

namespace {

constexpr std::uint64_t kTargetShiftTag = 41;

struct Job {
  UpdateRule rule;
  int shots = 0;
  std::uint64_t seed = 0;
};

struct JobResult {
  std::vector<ResultRow> rows;
  std::vector<StepTrace> steps;
  std::vector<int> predictions;
  std::vector<int> zero_shot;
  std::vector<int> truth;
};

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 256));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

ResultRow base_row(const ExperimentConfig& cfg, const Job& job) {
  ResultRow row;
  row.experiment = cfg.experiment;
  row.rule = std::string(to_string(job.rule.tag));
  row.lambda = job.rule.lambda;
  row.alpha = job.rule.alpha;
  row.shots = job.shots;
  row.seed = job.seed;
  return row;
}

void fill_metrics(ResultRow& row, const FinalMetrics& m, double late_angle) {
  row.acc_overall = m.acc_overall;
  row.acc_base = m.acc_base;
  row.acc_new = m.acc_new;
  row.harmonic_mean = m.harmonic_mean;
  row.acc_zero_shot = m.acc_zero_shot;
  row.mean_late_angle = late_angle;
}

class Protocol {
 public:
  Protocol(const ExperimentConfig& cfg, const RunOptions& opts)
      : cfg_(cfg), opts_(opts), vlm_(FrozenVLM::random(cfg.vlm)), prototypes_(downstream_prototypes(vlm_, cfg.domain)) {}

  std::vector<JobResult> run(const std::vector<UpdateRule>& rules, bool domainshift, bool keep_trace) {
    std::vector<Job> jobs;
    for (const auto& r : rules)
      for (int s : cfg_.shots)
        for (auto seed : cfg_.seeds) jobs.push_back({r, s, seed});
    std::vector<JobResult> results(jobs.size());
    parallel_for(jobs.size(), opts_.threads, [&](std::size_t i) {
      results[i] = run_job(jobs[i], domainshift, keep_trace);
    });
    return results;
  }

 private:
  JobResult run_job(const Job& job, bool domainshift, bool keep_trace) const {
    JobResult out;
    const auto start = std::chrono::steady_clock::now();
    try {
      const std::uint64_t run_seed = cfg_.run_seed(job.seed);
      Episode episode = sample_episode(prototypes_, cfg_.domain, job.shots, run_seed);
      const TrainResult trained = train(vlm_, episode, cfg_.train_config(job.rule, job.shots, job.seed));
      const double late = trained.record.mean_late_angle();
      const double ms = opts_.timing
                            ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()
                            : 0.0;
      if (keep_trace) out.steps = trained.record.steps;
      if (!domainshift) {
        ResultRow row = base_row(cfg_, job);
        fill_metrics(row, trained.record.final, late);
        row.wallclock_ms = ms;
        out.rows.push_back(std::move(row));
        out.predictions = predict(vlm_, trained.params, episode.test);
        out.zero_shot = predict_zero_shot(vlm_, episode.test);
        out.truth = episode.test.labels;
        return out;
      }
      for (const auto& gap : cfg_.gaps) {
        DomainSpec target = cfg_.domain;
        target.gap_rotation_deg = gap.rotation_deg;
        target.gap_shift = gap.shift;
        target.seed = derive_seed(cfg_.domain.seed, kTargetShiftTag);
        episode.test = sample_test_split(shift_domain(prototypes_, target), cfg_.domain, run_seed);
        ResultRow row = base_row(cfg_, job);
        fill_metrics(row, final_metrics(vlm_, trained.params, episode), late);
        row.wallclock_ms = ms;
        row.gap_rotation_deg = gap.rotation_deg;
        row.gap_shift = gap.shift;
        out.rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      out.rows.clear();
      const std::size_t n_rows = domainshift ? cfg_.gaps.size() : 1;
      for (std::size_t g = 0; g < n_rows; ++g) {
        ResultRow row = base_row(cfg_, job);
        if (domainshift) {
          row.gap_rotation_deg = cfg_.gaps[g].rotation_deg;
          row.gap_shift = cfg_.gaps[g].shift;
        }
        row.status = std::string("error: ") + e.what();
        out.rows.push_back(std::move(row));
      }
    }
    return out;
  }

  const ExperimentConfig& cfg_;
  RunOptions opts_;
  FrozenVLM vlm_;
  RowMatrix prototypes_;
};

std::vector<ResultRow> collect_rows(const std::vector<JobResult>& results) {
  std::vector<ResultRow> rows;
  for (const auto& r : results) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  std::stable_sort(rows.begin(), rows.end(), row_less);
  return rows;
}

std::vector<OverlapRow> overlaps(const std::vector<JobResult>& results) {
  // (shots, seed) -> CE predictions
  std::map<std::pair<int, std::uint64_t>, const JobResult*> ce;
  for (const auto& r : results)
    if (r.rows.size() == 1 && r.rows[0].rule == "CE" && r.rows[0].status == "ok")
      ce[{r.rows[0].shots, r.rows[0].seed}] = &r;
  std::vector<OverlapRow> out;
  for (const auto& r : results) {
    if (r.rows.size() != 1 || r.rows[0].rule != "PROGRAD" || r.rows[0].status != "ok") continue;
    const auto it = ce.find({r.rows[0].shots, r.rows[0].seed});
    if (it == ce.end()) continue;
    OverlapRow o{r.rows[0].lambda, r.rows[0].shots, r.rows[0].seed, std::nullopt, 0};
    for (std::size_t i = 0; i < r.truth.size(); ++i)
      o.failures += (r.predictions[i] != r.truth[i] && it->second->predictions[i] == r.truth[i]) ? 1 : 0;
    o.overlap = failure_overlap(r.predictions, it->second->predictions, r.zero_shot, r.truth);
    out.push_back(o);
  }
  std::sort(out.begin(), out.end(), [](const OverlapRow& a, const OverlapRow& b) {
    return std::tie(a.lambda, a.shots, a.seed) < std::tie(b.lambda, b.shots, b.seed);
  });
  return out;
}

ExperimentOutput finish(Command command, const std::vector<JobResult>& results, bool with_overlap) {
  ExperimentOutput out;
  out.command = command;
  out.rows = collect_rows(results);
  out.aggregates = aggregate(out.rows);
  if (with_overlap) out.overlap = overlaps(results);
  return out;
}

}  // namespace

std::string_view to_string(Command command) {
  switch (command) {
    case Command::kFewShot:
      return "fewshot";
    case Command::kBase2New:
      return "base2new";
    case Command::kDomainShift:
      return "domainshift";
    case Command::kLambdaSweep:
      return "lambda-sweep";
    case Command::kAngles:
      return "angles";
  }
  return "?";
}

bool ExperimentOutput::any_failure() const {
  return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status != "ok"; });
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::tie(a.rule, a.lambda, a.alpha, a.shots, a.gap_rotation_deg, a.gap_shift, a.seed) <
         std::tie(b.rule, b.lambda, b.alpha, b.shots, b.gap_rotation_deg, b.gap_shift, b.seed);
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> sorted;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(sorted), [](const auto& r) { return r.status == "ok"; });
  std::stable_sort(sorted.begin(), sorted.end(), row_less);

  auto key = [](const ResultRow& r) {
    return std::tie(r.experiment, r.rule, r.lambda, r.alpha, r.shots, r.gap_rotation_deg, r.gap_shift);
  };
  std::vector<AggregateRow> out;
  for (std::size_t begin = 0; begin < sorted.size();) {
    std::size_t end = begin;
    while (end < sorted.size() && key(sorted[end]) == key(sorted[begin])) ++end;
    auto summarize = [&](double ResultRow::*field) {
      std::vector<double> v;
      for (std::size_t i = begin; i < end; ++i) v.push_back(sorted[i].*field);
      return mean_ci95(v);
    };
    const ResultRow& r = sorted[begin];
    AggregateRow a;
    a.experiment = r.experiment;
    a.rule = r.rule;
    a.lambda = r.lambda;
    a.alpha = r.alpha;
    a.shots = r.shots;
    a.gap_rotation_deg = r.gap_rotation_deg;
    a.gap_shift = r.gap_shift;
    a.acc_overall = summarize(&ResultRow::acc_overall);
    a.acc_base = summarize(&ResultRow::acc_base);
    a.acc_new = summarize(&ResultRow::acc_new);
    a.harmonic_mean = summarize(&ResultRow::harmonic_mean);
    a.acc_zero_shot = summarize(&ResultRow::acc_zero_shot);
    a.mean_late_angle = summarize(&ResultRow::mean_late_angle);
    out.push_back(a);
    begin = end;
  }
  return out;
}

ExperimentOutput run_fewshot(const ExperimentConfig& cfg, const RunOptions& opts) {
  Protocol p(cfg, opts);
  return finish(Command::kFewShot, p.run(cfg.rules, false, false), true);
}

ExperimentOutput run_base2new(const ExperimentConfig& cfg, const RunOptions& opts) {
  Protocol p(cfg, opts);
  return finish(Command::kBase2New, p.run(cfg.rules, false, false), true);
}

ExperimentOutput run_domainshift(const ExperimentConfig& cfg, const RunOptions& opts) {
  Protocol p(cfg, opts);
  return finish(Command::kDomainShift, p.run(cfg.rules, true, false), false);
}

ExperimentOutput run_lambda_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  std::vector<UpdateRule> rules{UpdateRule::ce()};
  for (double l : cfg.lambdas) rules.push_back(UpdateRule::prograd(l));
  Protocol p(cfg, opts);
  return finish(Command::kLambdaSweep, p.run(rules, false, false), false);
}

ExperimentOutput run_angles(const ExperimentConfig& cfg, const RunOptions& opts) {
  Protocol p(cfg, opts);
  const auto results = p.run(cfg.rules, false, true);
  ExperimentOutput out = finish(Command::kAngles, results, false);
  for (const auto& r : results) {
    if (r.rows.empty() || r.rows[0].status != "ok") continue;
    const ResultRow& row = r.rows[0];
    for (const auto& s : r.steps) out.trace.push_back({row.rule, row.lambda, row.shots, row.seed, s});
  }
  std::stable_sort(out.trace.begin(), out.trace.end(), [](const TraceRow& a, const TraceRow& b) {
    return std::tie(a.rule, a.lambda, a.shots, a.seed, a.step.step) <
           std::tie(b.rule, b.lambda, b.shots, b.seed, b.step.step);
  });
  return out;
}

ExperimentOutput run_command(Command command, const ExperimentConfig& cfg, const RunOptions& opts) {
  switch (command) {
    case Command::kFewShot:
      return run_fewshot(cfg, opts);
    case Command::kBase2New:
      return run_base2new(cfg, opts);
    case Command::kDomainShift:
      return run_domainshift(cfg, opts);
    case Command::kLambdaSweep:
      return run_lambda_sweep(cfg, opts);
    case Command::kAngles:
      return run_angles(cfg, opts);
  }
  throw ConfigError("unknown command");
}

}  // namespace gradalign
