// SPDX-License-Identifier: Apache-2.0
#include "gradalign/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace gradalign {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// Status messages may contain commas or quotes.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

template <typename Fn>
std::string to_text(Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

nlohmann::ordered_json ci_json(const MeanCi& c) {
  return nlohmann::ordered_json{{"mean", c.mean}, {"ci95_half_width", c.half_width}, {"n", c.n}};
}

}  // namespace

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool with_gap) {
  out << "experiment,rule,lambda,alpha,shots,seed,acc_overall,acc_base,acc_new,harmonic_mean,acc_zero_shot,"
         "mean_late_angle,wallclock_ms";
  if (with_gap) out << ",gap_rotation_deg,gap_shift";
  out << ",status\n";
  for (const auto& r : rows) {
    out << csv_field(r.experiment) << ',' << r.rule << ',' << format_double(r.lambda) << ',' << format_double(r.alpha)
        << ',' << r.shots << ',' << r.seed << ',' << format_double(r.acc_overall) << ','
        << format_double(r.acc_base) << ',' << format_double(r.acc_new) << ',' << format_double(r.harmonic_mean)
        << ',' << format_double(r.acc_zero_shot) << ',' << format_double(r.mean_late_angle) << ','
        << format_double(r.wallclock_ms);
    if (with_gap) out << ',' << format_double(r.gap_rotation_deg) << ',' << format_double(r.gap_shift);
    out << ',' << csv_field(r.status) << '\n';
  }
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows, bool with_gap) {
  static constexpr const char* kMetrics[] = {"acc_overall",   "acc_base",      "acc_new",
                                             "harmonic_mean", "acc_zero_shot", "mean_late_angle"};
  out << "experiment,rule,lambda,alpha,shots";
  if (with_gap) out << ",gap_rotation_deg,gap_shift";
  out << ",n";
  for (const char* m : kMetrics) out << ',' << m << "_mean," << m << "_ci95";
  out << '\n';
  for (const auto& a : rows) {
    out << csv_field(a.experiment) << ',' << a.rule << ',' << format_double(a.lambda) << ','
        << format_double(a.alpha) << ',' << a.shots;
    if (with_gap) out << ',' << format_double(a.gap_rotation_deg) << ',' << format_double(a.gap_shift);
    out << ',' << a.acc_overall.n;
    for (const MeanCi* c : {&a.acc_overall, &a.acc_base, &a.acc_new, &a.harmonic_mean, &a.acc_zero_shot,
                            &a.mean_late_angle})
      out << ',' << format_double(c->mean) << ',' << format_double(c->half_width);
    out << '\n';
  }
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "rule,lambda,shots,seed,step,lr,loss_ce,loss_kl,dot_ce_kl,angle_deg,branch\n";
  for (const auto& r : rows) {
    out << r.rule << ',' << format_double(r.lambda) << ',' << r.shots << ',' << r.seed << ',' << r.step.step << ','
        << format_double(r.step.lr) << ',' << format_double(r.step.loss_ce) << ',' << format_double(r.step.loss_kl)
        << ',' << format_double(r.step.dot_ce_kl) << ',' << format_double(r.step.angle_deg) << ','
        << to_string(r.step.branch) << '\n';
  }
}

void write_overlap_csv(std::ostream& out, const std::vector<OverlapRow>& rows) {
  out << "lambda,shots,seed,failures,overlap\n";
  for (const auto& r : rows) {
    out << format_double(r.lambda) << ',' << r.shots << ',' << r.seed << ',' << r.failures << ','
        << (r.overlap ? format_double(*r.overlap) : std::string("empty")) << '\n';
  }
}

void write_gradcheck_csv(std::ostream& out, const GradCheckReport& report) {
  out << "case,instance,rel_error,tolerance,pass\n";
  for (const auto& c : report.cases) {
    out << c.name << ',' << c.instance << ',' << format_double(c.rel_error) << ','
        << format_double(report.tolerance) << ',' << (c.pass ? "true" : "false") << '\n';
  }
}

std::string output_to_json(const ExperimentOutput& output, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = "experiment_output.v1";
  j["command"] = std::string(to_string(output.command));
  j["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : output.rows) {
    nlohmann::ordered_json e{{"experiment", r.experiment},
                             {"rule", r.rule},
                             {"lambda", r.lambda},
                             {"alpha", r.alpha},
                             {"shots", r.shots},
                             {"seed", r.seed},
                             {"acc_overall", r.acc_overall},
                             {"acc_base", r.acc_base},
                             {"acc_new", r.acc_new},
                             {"harmonic_mean", r.harmonic_mean},
                             {"acc_zero_shot", r.acc_zero_shot},
                             {"mean_late_angle", r.mean_late_angle},
                             {"wallclock_ms", r.wallclock_ms}};
    if (output.command == Command::kDomainShift) {
      e["gap_rotation_deg"] = r.gap_rotation_deg;
      e["gap_shift"] = r.gap_shift;
    }
    e["status"] = r.status;
    rows.push_back(std::move(e));
  }
  auto& aggs = j["aggregates"] = nlohmann::ordered_json::array();
  for (const auto& a : output.aggregates) {
    nlohmann::ordered_json e{{"experiment", a.experiment}, {"rule", a.rule},   {"lambda", a.lambda},
                             {"alpha", a.alpha},           {"shots", a.shots}};
    if (output.command == Command::kDomainShift) {
      e["gap_rotation_deg"] = a.gap_rotation_deg;
      e["gap_shift"] = a.gap_shift;
    }
    e["acc_overall"] = ci_json(a.acc_overall);
    e["acc_base"] = ci_json(a.acc_base);
    e["acc_new"] = ci_json(a.acc_new);
    e["harmonic_mean"] = ci_json(a.harmonic_mean);
    e["acc_zero_shot"] = ci_json(a.acc_zero_shot);
    e["mean_late_angle"] = ci_json(a.mean_late_angle);
    aggs.push_back(std::move(e));
  }
  if (!output.overlap.empty()) {
    auto& ov = j["failure_overlap"] = nlohmann::ordered_json::array();
    for (const auto& o : output.overlap) {
      nlohmann::ordered_json e{{"lambda", o.lambda}, {"shots", o.shots}, {"seed", o.seed}, {"failures", o.failures}};
      e["overlap"] = o.overlap ? nlohmann::ordered_json(*o.overlap) : nlohmann::ordered_json(nullptr);
      ov.push_back(std::move(e));
    }
  }
  return j.dump(2) + "\n";
}

std::vector<fs::path> write_outputs(const fs::path& dir, const ExperimentOutput& output, const ExperimentConfig& cfg,
                                    bool plot) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::string stem(to_string(output.command));
  std::replace(stem.begin(), stem.end(), '-', '_');
  const bool with_gap = output.command == Command::kDomainShift;
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file(dir / name, content);
    written.push_back(dir / name);
  };

  if (output.command == Command::kAngles) {
    emit(stem + ".csv", to_text([&](std::ostream& o) { write_trace_csv(o, output.trace); }));
    emit(stem + "_runs.csv", to_text([&](std::ostream& o) { write_rows_csv(o, output.rows, false); }));
  } else {
    emit(stem + ".csv", to_text([&](std::ostream& o) { write_rows_csv(o, output.rows, with_gap); }));
  }
  emit(stem + "_summary.csv", to_text([&](std::ostream& o) { write_aggregates_csv(o, output.aggregates, with_gap); }));
  if (!output.overlap.empty())
    emit(stem + "_failure_overlap.csv", to_text([&](std::ostream& o) { write_overlap_csv(o, output.overlap); }));
  emit(stem + ".json", output_to_json(output, cfg));

  if (plot) {
    if (output.command == Command::kAngles) emit(stem + ".svg", angles_svg(output.trace));
    else emit(stem + ".svg", accuracy_svg(output.aggregates));
  }
  return written;
}

}  // namespace gradalign
