// SPDX-License-Identifier: Apache-2.0
//
// CSV / JSON / SVG emission for experiment outputs. Numbers use the
// shortest round-trip decimal form with '.' as separator, independent of
// the process locale.

#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "gradalign/experiments.hpp"

namespace gradalign {

std::string format_double(double v);

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool with_gap);
void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows, bool with_gap);
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);
void write_overlap_csv(std::ostream& out, const std::vector<OverlapRow>& rows);
void write_gradcheck_csv(std::ostream& out, const GradCheckReport& report);

std::string output_to_json(const ExperimentOutput& output, const ExperimentConfig& cfg);

/// Writes every artifact of `output` into `dir` and returns the paths.
std::vector<std::filesystem::path> write_outputs(const std::filesystem::path& dir, const ExperimentOutput& output,
                                                 const ExperimentConfig& cfg, bool plot);

/// Mean angle per step and per (rule, lambda, shots) curve.
std::string angles_svg(const std::vector<TraceRow>& trace);

/// Mean overall accuracy against shots, one curve per (rule, lambda, alpha).
std::string accuracy_svg(const std::vector<AggregateRow>& aggregates);

}  // namespace gradalign
