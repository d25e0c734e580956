// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

#include "gradalign/losses.hpp"
#include "gradalign/vlm.hpp"

namespace gradalign::testing {

inline nlohmann::json load_golden(const std::string& name) {
  std::ifstream in(std::string(GRADALIGN_TEST_DATA) + "/" + name);
  if (!in) throw std::runtime_error("missing golden file " + name);
  return nlohmann::json::parse(in);
}

inline Vector to_vector(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline RowMatrix to_rows(const nlohmann::json& j, Eigen::Index cols) {
  const Vector flat = to_vector(j);
  RowMatrix m(flat.size() / cols, cols);
  for (Eigen::Index i = 0; i < flat.size(); ++i) m.data()[i] = flat[i];
  return m;
}

inline Vector unit_gaussian(RngStream& rng, Eigen::Index n) {
  Vector x = sample_gaussian(rng, n, 0.0, 1.0);
  return x / x.norm();
}

inline Batch random_batch(RngStream& rng, int n, int feat_dim, int num_classes) {
  Batch b{RowMatrix(n, feat_dim), {}};
  for (int r = 0; r < n; ++r) {
    b.features.row(r) = unit_gaussian(rng, feat_dim).transpose();
    b.labels.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(num_classes))));
  }
  return b;
}

inline double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300});
}

}  // namespace gradalign::testing
