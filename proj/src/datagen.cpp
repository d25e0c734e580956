// SPDX-License-Identifier: Apache-2.0
#include "gradalign/datagen.hpp"

#include <algorithm>

namespace gradalign {

namespace {

enum StreamTag : std::uint64_t {
  kPrototypeJitter = 11,
  kRotationPlanes = 12,
  kShiftDirection = 13,
  kBaseNewSplit = 14,
  kTrainImages = 21,
  kTestImages = 22,
};

Vector unit_gaussian(RngStream& rng, Eigen::Index n) {
  Vector v = sample_gaussian(rng, n, 0.0, 1.0);
  return v / v.norm();
}

}  // namespace

void DomainSpec::validate() const {
  if (num_classes < 2) throw ConfigError("domain: need at least two classes");
  if (feat_dim < 2) throw ConfigError("domain: feat_dim must be >= 2");
  if (!std::isfinite(gap_rotation_deg) || gap_rotation_deg < 0.0) throw ConfigError("domain: bad gap_rotation_deg");
  if (!std::isfinite(gap_shift) || gap_shift < 0.0) throw ConfigError("domain: bad gap_shift");
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) throw ConfigError("domain: bad noise_sigma");
  if (!std::isfinite(prototype_sigma) || prototype_sigma < 0.0) throw ConfigError("domain: bad prototype_sigma");
}

RowMatrix teacher_aligned_prototypes(const FrozenVLM& vlm, const DomainSpec& spec) {
  spec.validate();
  if (spec.num_classes != vlm.dims().num_classes || spec.feat_dim != vlm.dims().feat_dim)
    throw ConfigError("domain: class count / feature dimension differ from the vlm");
  RngStream rng(derive_seed(spec.seed, kPrototypeJitter));
  RowMatrix out = vlm.teacher_features();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) += sample_gaussian(rng, out.cols(), 0.0, spec.prototype_sigma).transpose();
    out.row(i).normalize();
  }
  return out;
}

RowMatrix shift_domain(const RowMatrix& prototypes, const DomainSpec& spec) {
  spec.validate();
  RowMatrix out = prototypes;
  const Eigen::Index dim = prototypes.cols();
  if (spec.gap_rotation_deg != 0.0) {
    RngStream rng(derive_seed(spec.seed, kRotationPlanes));
    const double theta = spec.gap_rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta) - 1.0;
    const double s = std::sin(theta);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const Vector a = unit_gaussian(rng, dim);
      Vector b = sample_gaussian(rng, dim, 0.0, 1.0);
      b -= b.dot(a) * a;
      b.normalize();
      const Vector x = out.row(i).transpose();
      const double xa = x.dot(a);
      const double xb = x.dot(b);
      out.row(i) = (x + c * (xa * a + xb * b) + s * (xa * b - xb * a)).transpose();
    }
  }
  if (spec.gap_shift != 0.0) {
    RngStream rng(derive_seed(spec.seed, kShiftDirection));
    const Vector direction = unit_gaussian(rng, dim);
    out.rowwise() += spec.gap_shift * direction.transpose();
  }
  if (spec.gap_rotation_deg != 0.0 || spec.gap_shift != 0.0) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double n = out.row(i).norm();
      if (!(n > 0.0)) throw DegenerateInputError("shift_domain: prototype collapsed to zero");
      out.row(i) /= n;
    }
  }
  return out;
}

RowMatrix downstream_prototypes(const FrozenVLM& vlm, const DomainSpec& spec) {
  return shift_domain(teacher_aligned_prototypes(vlm, spec), spec);
}

Batch sample_images(const RowMatrix& prototypes, const std::vector<int>& classes, int per_class, double sigma,
                    RngStream& rng) {
  const auto n = static_cast<Eigen::Index>(classes.size()) * per_class;
  Batch out{RowMatrix(n, prototypes.cols()), {}};
  out.labels.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int k : classes) {
    for (int s = 0; s < per_class; ++s, ++row) {
      Vector x = prototypes.row(k).transpose() + sample_gaussian(rng, prototypes.cols(), 0.0, sigma);
      const double norm = x.norm();
      if (!(norm > 0.0)) throw DegenerateInputError("sample_images: zero feature drawn");
      out.features.row(row) = (x / norm).transpose();
      out.labels.push_back(k);
    }
  }
  return out;
}

std::pair<std::vector<int>, std::vector<int>> split_base_new(int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("split_base_new: need at least two classes");
  RngStream rng(derive_seed(seed, kBaseNewSplit));
  const std::vector<int> order = shuffled_indices(rng, num_classes);
  const auto n_base = static_cast<std::ptrdiff_t>((num_classes + 1) / 2);
  std::vector<int> base(order.begin(), order.begin() + n_base);
  std::vector<int> novel(order.begin() + n_base, order.end());
  std::sort(base.begin(), base.end());
  std::sort(novel.begin(), novel.end());
  return {std::move(base), std::move(novel)};
}

Batch sample_test_split(const RowMatrix& prototypes, const DomainSpec& spec, std::uint64_t seed) {
  std::vector<int> all(static_cast<std::size_t>(prototypes.rows()));
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  RngStream rng(derive_seed(seed, kTestImages));
  return sample_images(prototypes, all, kTestPerClass, spec.noise_sigma, rng);
}

Episode sample_episode(const RowMatrix& prototypes, const DomainSpec& spec, int shots, std::uint64_t seed) {
  spec.validate();
  if (shots < 1) throw ConfigError("sample_episode: shots must be >= 1");
  if (prototypes.rows() != spec.num_classes || prototypes.cols() != spec.feat_dim)
    throw DimensionError("sample_episode: prototypes do not match the domain spec");
  Episode ep;
  ep.shots = shots;
  std::tie(ep.base_classes, ep.new_classes) = split_base_new(spec.num_classes, spec.seed);
  RngStream train_rng(derive_seed(seed, kTrainImages));
  ep.train = sample_images(prototypes, ep.base_classes, shots, spec.noise_sigma, train_rng);
  ep.test = sample_test_split(prototypes, spec, seed);
  return ep;
}

}  // namespace gradalign
