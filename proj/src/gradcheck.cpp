// SPDX-License-Identifier: Apache-2.0
#include "gradalign/gradcheck.hpp"

#include <algorithm>

#include "gradalign/losses.hpp"

namespace gradalign {

bool GradCheckReport::all_pass() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.pass; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.rel_error);
  return m;
}

double relative_error(const Eigen::Ref<const Vector>& analytic, const Eigen::Ref<const Vector>& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

namespace {

int uniform_int(RngStream& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
}

double step_for(const Eigen::Ref<const Vector>& x) { return 1e-5 * (1.0 + x.lpNorm<Eigen::Infinity>()); }

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, int instances, double tolerance, double fault) {
  GradCheckReport report;
  report.tolerance = tolerance;
  RngStream rng(seed);

  auto record = [&](const char* name, int instance, Vector analytic, const Vector& numeric) {
    if (fault != 0.0 && analytic.size() > 0) analytic[0] += fault * std::max(analytic.norm(), 1e-12);
    const double err = relative_error(analytic, numeric);
    report.cases.push_back({name, instance, err, err <= tolerance});
  };

  for (int inst = 0; inst < instances; ++inst) {
    VlmDims d;
    d.context_len = uniform_int(rng, 1, 4);
    d.hand_len = uniform_int(rng, 0, d.context_len);
    d.tok_dim = uniform_int(rng, 2, 8);
    d.feat_dim = uniform_int(rng, 2, 16);
    d.num_classes = uniform_int(rng, 2, 5);
    d.tau = 0.05 + 0.95 * rng.uniform();
    d.seed = rng.next_u64();
    const FrozenVLM vlm = FrozenVLM::random(d);

    // Move away from the teacher so the KL gradient is informative.
    PromptState prompt = init_prompt(vlm);
    prompt.flat() += sample_gaussian(rng, prompt.v.size(), 0.0, 0.5);

    const int n = uniform_int(rng, 1, 6);
    Batch batch{RowMatrix(n, d.feat_dim), {}};
    for (int r = 0; r < n; ++r) {
      Vector x = sample_gaussian(rng, d.feat_dim, 0.0, 1.0);
      batch.features.row(r) = (x / x.norm()).transpose();
      batch.labels.push_back(uniform_int(rng, 0, d.num_classes - 1));
    }

    auto with_prompt = [&](auto loss) {
      return [&, loss](const Vector& v) {
        PromptState p{prompt.v};
        p.flat() = v;
        return loss(vlm, p, batch);
      };
    };
    const Vector v0 = prompt.flat();
    const double h = step_for(v0);
    const GradPair g = grad_pair(vlm, prompt, batch);
    record("ce", inst, g.g_ce,
           finite_diff_grad(with_prompt([](const auto& m, const auto& p, const auto& b) { return batch_ce_loss(m, p, b); }),
                            v0, h));
    record("kl", inst, g.g_kl,
           finite_diff_grad(with_prompt([](const auto& m, const auto& p, const auto& b) { return batch_kl_loss(m, p, b); }),
                            v0, h));

    const double alpha = 0.01;
    const Vector v_zs = init_prompt(vlm).flat();
    record("l2reg", inst, grad_l2reg(v0, v_zs, alpha),
           finite_diff_grad([&](const Vector& v) { return alpha * (v - v_zs).norm(); }, v0, h));

    CosineClassifier cls = init_cosine_classifier(vlm, rng.next_u64());
    const Vector w0 = cls.flat();
    const double hw = step_for(w0);
    auto with_cls = [&](auto loss) {
      return [&, loss](const Vector& w) {
        CosineClassifier c{cls.weights};
        c.flat() = w;
        return loss(vlm, c, batch);
      };
    };
    const GradPair gc = grad_pair(vlm, cls, batch);
    record("classifier_ce", inst, gc.g_ce,
           finite_diff_grad(with_cls([](const auto& m, const auto& c, const auto& b) { return batch_ce_loss(m, c, b); }),
                            w0, hw));
    record("classifier_kl", inst, gc.g_kl,
           finite_diff_grad(with_cls([](const auto& m, const auto& c, const auto& b) { return batch_kl_loss(m, c, b); }),
                            w0, hw));
  }
  return report;
}

}  // namespace gradalign
