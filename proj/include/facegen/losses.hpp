#pragma once

#include <cmath>

#include "facegen/autodiff.hpp"

// The five loss terms, normalized to minimization form.
//
// The adversarial and classification objectives are often written as
// log-likelihoods to be maximized; everything here is negated so that both
// players minimize, and the generator uses the non-saturating -log D(G(z,c))
// rather than log(1 - D(G(z,c))). Under this convention all five terms are
// non-negative and
//   total_d = cls_d + lambda_adv * adv_d + lambda_gp * gp_d
//   total_g = lambda_adv * adv_g + cls_g.
//
// Scores are probabilities clamped to [1e-7, 1 - 1e-7] before the log so
// the terms stay finite.

namespace facegen::training {

namespace ad = facegen::autodiff;

constexpr double kScoreClamp = 1e-7;

struct LossWeights {
  double lambda_adv = 34.0;
  double lambda_gp = 0.5;

  void validate() const {
    if (lambda_adv < 0 || lambda_gp < 0)
      throw ValidationError("loss weights must be non-negative");
  }
};

struct LossBundle {
  double adv_d = 0, cls_d = 0, gp_d = 0, adv_g = 0, cls_g = 0;
  double total_d = 0, total_g = 0;
};

// ---------------------------------------------------------------------------
// Plain free functions over score arrays (the reference surface; the graph
// builders below produce the same values to within summation order).
// ---------------------------------------------------------------------------

template <class S>
S clamp_score(S p) {
  return std::min(S(1) - S(kScoreClamp), std::max(S(kScoreClamp), p));
}

// mean over the batch of -log(real_i) - log(1 - fake_i)
template <class S>
S adv_loss_d(const ad::DenseMat<S>& real_scores, const ad::DenseMat<S>& fake_scores) {
  if (real_scores.size() == 0 || fake_scores.size() == 0)
    throw ValidationError("adv_loss_d: empty score batch");
  S real_term = 0, fake_term = 0;
  for (Eigen::Index i = 0; i < real_scores.size(); ++i)
    real_term -= std::log(clamp_score(real_scores.data()[i]));
  for (Eigen::Index i = 0; i < fake_scores.size(); ++i)
    fake_term -= std::log(S(1) - clamp_score(fake_scores.data()[i]));
  return real_term / S(real_scores.size()) + fake_term / S(fake_scores.size());
}

// mean of -log(fake_i): the non-saturating generator objective
template <class S>
S adv_loss_g(const ad::DenseMat<S>& fake_scores) {
  if (fake_scores.size() == 0) throw ValidationError("adv_loss_g: empty score batch");
  S acc = 0;
  for (Eigen::Index i = 0; i < fake_scores.size(); ++i)
    acc -= std::log(clamp_score(fake_scores.data()[i]));
  return acc / S(fake_scores.size());
}

// Mean binary cross-entropy over attributes and batch. `predicted` and
// `target` are attr x batch; targets must be hard {0,1}.
template <class S>
S cls_loss(const ad::DenseMat<S>& predicted, const ad::DenseMat<S>& target) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols())
    throw ValidationError("cls_loss: shape mismatch");
  if (predicted.size() == 0) throw ValidationError("cls_loss: empty batch");
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (target.data()[i] != S(0) && target.data()[i] != S(1))
      throw ValidationError("cls_loss: target is not hard (entries must be 0 or 1)");
  S acc = 0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    const S p = clamp_score(predicted.data()[i]);
    const S t = target.data()[i];
    acc -= t * std::log(p) + (S(1) - t) * std::log(S(1) - p);
  }
  return acc / S(predicted.size());
}

// ---------------------------------------------------------------------------
// Graph builders (same formulas, differentiable)
// ---------------------------------------------------------------------------

template <class S>
ad::Var<S> clamp_scores_node(const ad::Var<S>& p) {
  return ad::clamp(p, S(kScoreClamp), S(1) - S(kScoreClamp));
}

template <class S>
ad::Var<S> adv_loss_d_node(const ad::Var<S>& real_scores, const ad::Var<S>& fake_scores) {
  auto real = clamp_scores_node(real_scores);
  auto fake = clamp_scores_node(fake_scores);
  auto ones = ad::constant<S>(ad::DenseMat<S>::Constant(fake->value.rows(), fake->value.cols(), S(1)));
  auto real_term = ad::neg(ad::mean_all(ad::log_(real)));
  auto fake_term = ad::neg(ad::mean_all(ad::log_(ad::sub(ones, fake))));
  return ad::add(real_term, fake_term);
}

template <class S>
ad::Var<S> adv_loss_g_node(const ad::Var<S>& fake_scores) {
  return ad::neg(ad::mean_all(ad::log_(clamp_scores_node(fake_scores))));
}

template <class S>
ad::Var<S> cls_loss_node(const ad::Var<S>& predicted, const ad::Var<S>& target_const) {
  auto p = clamp_scores_node(predicted);
  auto ones = ad::constant<S>(ad::DenseMat<S>::Constant(p->value.rows(), p->value.cols(), S(1)));
  auto pos = ad::mul(target_const, ad::log_(p));
  auto neg_part = ad::mul(ad::sub(ones, target_const), ad::log_(ad::sub(ones, p)));
  return ad::neg(ad::mean_all(ad::add(pos, neg_part)));
}

// Per-example L2 norms of a gradient laid out feature x batch, then the
// mean squared distance of those norms from 1. A tiny epsilon inside the
// square root keeps the derivative finite at zero gradient.
template <class S>
ad::Var<S> gradient_penalty_node(const ad::Var<S>& grad_wrt_input) {
  auto sq = ad::mul(grad_wrt_input, grad_wrt_input);
  auto norms = ad::sqrt_(ad::scalar_add(ad::colwise_sum(sq), S(1e-12)));
  auto shifted = ad::scalar_add(norms, S(-1));
  return ad::mean_all(ad::mul(shifted, shifted));
}

}  // namespace facegen::training
