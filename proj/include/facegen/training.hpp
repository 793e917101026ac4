#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "facegen/checkpoint.hpp"
#include "facegen/losses.hpp"
#include "facegen/nets.hpp"
#include "facegen/rng.hpp"
#include "facegen/tagspace.hpp"

// DRAGAN-regularized training with the auxiliary attribute classifier.
//
// Each step runs one discriminator update followed by one generator update
// on freshly sampled noise and conditions (simultaneous gradient descent,
// 1:1). The discriminator objective adds a gradient penalty on points
// perturbed around the real batch, pushing the per-example gradient norm of
// the pre-sigmoid adversarial logit toward 1.
//
// Determinism: every random draw in step k comes from streams derived from
// (seed, role, k), so a checkpoint needs only the step counter, parameters,
// optimizer moments and normalization statistics to resume bit-exactly.

namespace facegen::training {

struct TrainConfig {
  int batch_size = 64;
  double lr_init = 0.0002;
  long lr_decay_start = 50000;
  double lr_decay_factor = 0.95;   // applied every lr_decay_interval steps past the start
  long lr_decay_interval = 1000;
  double lr_floor = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double perturb_alpha = 0.5;
  std::uint64_t seed = 1;
  std::string cls_reduction = "average";  // or "sum" over the 34 attributes

  void validate() const {
    if (batch_size < 2)
      throw ValidationError("train config: batch_size must be at least 2 (perturbation uses the batch std)");
    if (lr_init <= 0 || lr_decay_factor <= 0 || lr_decay_factor > 1)
      throw ValidationError("train config: bad learning-rate schedule");
    if (lr_decay_interval <= 0) throw ValidationError("train config: lr_decay_interval must be positive");
    if (perturb_alpha < 0) throw ValidationError("train config: perturb_alpha must be non-negative");
    if (cls_reduction != "average" && cls_reduction != "sum")
      throw ValidationError("train config: cls_reduction must be 'average' or 'sum'");
  }

  nlohmann::json to_json() const {
    return {{"batch_size", batch_size},       {"lr_init", lr_init},
            {"lr_decay_start", lr_decay_start}, {"lr_decay_factor", lr_decay_factor},
            {"lr_decay_interval", lr_decay_interval}, {"lr_floor", lr_floor},
            {"adam_beta1", adam_beta1},       {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},           {"perturb_alpha", perturb_alpha},
            {"seed", seed},                   {"cls_reduction", cls_reduction}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", 64);
    c.lr_init = j.value("lr_init", 0.0002);
    c.lr_decay_start = j.value("lr_decay_start", 50000L);
    c.lr_decay_factor = j.value("lr_decay_factor", 0.95);
    c.lr_decay_interval = j.value("lr_decay_interval", 1000L);
    c.lr_floor = j.value("lr_floor", 1e-5);
    c.adam_beta1 = j.value("adam_beta1", 0.5);
    c.adam_beta2 = j.value("adam_beta2", 0.999);
    c.adam_eps = j.value("adam_eps", 1e-8);
    c.perturb_alpha = j.value("perturb_alpha", 0.5);
    c.seed = j.value("seed", std::uint64_t(1));
    c.cls_reduction = j.value("cls_reduction", std::string("average"));
    c.validate();
    return c;
  }
};

// Exponential decay in lr_decay_interval chunks once past lr_decay_start.
inline double lr_at(const TrainConfig& cfg, long step) {
  long k = 0;
  if (step > cfg.lr_decay_start) k = (step - cfg.lr_decay_start) / cfg.lr_decay_interval;
  return std::max(cfg.lr_floor, cfg.lr_init * std::pow(cfg.lr_decay_factor, static_cast<double>(k)));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const nets::ParamList<S>& params) {
    params_ = params;
    m_.clear();
    v_.clear();
    for (const auto& [name, p] : params_) {
      m_.push_back(ad::DenseMat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(ad::DenseMat<S>::Zero(p->value.rows(), p->value.cols()));
    }
    t_ = 0;
  }

  void step(const ad::GradMap<S>& grads, double lr) {
    ++t_;
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S corr1 = S(1) - static_cast<S>(std::pow(beta1_, t_));
    const S corr2 = S(1) - static_cast<S>(std::pow(beta2_, t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto g = ad::grad_of(grads, params_[i].second);
      if (!g) continue;  // parameter unused in this graph
      const auto& gv = g->value;
      m_[i] = b1 * m_[i] + (S(1) - b1) * gv;
      v_[i] = (b2 * v_[i].array() + (S(1) - b2) * gv.array().square()).matrix();
      params_[i].second->value.array() -=
          static_cast<S>(lr) * (m_[i].array() / corr1) / ((v_[i].array() / corr2).sqrt() + static_cast<S>(eps_));
    }
  }

  long t() const { return t_; }

  void save(ckpt::TensorStore<S>& store, const std::string& prefix) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      store.tensors[prefix + ".m." + params_[i].first] = m_[i];
      store.tensors[prefix + ".v." + params_[i].first] = v_[i];
    }
    store.meta[prefix + "_t"] = t_;
  }

  void load(const ckpt::TensorStore<S>& store, const std::string& prefix) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = store.tensors.at(prefix + ".m." + params_[i].first);
      v_[i] = store.tensors.at(prefix + ".v." + params_[i].first);
    }
    t_ = store.meta.at(prefix + "_t").template get<long>();
  }

 private:
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  nets::ParamList<S> params_;
  std::vector<ad::DenseMat<S>> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// DRAGAN perturbation and gradient penalty
// ---------------------------------------------------------------------------

// x_hat = x + alpha * sigma_batch * u with u ~ U(0,1) per element and
// sigma_batch the scalar (population) std of every entry in the batch.
template <class S>
ad::DenseMat<S> perturb(const ad::DenseMat<S>& real, double alpha, Rng& rng) {
  if (real.cols() < 2) throw ValidationError("perturb: need a batch of at least 2 examples");
  const double mean = static_cast<double>(real.template cast<double>().mean());
  const double var = (real.template cast<double>().array() - mean).square().mean();
  const double sigma = std::sqrt(var);
  ad::DenseMat<S> out = real;
  const S scale = static_cast<S>(alpha * sigma);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.data()[i] += scale * static_cast<S>(rng.uniform());
  return out;
}

// Builds the penalty node mean((||d adv_logit / d x_hat||_2 - 1)^2) for a
// perturbed batch laid out feature x batch. The inner gradient is obtained
// with a first backward pass that itself emits graph nodes, so the returned
// node is differentiable with respect to the discriminator parameters.
template <class S>
ad::Var<S> gradient_penalty(nets::DiscriminatorModel<S>& d, const ad::DenseMat<S>& perturbed,
                            long step_index = -1) {
  auto x_hat = ad::leaf<S>(perturbed);
  auto out = d.discriminate(x_hat);
  // Each example's logit depends only on its own column, so the gradient of
  // the batch sum w.r.t. x_hat stacks the per-example gradients.
  auto total = ad::sum_all(out.adv_logit);
  auto grads = ad::backward(total);
  auto g = ad::grad_of(grads, x_hat);
  if (!g) throw NumericalError("gradient_penalty: discriminator ignores its input");
  if (!g->value.allFinite())
    throw NumericalError("gradient_penalty: non-finite input gradient at step " + std::to_string(step_index));
  return gradient_penalty_node(g);
}

// Scalar convenience used by tests and diagnostics.
template <class S>
S gradient_penalty_value(nets::DiscriminatorModel<S>& d, const ad::DenseMat<S>& perturbed) {
  return gradient_penalty<S>(d, perturbed)->value(0, 0);
}

// ---------------------------------------------------------------------------
// Data access for the loop
// ---------------------------------------------------------------------------

template <class S>
class TrainingSet {
 public:
  virtual ~TrainingSet() = default;
  virtual Eigen::Index size() const = 0;
  virtual int data_dim() const = 0;
  virtual int cond_dim() const = 0;  // 0 for unconditioned data
  // Writes one example into the given columns.
  virtual void fetch(Eigen::Index index, Eigen::Ref<Eigen::Matrix<S, Eigen::Dynamic, 1>> data,
                     Eigen::Ref<Eigen::Matrix<S, Eigen::Dynamic, 1>> tags) const = 0;
};

struct TrainHooks {
  std::function<void(long step, const LossBundle& losses, double lr)> on_step;
  long checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_dir;
  long max_steps = 1;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

template <class S>
class Trainer {
 public:
  Trainer(nets::GeneratorModel<S>& g, nets::DiscriminatorModel<S>& d, TrainConfig config,
          LossWeights weights, std::optional<tagspace::LabelPrior> cond_prior = std::nullopt)
      : g_(g), d_(d), cfg_(std::move(config)), weights_(weights), cond_prior_(std::move(cond_prior)) {
    cfg_.validate();
    weights_.validate();
    if (g_.cond_dim() != d_.cls_dim())
      throw ValidationError("trainer: generator condition size and classifier head disagree");
    if (g_.cond_dim() > 0 && g_.cond_dim() != tagspace::kTagDim)
      throw ValidationError("trainer: conditional models use the 34-dim tag space");
    if (g_.cond_dim() > 0 && !cond_prior_)
      throw ValidationError("trainer: conditional models need a label prior");
    if (g_.data_dim() != d_.data_dim())
      throw ValidationError("trainer: generator output and discriminator input disagree");
    opt_g_ = Adam<S>(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);
    opt_d_ = Adam<S>(cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps);
    opt_g_.attach(g_.named_params());
    opt_d_.attach(d_.named_params());
  }

  long step_count() const { return step_; }
  double current_lr() const { return lr_at(cfg_, step_); }
  const TrainConfig& config() const { return cfg_; }
  const LossWeights& weights() const { return weights_; }

  // One discriminator update followed by one generator update.
  LossBundle step(const ad::DenseMat<S>& real, const ad::DenseMat<S>& tags) {
    if (real.cols() < 2) throw ValidationError("train step: batch must have at least 2 examples");
    if (real.rows() != d_.data_dim()) throw ValidationError("train step: real batch has wrong feature size");
    const bool conditional = g_.cond_dim() > 0;
    if (conditional && (tags.rows() != g_.cond_dim() || tags.cols() != real.cols()))
      throw ValidationError("train step: tag batch shape mismatch");
    const double lr = lr_at(cfg_, step_);
    const Eigen::Index batch = real.cols();
    LossBundle out;

    // --- discriminator update -------------------------------------------
    {
      Rng noise_rng = step_rng(kRoleNoiseD);
      Rng cond_rng = step_rng(kRoleCondD);
      Rng perturb_rng = step_rng(kRolePerturb);
      ad::DenseMat<S> z = draw_noise(noise_rng, batch);
      ad::DenseMat<S> c = draw_conditions(cond_rng, batch);
      ad::DenseMat<S> fake_value = g_.generate(z, c, /*train=*/true)->value;  // detached for D

      auto real_out = d_.discriminate(ad::constant<S>(real));
      auto fake_out = d_.discriminate(ad::constant<S>(std::move(fake_value)));
      auto adv = adv_loss_d_node(ad::sigmoid(real_out.adv_logit), ad::sigmoid(fake_out.adv_logit));

      ad::Var<S> cls;
      if (conditional) {
        auto real_cls = cls_loss_node(ad::sigmoid(real_out.cls_logit), ad::constant<S>(tags));
        auto fake_cls = cls_loss_node(ad::sigmoid(fake_out.cls_logit), ad::constant<S>(c));
        cls = ad::add(real_cls, fake_cls);
        if (cfg_.cls_reduction == "sum") cls = ad::scalar_mul(cls, static_cast<S>(g_.cond_dim()));
      } else {
        cls = ad::constant_scalar<S>(0);
      }

      auto gp = gradient_penalty(d_, perturb(real, cfg_.perturb_alpha, perturb_rng), step_);
      auto total = ad::add(cls, ad::add(ad::scalar_mul(adv, static_cast<S>(weights_.lambda_adv)),
                                        ad::scalar_mul(gp, static_cast<S>(weights_.lambda_gp))));
      auto grads = ad::backward(total);
      out.adv_d = static_cast<double>(adv->value(0, 0));
      out.cls_d = static_cast<double>(cls->value(0, 0));
      out.gp_d = static_cast<double>(gp->value(0, 0));
      out.total_d = static_cast<double>(total->value(0, 0));
      opt_d_.step(grads, lr);
    }

    // --- generator update (fresh z, c) -----------------------------------
    {
      Rng noise_rng = step_rng(kRoleNoiseG);
      Rng cond_rng = step_rng(kRoleCondG);
      ad::DenseMat<S> z = draw_noise(noise_rng, batch);
      ad::DenseMat<S> c = draw_conditions(cond_rng, batch);
      auto fake = g_.generate(z, c, /*train=*/true);
      auto fake_out = d_.discriminate(fake);
      auto adv = adv_loss_g_node(ad::sigmoid(fake_out.adv_logit));
      ad::Var<S> cls;
      if (conditional) {
        cls = cls_loss_node(ad::sigmoid(fake_out.cls_logit), ad::constant<S>(c));
        if (cfg_.cls_reduction == "sum") cls = ad::scalar_mul(cls, static_cast<S>(g_.cond_dim()));
      } else {
        cls = ad::constant_scalar<S>(0);
      }
      auto total = ad::add(ad::scalar_mul(adv, static_cast<S>(weights_.lambda_adv)), cls);
      auto grads = ad::backward(total);
      out.adv_g = static_cast<double>(adv->value(0, 0));
      out.cls_g = static_cast<double>(cls->value(0, 0));
      out.total_g = static_cast<double>(total->value(0, 0));
      opt_g_.step(grads, lr);
    }

    if (!std::isfinite(out.total_d) || !std::isfinite(out.total_g))
      throw NumericalError("train step " + std::to_string(step_) + ": non-finite loss (adv_d=" +
                           std::to_string(out.adv_d) + " cls_d=" + std::to_string(out.cls_d) + " gp_d=" +
                           std::to_string(out.gp_d) + " adv_g=" + std::to_string(out.adv_g) + " cls_g=" +
                           std::to_string(out.cls_g) + ")");
    ++step_;
    return out;
  }

  // Shuffled-epoch loop. Epoch permutations derive from (seed, epoch), so a
  // resumed run walks the same sequence it would have seen uninterrupted.
  void train(const TrainingSet<S>& data, const TrainHooks& hooks) {
    if (data.size() == 0) throw ValidationError("train: dataset is empty");
    if (data.data_dim() != d_.data_dim()) throw ValidationError("train: dataset feature size mismatch");
    const Eigen::Index n = data.size();
    const Eigen::Index batch = cfg_.batch_size;
    const Eigen::Index batches_per_epoch = std::max<Eigen::Index>(1, n / batch);

    ad::DenseMat<S> real(data.data_dim(), batch);
    ad::DenseMat<S> tags(data.cond_dim(), batch);
    while (step_ < hooks.max_steps) {
      const long epoch = step_ / batches_per_epoch;
      const long batch_in_epoch = step_ % batches_per_epoch;
      std::vector<Eigen::Index> perm = epoch_permutation(n, epoch);
      for (long bi = batch_in_epoch; bi < batches_per_epoch && step_ < hooks.max_steps; ++bi) {
        for (Eigen::Index j = 0; j < batch; ++j) {
          const Eigen::Index idx = perm[(bi * batch + j) % n];
          data.fetch(idx, real.col(j), tags.col(j));
        }
        const double lr = lr_at(cfg_, step_);
        LossBundle losses = step(real, tags);
        if (hooks.on_step) hooks.on_step(step_ - 1, losses, lr);
        if (hooks.checkpoint_every > 0 && step_ % hooks.checkpoint_every == 0)
          save_checkpoint(checkpoint_path(hooks.checkpoint_dir, step_));
      }
    }
  }

  // --- checkpointing -----------------------------------------------------

  void save_checkpoint(const std::string& path) {
    ckpt::TensorStore<S> store;
    for (const auto& [name, p] : g_.named_params()) store.tensors[name] = p->value;
    for (const auto& [name, p] : d_.named_params()) store.tensors[name] = p->value;
    for (const auto& [name, buf] : nets::generator_buffers<S>(g_)) store.tensors[name] = *buf;
    store.meta["step"] = step_;
    store.meta["config"] = cfg_.to_json();
    store.meta["weights"] = {{"lambda_adv", weights_.lambda_adv}, {"lambda_gp", weights_.lambda_gp}};
    store.meta["generator_arch"] = nets::generator_manifest<S>(g_);
    opt_g_.save(store, "opt_g");
    opt_d_.save(store, "opt_d");
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    store.save(path);
  }

  void load_checkpoint(const std::string& path) {
    auto store = ckpt::TensorStore<S>::load(path);
    for (auto& [name, p] : g_.named_params()) p->value = store.tensors.at(name);
    for (auto& [name, p] : d_.named_params()) p->value = store.tensors.at(name);
    for (auto& [name, buf] : nets::generator_buffers<S>(g_)) *buf = store.tensors.at(name);
    step_ = store.meta.at("step").template get<long>();
    opt_g_.load(store, "opt_g");
    opt_d_.load(store, "opt_d");
  }

  static std::string checkpoint_path(const std::string& dir, long step) {
    return dir + "/ckpt_" + std::to_string(step) + ".fgt";
  }

 private:
  static constexpr std::uint64_t kRoleNoiseD = 0x6e644400;
  static constexpr std::uint64_t kRoleCondD = 0x63644400;
  static constexpr std::uint64_t kRolePerturb = 0x70657200;
  static constexpr std::uint64_t kRoleNoiseG = 0x6e674700;
  static constexpr std::uint64_t kRoleCondG = 0x63674700;
  static constexpr std::uint64_t kRoleData = 0x64617400;

  Rng step_rng(std::uint64_t role) const {
    return Rng(detail::mix64(detail::mix64(cfg_.seed ^ role) + static_cast<std::uint64_t>(step_)));
  }

  std::vector<Eigen::Index> epoch_permutation(Eigen::Index n, long epoch) const {
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(detail::mix64(detail::mix64(cfg_.seed ^ kRoleData) + static_cast<std::uint64_t>(epoch)));
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)))]);
    return perm;
  }

  ad::DenseMat<S> draw_noise(Rng& rng, Eigen::Index batch) const {
    ad::DenseMat<S> z(g_.noise_dim(), batch);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<S>(rng.normal());
    return z;
  }

  ad::DenseMat<S> draw_conditions(Rng& rng, Eigen::Index batch) const {
    if (g_.cond_dim() == 0) return ad::DenseMat<S>(0, batch);
    ad::DenseMat<S> c(g_.cond_dim(), batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const tagspace::TagVector v = tagspace::sample_condition(*cond_prior_, rng);
      for (int i = 0; i < tagspace::kTagDim; ++i) c(i, j) = static_cast<S>(v[i]);
    }
    return c;
  }

  nets::GeneratorModel<S>& g_;
  nets::DiscriminatorModel<S>& d_;
  TrainConfig cfg_;
  LossWeights weights_;
  std::optional<tagspace::LabelPrior> cond_prior_;
  Adam<S> opt_g_, opt_d_;
  long step_ = 0;
};

}  // namespace facegen::training
