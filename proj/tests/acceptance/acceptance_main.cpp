// Acceptance suite: every release criterion as one pass/fail line.
//
//   ./acceptance            runs everything
//   ./acceptance 5 6        runs criteria 5 and 6 only
//
// Paper-scale numbers (full-corpus training, published FID/precision
// tables) need the original proprietary dataset and are out of desk reach;
// the suite pins closed forms, independent oracles, and desk-scale training
// surrogates instead.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "facegen/dataset.hpp"
#include "facegen/digest.hpp"
#include "facegen/evaluation.hpp"
#include "facegen/export_bundle.hpp"
#include "facegen/losses.hpp"
#include "facegen/manifest_set.hpp"
#include "facegen/nets.hpp"
#include "facegen/server.hpp"
#include "facegen/training.hpp"
#include "../support/disc_world.hpp"
#include "../support/toy_models.hpp"

// after Eigen: resolv.h (via httplib) leaks a `_res` macro that collides
// with Eigen's kernel parameter names
#include <httplib.h>

using namespace facegen;
using namespace facegen::testsupport;
namespace ad = facegen::autodiff;
namespace fs = std::filesystem;
using Mat = ad::DenseMat<double>;

namespace {

struct Criterion {
  int number;
  std::string name;
  std::function<void(std::ostringstream&)> run;  // throws on failure
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// 1. loss oracle suite
// ---------------------------------------------------------------------------
void criterion_losses(std::ostringstream& detail) {
  using namespace facegen::training;
  Mat half(1, 1);
  half(0, 0) = 0.5;
  require(std::abs(adv_loss_d<double>(half, half) - 2 * std::log(2.0)) < 1e-9,
          "adv_loss_d([0.5],[0.5]) != 2 ln 2");
  Mat p_half = Mat::Constant(34, 4, 0.5);
  Mat t = Mat::Zero(34, 4);
  for (int j = 0; j < 4; ++j) {
    t(j, j) = 1.0;
    t(24 + j, j) = 1.0;
  }
  require(std::abs(cls_loss<double>(p_half, t) - std::log(2.0)) < 1e-9, "cls_loss at p=0.5 != ln 2");

  Rng rng(1001);
  double max_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int batch = 2 + static_cast<int>(rng.uniform_int(14));
    Mat real(1, batch), fake(1, batch);
    for (int i = 0; i < batch; ++i) {
      real(0, i) = 0.02 + 0.96 * rng.uniform();
      fake(0, i) = 0.02 + 0.96 * rng.uniform();
    }
    double advd = 0, advg = 0;
    for (int i = 0; i < batch; ++i) {
      advd += -std::log(real(0, i)) - std::log(1.0 - fake(0, i));
      advg += -std::log(fake(0, i));
    }
    advd /= batch;
    advg /= batch;
    max_err = std::max(max_err, std::abs(adv_loss_d<double>(real, fake) - advd));
    max_err = std::max(max_err, std::abs(adv_loss_g<double>(fake) - advg));

    Mat probs(34, batch);
    Mat tags = Mat::Zero(34, batch);
    for (int j = 0; j < batch; ++j) {
      for (int i = 0; i < 34; ++i) probs(i, j) = 0.02 + 0.96 * rng.uniform();
      tags(static_cast<Eigen::Index>(rng.uniform_int(13)), j) = 1.0;
      tags(24 + static_cast<Eigen::Index>(rng.uniform_int(10)), j) = 1.0;
      for (int b = 13; b < 24; ++b)
        if (rng.bernoulli(0.25)) tags(b, j) = 1.0;
    }
    double cls = 0;
    for (int j = 0; j < batch; ++j)
      for (int i = 0; i < 34; ++i)
        cls += -(tags(i, j) * std::log(probs(i, j)) + (1 - tags(i, j)) * std::log(1 - probs(i, j)));
    cls /= 34.0 * batch;
    max_err = std::max(max_err, std::abs(cls_loss<double>(probs, tags) - cls));
  }

  // gp term against the per-example loop with a known-gradient discriminator
  Mat w(1, 8);
  Rng wrng(1002);
  for (int i = 0; i < 8; ++i) w(0, i) = wrng.normal();
  LinearDiscriminator<double> lin(w);
  const double norm = w.norm();
  Mat x = random_mat(wrng, 8, 6);
  const double gp = facegen::training::gradient_penalty_value<double>(lin, x);
  double gp_oracle = 0;
  for (int j = 0; j < 6; ++j) gp_oracle += (norm - 1.0) * (norm - 1.0);
  gp_oracle /= 6;
  max_err = std::max(max_err, std::abs(gp - gp_oracle));
  require(max_err < 1e-9, "loop-oracle mismatch " + std::to_string(max_err));
  detail << "max |engine - loop oracle| = " << max_err;
}

// ---------------------------------------------------------------------------
// 2. gradient-penalty closed form + finite differences
// ---------------------------------------------------------------------------
void criterion_penalty(std::ostringstream& detail) {
  using namespace facegen::training;
  Rng rng(1003);
  const Mat x = random_mat(rng, 10, 5);

  Mat w5 = Mat::Zero(1, 10);
  w5(0, 0) = 3.0;
  w5(0, 1) = 4.0;
  LinearDiscriminator<double> d5(w5);
  const double p5 = gradient_penalty_value<double>(d5, x);
  require(std::abs(p5 - 16.0) < 1e-10, "||w||=5 penalty " + std::to_string(p5) + " != 16");

  Mat w1 = Mat::Zero(1, 10);
  w1(0, 3) = 1.0;
  LinearDiscriminator<double> d1(w1);
  const double p1 = gradient_penalty_value<double>(d1, x);
  require(std::abs(p1) < 1e-10, "||w||=1 penalty " + std::to_string(p1) + " != 0");

  MlpDiscriminator<double> mlp(10, 12);
  nets::init_weights<double>(mlp, 1004, 0.4);
  const double penalty = gradient_penalty_value<double>(mlp, x);
  const double h = 1e-6;
  double fd_penalty = 0;
  for (int j = 0; j < 5; ++j) {
    double norm_sq = 0;
    for (int i = 0; i < 10; ++i) {
      Mat xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double lp = mlp.discriminate(ad::constant<double>(xp)).adv_logit->value(0, j);
      const double lm = mlp.discriminate(ad::constant<double>(xm)).adv_logit->value(0, j);
      const double g = (lp - lm) / (2 * h);
      norm_sq += g * g;
    }
    fd_penalty += (std::sqrt(norm_sq) - 1.0) * (std::sqrt(norm_sq) - 1.0);
  }
  fd_penalty /= 5;
  const double rel = std::abs(penalty - fd_penalty) / std::max(std::abs(fd_penalty), 1e-12);
  require(rel < 1e-3, "finite-difference relative error " + std::to_string(rel));
  detail << "closed forms exact; FD relative error = " << rel;
}

// ---------------------------------------------------------------------------
// 3. Frechet closed forms
// ---------------------------------------------------------------------------
void criterion_frechet(std::ostringstream& detail) {
  using namespace facegen::evaluation;
  Rng rng(1005);
  Eigen::MatrixXd f(80, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  const auto m = fit_moments<double>(f);
  const double self = frechet_distance<double>(m, m);
  require(std::abs(self) < 1e-6, "self distance " + std::to_string(self));

  GaussianMoments<double> a, b;
  a.mean = Eigen::VectorXd::Zero(1);
  a.covariance = Eigen::MatrixXd::Identity(1, 1);
  b.mean = Eigen::VectorXd::Constant(1, 2.0);
  b.covariance = Eigen::MatrixXd::Identity(1, 1);
  require(std::abs(frechet_distance<double>(a, b) - 4.0) < 1e-9, "1-D mean case != 4");
  b.mean = Eigen::VectorXd::Zero(1);
  b.covariance = Eigen::MatrixXd::Identity(1, 1) * 4.0;
  require(std::abs(frechet_distance<double>(a, b) - 1.0) < 1e-9, "1-D variance case != 1");

  // random 3-D pair against a long-double symmetric-form evaluation through
  // an independently coded eigensolve (Jacobi) — mirrored from the unit
  // suite, with a fixed case frozen here
  Eigen::Vector3d mu_a(0.5, -1.0, 2.0), mu_b(-0.25, 0.75, 1.0);
  Eigen::Matrix3d ca, cb;
  ca << 2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.0;
  cb << 1.2, -0.2, 0.0, -0.2, 2.5, 0.4, 0.0, 0.4, 0.8;
  GaussianMoments<double> ga{mu_a, ca}, gb{mu_b, cb};
  // value computed by the long-double Jacobi oracle (tests/test_evaluation.cpp)
  const double frozen = 4.951705335653057867;
  const double got = frechet_distance<double>(ga, gb);
  require(std::abs(got - frozen) < 1e-6, "3-D case " + std::to_string(got) + " != oracle " + std::to_string(frozen));
  detail << "identity, two 1-D analytic cases, frozen 3-D oracle case all inside tolerance";
}

// ---------------------------------------------------------------------------
// 4. FID self-distance calibration
// ---------------------------------------------------------------------------
void criterion_fid_calibration(std::ostringstream& detail) {
  using namespace facegen::evaluation;
  // recorded bound, established by the 20 resampling trials below
  const std::string calib_path = std::string(FACEGEN_SOURCE_DIR) + "/calibration/fid_self_distance.json";
  std::ifstream cf(calib_path);
  require(static_cast<bool>(cf), "missing calibration file " + calib_path);
  const auto calib = nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(cf), {}));
  const double bound = calib.at("bound").get<double>();
  const int dim = calib.at("feature_dim").get<int>();
  const int half = calib.at("half_size").get<int>();

  // a single non-trivial Gaussian population, fixed seed
  Rng rng(calib.at("population_seed").get<std::uint64_t>());
  Eigen::MatrixXd mixing(dim, dim);
  for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = 0.4 * rng.normal();
  Eigen::MatrixXd population(2 * half, dim);
  for (int i = 0; i < 2 * half; ++i) {
    Eigen::VectorXd raw(dim);
    for (int j = 0; j < dim; ++j) raw(j) = rng.normal();
    population.row(i) = (mixing * raw).transpose();
  }

  auto split_fid = [&](std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(2 * half));
    std::iota(idx.begin(), idx.end(), 0);
    Rng r(seed);
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[r.uniform_int(i + 1)]);
    Eigen::MatrixXd a(half, dim), b(half, dim);
    for (int i = 0; i < half; ++i) {
      a.row(i) = population.row(idx[static_cast<std::size_t>(i)]);
      b.row(i) = population.row(idx[static_cast<std::size_t>(half + i)]);
    }
    return frechet_distance<double>(fit_moments<double>(a), fit_moments<double>(b));
  };

  // the 20 recorded resampling trials must stay under the recorded bound
  double max_trial = 0;
  for (int t = 0; t < 20; ++t) max_trial = std::max(max_trial, split_fid(100 + static_cast<std::uint64_t>(t)));
  require(max_trial <= bound, "resampling max " + std::to_string(max_trial) + " exceeds recorded bound " +
                                  std::to_string(bound));
  // and a fresh split not used for calibration
  const double fresh = split_fid(9999);
  require(fresh <= bound, "fresh split " + std::to_string(fresh) + " exceeds bound " + std::to_string(bound));
  detail << "20-trial max " << max_trial << ", fresh split " << fresh << ", bound " << bound;
}

// ---------------------------------------------------------------------------
// 5. DRAGAN stability surrogate: 8-Gaussian ring, 3 seeds
// ---------------------------------------------------------------------------
void criterion_ring(std::ostringstream& detail) {
  using namespace facegen::training;
  for (std::uint64_t seed : {11u, 22u, 33u}) {
    GaussianRingSet<double> ring(8, 1.5, 0.1, 4096, 500 + seed);
    MlpGenerator<double> g(8, 2, 64);
    MlpDiscriminator<double> d(2, 64);
    g.he_init_all(600 + seed);
    d.he_init_all(700 + seed);

    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.lr_init = 1e-3;
    cfg.lr_decay_start = 1000000;  // no decay inside the surrogate
    cfg.seed = seed;
    Trainer<double> trainer(g, d, cfg, LossWeights{1.0, 0.5});

    TrainHooks hooks;
    hooks.max_steps = 5000;
    trainer.train(ring, hooks);

    // 10,000 generator samples; every mode needs >= 1% within 3 sigma
    Rng zrng(800 + seed);
    Mat z(8, 10000);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = zrng.normal();
    const Mat samples = nets::generate_images<double>(g, z, Mat(0, 10000), 512);
    std::vector<long> counts;
    const bool covered = all_modes_covered(ring, samples, 0.01, &counts);
    std::ostringstream cs;
    for (long c : counts) cs << c << " ";
    require(covered, "seed " + std::to_string(seed) + ": mode counts / 10000 = " + cs.str());
    detail << "seed " << seed << " counts [" << cs.str() << "] ";
  }
}

// ---------------------------------------------------------------------------
// 6. conditional learning surrogate: colored discs
// ---------------------------------------------------------------------------
void criterion_discs(std::ostringstream& detail) {
  using S = float;  // training surrogate runs single precision for speed
  using namespace facegen::training;

  DiscSet<S> data(2048, 901);
  nets::GeneratorSpec gs;
  gs.noise_dim = 24;
  gs.cond_dim = 34;
  gs.base_channels = 8;
  gs.base_spatial = 8;
  gs.n_resblocks = 2;
  gs.n_upscales = 2;
  gs.output_size = 32;
  nets::SrresnetGenerator<S> g(gs);
  nets::DiscriminatorSpec dsc;
  dsc.input_size = 32;
  dsc.n_resblocks = 4;
  dsc.base_channels = 8;
  dsc.max_channels = 32;
  nets::ResnetDiscriminator<S> d(dsc);
  nets::init_weights<S>(g, 902);
  nets::init_weights<S>(d, 903);

  // Desk-scale recipe: summed classifier loss with a small adversarial
  // weight gets the conditioning signal through within the 10k-step budget;
  // the learning rate decays from step 5000 so the distance curve settles
  // instead of oscillating.
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.lr_init = 2e-3;
  cfg.lr_decay_start = 5000;
  cfg.lr_decay_interval = 1000;
  cfg.lr_decay_factor = 0.7;
  cfg.lr_floor = 1e-4;
  cfg.cls_reduction = "sum";
  cfg.seed = 904;
  Trainer<S> trainer(g, d, cfg, LossWeights{2.0, 0.5}, disc_prior());

  // FID against the real discs every 1000 steps, grid-color features
  evaluation::GridColorExtractor extractor(3);
  std::vector<img::ImageU8> real_sample(data.images().begin(), data.images().begin() + 512);
  const Eigen::MatrixXd real_features = extractor.extract(real_sample);
  const auto real_moments = evaluation::fit_moments<double>(real_features);

  auto measure_fid = [&](std::uint64_t mseed) {
    Rng rng = Rng::stream(mseed, 0xf1d);
    Mat z64(gs.noise_dim, 512);
    ad::DenseMat<S> z(gs.noise_dim, 512), c(34, 512);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<S>(rng.normal());
    for (int j = 0; j < 512; ++j) {
      const auto cond = tagspace::sample_condition(disc_prior(), rng);
      for (int i = 0; i < 34; ++i) c(i, j) = static_cast<S>(cond[i]);
    }
    const auto cols = nets::generate_images<S>(g, z, c, 64);
    std::vector<img::ImageU8> fakes;
    fakes.reserve(512);
    for (int j = 0; j < 512; ++j) {
      Eigen::Matrix<S, Eigen::Dynamic, 1> col = cols.col(j);
      fakes.push_back(img::from_column<S>(col, 32, 32));
    }
    const auto fake_moments = evaluation::fit_moments<double>(extractor.extract(fakes));
    return evaluation::frechet_distance<double>(real_moments, fake_moments);
  };

  std::vector<double> fid_curve;
  fid_curve.push_back(measure_fid(0));
  TrainHooks hooks;
  const auto t0 = std::chrono::steady_clock::now();
  for (int chunk = 1; chunk <= 10; ++chunk) {
    hooks.max_steps = chunk * 1000;
    trainer.train(data, hooks);
    fid_curve.push_back(measure_fid(static_cast<std::uint64_t>(chunk)));
  }
  const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // trailing-5 moving average must be monotone non-increasing
  std::vector<double> trailing;
  for (std::size_t i = 4; i < fid_curve.size(); ++i) {
    double acc = 0;
    for (std::size_t k = i - 4; k <= i; ++k) acc += fid_curve[k];
    trailing.push_back(acc / 5);
  }
  for (std::size_t i = 1; i < trailing.size(); ++i) {
    std::ostringstream curve;
    for (double v : fid_curve) curve << v << " ";
    require(trailing[i] <= trailing[i - 1] + 1e-12,
            "trailing-5 FID average increased at index " + std::to_string(i) + "; curve: " + curve.str());
  }

  // per-label precision with the exact oracle judge, 20 samples per label
  DiscOracleJudge judge;
  evaluation::ConditionalGenerator generator = [&](const tagspace::TagVector& cond, Rng& rng) {
    ad::DenseMat<S> z(gs.noise_dim, 1), c(34, 1);
    for (int i = 0; i < gs.noise_dim; ++i) z(i, 0) = static_cast<S>(rng.normal());
    for (int i = 0; i < 34; ++i) c(i, 0) = static_cast<S>(cond[i]);
    const auto col = nets::generate_images<S>(g, z, c, 1);
    Eigen::Matrix<S, Eigen::Dynamic, 1> one = col.col(0);
    return img::from_column<S>(one, 32, 32);
  };
  const auto precision = evaluation::label_precision(generator, judge, disc_prior(), 20, 905);
  std::ostringstream ps;
  double min_color_precision = 1.0;
  for (int k = 0; k < kDiscColors; ++k) {
    const double p = precision[static_cast<std::size_t>(tagspace::kHairBegin + k)];
    min_color_precision = std::min(min_color_precision, p);
    ps << p << " ";
  }
  require(min_color_precision >= 0.9,
          "color precisions [" + ps.str() + "] minimum below 0.9");
  std::ostringstream curve;
  for (double v : fid_curve) curve << static_cast<long>(v * 1000) / 1000.0 << " ";
  detail << "precisions [" << ps.str() << "], FID curve [" << curve.str() << "], train time "
         << static_cast<long>(train_seconds) << "s";
}

// ---------------------------------------------------------------------------
// 7. sampler frequencies
// ---------------------------------------------------------------------------
void criterion_sampler(std::ostringstream& detail) {
  using namespace facegen::tagspace;
  LabelPrior uniform;
  Rng rng(1101);
  const int n = 100000;
  Eigen::Matrix<double, kTagDim, 1> counts = Eigen::Matrix<double, kTagDim, 1>::Zero();
  for (int i = 0; i < n; ++i) counts += sample_condition(uniform, rng);
  double worst = 0;
  for (int i = 0; i < kHairCount; ++i) worst = std::max(worst, std::abs(counts[i] / n - 1.0 / 13));
  for (int i = 0; i < kBinaryCount; ++i)
    worst = std::max(worst, std::abs(counts[kBinaryBegin + i] / n - 0.25));
  require(worst < 0.01, "training-prior frequency error " + std::to_string(worst));

  const LabelPrior empirical = LabelPrior::empirical_from_counts(taxonomy().published_counts);
  Rng rng2(1102);
  counts.setZero();
  for (int i = 0; i < n; ++i) counts += sample_condition(empirical, rng2);
  double worst_emp = 0;
  for (int i = 0; i < kTagDim; ++i)
    worst_emp = std::max(worst_emp, std::abs(counts[i] / n - (*empirical.empirical_frequencies)[i]));
  require(worst_emp < 0.01, "empirical-prior frequency error " + std::to_string(worst_emp));
  detail << "uniform prior max error " << worst << ", empirical prior max error " << worst_emp;
}

// ---------------------------------------------------------------------------
// 8. shapes, ranges, determinism
// ---------------------------------------------------------------------------
void criterion_determinism(std::ostringstream& detail) {
  using namespace facegen::training;
  // generator (z:128, c:34) -> 128x128x3 in [-1, 1]
  nets::GeneratorSpec gs;  // defaults: z 128, c 34, output 128
  gs.base_channels = 8;
  gs.n_resblocks = 1;
  nets::SrresnetGenerator<double> g(gs);
  nets::init_weights<double>(g, 1201);
  Rng rng(1202);
  const Mat z = random_mat(rng, 128, 2);
  Mat c = Mat::Zero(34, 2);
  c(0, 0) = c(5, 1) = 1.0;
  c(24, 0) = c(30, 1) = 1.0;
  const Mat out = nets::generate_images<double>(g, z, c, 1);
  require(out.rows() == 3 * 128 * 128 && out.cols() == 2, "generator output shape");
  require(out.maxCoeff() <= 1.0 && out.minCoeff() >= -1.0, "generator output range");

  // pixel shuffle equals the naive loop oracle on random tensors
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 3 + trial % 3, w = 4, r = 2, c_out = 3;
    const Mat in = random_mat(rng, c_out * r * r, h * w);
    const Mat shuffled = nets::pixel_shuffle<double>(in, h, w, r);
    for (int ch = 0; ch < c_out; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j)
              require(shuffled(ch, (y * r + i) * (w * r) + (x * r + j)) ==
                          in(ch * r * r + i * r + j, y * w + x),
                      "pixel shuffle oracle mismatch");
  }

  // fixed seed: 10 bit-identical steps, then checkpoint-resume continuity
  auto run_series = [](int steps) {
    GaussianRingSet<double> ring(8, 1.5, 0.1, 256, 77);
    MlpGenerator<double> g2(8, 2, 24);
    MlpDiscriminator<double> d2(2, 24);
    nets::init_weights<double>(g2, 1203, 0.2);
    nets::init_weights<double>(d2, 1204, 0.2);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.lr_init = 1e-3;
    cfg.seed = 1205;
    Trainer<double> t(g2, d2, cfg, LossWeights{1.0, 0.5});
    std::vector<LossBundle> series;
    TrainHooks hooks;
    hooks.max_steps = steps;
    hooks.on_step = [&series](long, const LossBundle& l, double) { series.push_back(l); };
    t.train(ring, hooks);
    return series;
  };
  const auto s1 = run_series(10);
  const auto s2 = run_series(10);
  for (int i = 0; i < 10; ++i)
    require(std::memcmp(&s1[static_cast<std::size_t>(i)], &s2[static_cast<std::size_t>(i)],
                        sizeof(LossBundle)) == 0,
            "loss series not bit-identical at step " + std::to_string(i));

  // resume continuity
  const std::string dir = (fs::temp_directory_path() / "fg_acc_resume").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto full = run_series(16);
  {
    GaussianRingSet<double> ring(8, 1.5, 0.1, 256, 77);
    MlpGenerator<double> g2(8, 2, 24);
    MlpDiscriminator<double> d2(2, 24);
    nets::init_weights<double>(g2, 1203, 0.2);
    nets::init_weights<double>(d2, 1204, 0.2);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.lr_init = 1e-3;
    cfg.seed = 1205;
    Trainer<double> t(g2, d2, cfg, LossWeights{1.0, 0.5});
    TrainHooks h1;
    h1.max_steps = 8;
    t.train(ring, h1);
    t.save_checkpoint(dir + "/c.fgt");

    MlpGenerator<double> g3(8, 2, 24);
    MlpDiscriminator<double> d3(2, 24);
    Trainer<double> t2(g3, d3, cfg, LossWeights{1.0, 0.5});
    t2.load_checkpoint(dir + "/c.fgt");
    std::vector<LossBundle> tail;
    TrainHooks h2;
    h2.max_steps = 16;
    h2.on_step = [&tail](long, const LossBundle& l, double) { tail.push_back(l); };
    t2.train(ring, h2);
    require(tail.size() == 8, "resume produced wrong step count");
    for (int i = 0; i < 8; ++i)
      require(std::memcmp(&tail[static_cast<std::size_t>(i)], &full[8 + static_cast<std::size_t>(i)],
                          sizeof(LossBundle)) == 0,
              "resumed series diverged at step " + std::to_string(8 + i));
  }
  fs::remove_all(dir);
  detail << "shape/range pinned, 10-step bit equality, resume continuity exact";
}

// ---------------------------------------------------------------------------
// 9. end to end: fixture -> CLI -> manifest -> train -> export -> serve -> POST
// ---------------------------------------------------------------------------
void criterion_end_to_end(std::ostringstream& detail) {
  const std::string cli = FACEGEN_CLI_PATH;
  require(fs::exists(cli), "CLI binary not found at " + cli);
  const std::string root = (fs::temp_directory_path() / "fg_acc_e2e").string();
  fs::remove_all(root);
  fs::create_directories(root + "/src");

  // 20-image fixture: 64x64 discs plus a listing with a pre-2005 stragglers
  Rng rng(1301);
  {
    std::ofstream listing(root + "/listing.csv");
    listing << "id,name,sell_day,url\n";
    for (int i = 0; i < 20; ++i) {
      img::ImageU8 im = img::make_image(64, 64, 30, 30, 34);
      const int color = i % kDiscColors;
      const auto& rgb = disc_palette()[static_cast<std::size_t>(color)];
      for (int y = 12; y < 52; ++y)
        for (int x = 12; x < 52; ++x) {
          if (std::hypot(x - 32.0 + rng.uniform(-1, 1), y - 32.0) < 17) {
            auto* p = im.pixel(x, y);
            for (int ch = 0; ch < 3; ++ch)
              p[ch] = static_cast<std::uint8_t>(255 * rgb[static_cast<std::size_t>(ch)]);
          }
        }
      img::write_image(im, root + "/src/fx" + std::to_string(i) + ".png");
      const std::string year = i < 2 ? "2003" : std::to_string(2005 + i % 15);
      listing << "fx" << i << ",fixture game " << i << "," << year << "-06-01,http://example.test/" << i
              << "\n";
    }
  }

  auto sh = [&](const std::string& cmd) {
    const std::string full = cmd + " >> " + root + "/cli.log 2>&1";
    const int rc = std::system(full.c_str());
    require(rc == 0, "command failed (" + std::to_string(rc) + "): " + cmd);
  };

  // ingest + filter through the real CLI with the stub adapters
  sh(cli + " dataset ingest --listing " + root + "/listing.csv --images-dir " + root +
     "/src --out " + root + "/ds --detector stub --estimator stub");
  sh(cli + " dataset filter --manifest " + root + "/ds/manifest.ndjson --min-year 2005");
  sh(cli + " dataset stats --manifest " + root + "/ds/manifest.ndjson --out " + root + "/report.json");

  const auto manifest = dataset::load_manifest(root + "/ds/manifest.ndjson");
  require(manifest.records.size() == 20, "expected 20 records, got " + std::to_string(manifest.records.size()));
  require(manifest.active_count() == 18, "expected 18 active after the year filter");

  // 200 training steps on a small 128-out configuration
  {
    nlohmann::json cfg;
    cfg["batch_size"] = 4;
    cfg["seed"] = 1302;
    cfg["lr_init"] = 2e-4;
    cfg["precision"] = "f32";
    cfg["lambda_adv"] = 34.0;
    cfg["lambda_gp"] = 0.5;
    cfg["generator"] = {{"noise_dim", 32}, {"cond_dim", 34},  {"base_channels", 4}, {"base_spatial", 16},
                        {"n_resblocks", 1}, {"n_upscales", 3}, {"output_size", 128}};
    cfg["discriminator"] = {{"n_resblocks", 4}, {"base_channels", 4}, {"max_channels", 16}, {"input_size", 128}};
    std::ofstream(root + "/train.json") << cfg.dump(2);
  }
  sh(cli + " train --manifest " + root + "/ds/manifest.ndjson --images-dir " + root +
     "/ds/images --config " + root + "/train.json --out " + root + "/run --steps 200");
  require(fs::exists(root + "/run/ckpt_final.fgt"), "training left no final checkpoint");
  require(fs::exists(root + "/run/metrics.ndjson"), "training left no metrics stream");

  // export and serve
  sh(cli + " export --checkpoint " + root + "/run/ckpt_final.fgt --manifest " + root +
     "/ds/manifest.ndjson --out " + root + "/bundle");
  auto loaded = bundle::load_bundle(root + "/bundle");
  server::ServerOptions opt;
  opt.port = 18800 + static_cast<int>(::getpid() % 1000);
  server::ModelServer srv(std::move(loaded), opt);
  require(srv.start(), "server failed to start");

  httplib::Client client("127.0.0.1", opt.port);
  client.set_read_timeout(120, 0);
  const std::string body =
      R"({"assigned": {"blonde hair": true, "smile": true, "hat": false}, "count": 2, "seed": 42})";
  auto r1 = client.Post("/v1/generate", body, "application/json");
  auto r2 = client.Post("/v1/generate", body, "application/json");
  require(r1 && r1->status == 200, "generate request failed");
  require(r2 && r2->status == 200, "repeat generate request failed");
  const auto j1 = nlohmann::json::parse(r1->body);
  const auto j2 = nlohmann::json::parse(r2->body);
  require(j1.at("images") == j2.at("images"), "seeded responses are not byte-identical");
  require(j1.at("images").size() == 2, "wrong image count");
  for (const auto& b64 : j1.at("images")) {
    const auto png = base64_decode(b64.get<std::string>());
    const img::ImageU8 im = img::decode_png(png);
    require(im.width == 128 && im.height == 128, "served image is not 128x128");
  }
  const auto& tax = tagspace::taxonomy();
  for (const auto& cond : j1.at("resolved_conditions")) {
    require(cond[static_cast<std::size_t>(tax.index_of("blonde hair"))].get<double>() == 1.0,
            "assigned attribute not honored: blonde hair");
    require(cond[static_cast<std::size_t>(tax.index_of("smile"))].get<double>() == 1.0,
            "assigned attribute not honored: smile");
    require(cond[static_cast<std::size_t>(tax.index_of("hat"))].get<double>() == 0.0,
            "assigned-false attribute not honored: hat");
  }
  require(j1.at("latency_ms").get<double>() > 0.0, "latency not recorded");
  srv.stop();
  fs::remove_all(root);
  detail << "ingest(20) -> filter(18 active) -> 200 steps -> export -> serve -> deterministic PNGs";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "loss oracle suite", criterion_losses},
      {2, "gradient-penalty closed forms + finite differences", criterion_penalty},
      {3, "Frechet closed forms + extended-precision case", criterion_frechet},
      {4, "FID self-distance calibration bound", criterion_fid_calibration},
      {5, "DRAGAN stability surrogate (8-Gaussian ring, 3 seeds)", criterion_ring},
      {6, "conditional learning surrogate (colored discs)", criterion_discs},
      {7, "sampler frequencies", criterion_sampler},
      {8, "shape / range / determinism / resume", criterion_determinism},
      {9, "end-to-end ingest->train->export->serve", criterion_end_to_end},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    std::ostringstream detail;
    try {
      c.run(detail);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "[PASS] criterion " << c.number << ": " << c.name << " (" << secs << "s)";
      if (!detail.str().empty()) std::cout << " — " << detail.str();
      std::cout << std::endl;
    } catch (const std::exception& e) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "[FAIL] criterion " << c.number << ": " << c.name << " (" << secs << "s) — " << e.what()
                << std::endl;
      ++failures;
    }
  }
  if (failures == 0)
    std::cout << "acceptance: all criteria passed" << std::endl;
  else
    std::cout << "acceptance: " << failures << " criteria FAILED" << std::endl;
  return failures == 0 ? 0 : 1;
}
