#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "facegen/dataset.hpp"
#include "facegen/image.hpp"
#include "facegen/rng.hpp"
#include "facegen/tagspace.hpp"

// Model evaluation: Frechet distance between Gaussian fits of feature
// distributions, the repeated-trial FID protocol, per-label precision with
// an automated judge, fixed-noise / fixed-condition sample grids, and
// feature export for 2D projection.
//
// Absolute distance values depend entirely on the feature extractor; every
// report carries extractor_id so numbers from different extractors are
// never compared. ImageNet-trained extractors are a poor match for
// illustration-style images, which is why the reference extractor here is
// domain-specific and pluggable.

namespace facegen::evaluation {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct FeatureSet {
  Eigen::MatrixXd vectors;  // N x d, one feature vector per row
  std::string extractor_id;
};

template <class S>
struct GaussianMoments {
  VecX<S> mean;
  MatX<S> covariance;  // symmetric positive semidefinite
};

// Sample mean and unbiased covariance (divisor N-1) of N x d features.
template <class S>
GaussianMoments<S> fit_moments(const MatX<S>& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw ValidationError("fit_moments: need at least 2 feature vectors");
  if (!features.allFinite()) throw ValidationError("fit_moments: non-finite feature entries");
  GaussianMoments<S> m;
  m.mean = features.colwise().mean();
  const MatX<S> centered = features.rowwise() - m.mean.transpose();
  m.covariance = (centered.transpose() * centered) / static_cast<S>(n - 1);
  return m;
}

struct FrechetDiagnostics {
  double clipped_mass = 0;   // |sum of negative eigenvalues| clipped to zero
  double spectral_norm = 0;  // largest |eigenvalue| of the product matrix
};

// Squared Wasserstein-2 distance between Gaussians:
//   ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
// The square root is taken through the symmetric form
// (Sa^{1/2} Sb Sa^{1/2})^{1/2} via self-adjoint eigendecomposition; tiny
// negative eigenvalues from roundoff are clipped to zero and reported, and
// anything below -1e-3 * ||M|| aborts with conditioning diagnostics.
template <class S>
S frechet_distance(const GaussianMoments<S>& a, const GaussianMoments<S>& b,
                   FrechetDiagnostics* diag = nullptr) {
  if (a.mean.size() != b.mean.size()) throw ValidationError("frechet_distance: dimension mismatch");
  const Eigen::Index d = a.mean.size();

  Eigen::SelfAdjointEigenSolver<MatX<S>> es_a((a.covariance + a.covariance.transpose()) / S(2));
  if (es_a.info() != Eigen::Success) throw NumericalError("frechet_distance: eigensolve failed on first covariance");
  VecX<S> root_eigs = es_a.eigenvalues().cwiseMax(S(0)).cwiseSqrt();
  const MatX<S> sqrt_a = es_a.eigenvectors() * root_eigs.asDiagonal() * es_a.eigenvectors().transpose();

  MatX<S> product = sqrt_a * b.covariance * sqrt_a;
  product = ((product + product.transpose()) / S(2)).eval();
  Eigen::SelfAdjointEigenSolver<MatX<S>> es_p(product);
  if (es_p.info() != Eigen::Success) throw NumericalError("frechet_distance: eigensolve failed on product");

  const VecX<S>& eigs = es_p.eigenvalues();
  const S spectral = std::max(std::abs(eigs(0)), std::abs(eigs(d - 1)));
  S clipped = 0, trace_root = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (eigs(i) < 0) {
      if (eigs(i) < -S(1e-3) * spectral)
        throw NumericalError("frechet_distance: product matrix has eigenvalue " + std::to_string(double(eigs(i))) +
                             " beyond tolerance (spectral norm " + std::to_string(double(spectral)) + ")");
      clipped -= eigs(i);
    } else {
      trace_root += std::sqrt(eigs(i));
    }
  }
  if (diag) {
    diag->clipped_mass = static_cast<double>(clipped);
    diag->spectral_norm = static_cast<double>(spectral);
  }
  const S mean_term = (a.mean - b.mean).squaredNorm();
  return mean_term + a.covariance.trace() + b.covariance.trace() - S(2) * trace_root;
}

struct FidReport {
  std::vector<double> trials;
  double average = 0;
  double spread = 0;  // max - min
  std::string extractor_id;
  int n_per_trial = 0;

  std::string to_json() const;
  std::string render_text() const;
};

FidReport make_fid_report(std::vector<double> trials, std::string extractor_id, int n_per_trial);

// --- adapters ----------------------------------------------------------------

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual Eigen::MatrixXd extract(const std::vector<img::ImageU8>& images) = 0;
};

// Reference desk-scale extractor: mean RGB over a grid of cells
// (grid x grid x 3 dimensions). Cheap, deterministic, and sensitive to the
// spatial color layout, which is what the procedural benchmarks vary.
class GridColorExtractor : public FeatureExtractor {
 public:
  explicit GridColorExtractor(int grid = 3) : grid_(grid) {}
  std::string id() const override { return "grid-color-" + std::to_string(grid_) + "x" + std::to_string(grid_); }
  int dim() const override { return grid_ * grid_ * 3; }
  Eigen::MatrixXd extract(const std::vector<img::ImageU8>& images) override;

 private:
  int grid_;
};

// Subprocess extractor: runs `command <image.png>` per image and parses a
// JSON array of floats from stdout. This is the seam where an external
// 4096-dim illustration feature extractor plugs in.
class CommandExtractor : public FeatureExtractor {
 public:
  CommandExtractor(std::string command, int dim) : command_(std::move(command)), dim_(dim) {}
  std::string id() const override { return "cmd:" + command_; }
  int dim() const override { return dim_; }
  Eigen::MatrixXd extract(const std::vector<img::ImageU8>& images) override;

 private:
  std::string command_;
  int dim_;
};

// Conditioned image source: everything the protocols need from a model.
using ConditionalGenerator =
    std::function<img::ImageU8(const tagspace::TagVector& condition, Rng& rng)>;

class Projector {
 public:
  virtual ~Projector() = default;
  virtual std::string id() const = 0;
  virtual Eigen::MatrixXd project(const Eigen::MatrixXd& features) = 0;  // N x d -> N x 2
};

// Stub projector: first two feature dimensions. Real 2D embeddings (t-SNE
// and friends) plug in through the same interface.
class IdentityProjector : public Projector {
 public:
  std::string id() const override { return "identity-first-2"; }
  Eigen::MatrixXd project(const Eigen::MatrixXd& features) override;
};

// Subprocess projector: features go out as CSV, `command <features.csv>`
// prints one "x,y" line per row.
class CommandProjector : public Projector {
 public:
  explicit CommandProjector(std::string command) : command_(std::move(command)) {}
  std::string id() const override { return "cmd:" + command_; }
  Eigen::MatrixXd project(const Eigen::MatrixXd& features) override;

 private:
  std::string command_;
};

// --- protocols ----------------------------------------------------------------

// Repeated-trial FID: per trial, draw n real images, generate fakes under
// those same images' conditions, extract features for both sides, fit
// moments, accumulate the distance. If the pool is smaller than n, n is
// lowered with a warning through `log`.
FidReport fid_protocol(const std::vector<img::ImageU8>& real_images,
                       const std::vector<tagspace::TagVector>& real_tags,
                       const ConditionalGenerator& generator, FeatureExtractor& extractor,
                       int n = 12800, int trials = 5, std::uint64_t seed = 1,
                       const std::function<void(const std::string&)>& log = {});

// Per-label precision: fix each label true, sample the remaining labels
// from the prior, draw per_label_samples images and ask the judge whether
// the fixed attribute is present.
std::array<double, tagspace::kTagDim> label_precision(const ConditionalGenerator& generator,
                                                      dataset::TagEstimator& judge,
                                                      const tagspace::LabelPrior& prior,
                                                      int per_label_samples = 20,
                                                      std::uint64_t seed = 1);

std::string precision_to_json(const std::array<double, tagspace::kTagDim>& p);
std::string precision_render_text(const std::array<double, tagspace::kTagDim>& p);

// --- sample grids ----------------------------------------------------------------

enum class GridMode { fixed_noise_random_cond, fixed_cond_random_noise, interpolation };

struct GridParams {
  GridMode mode = GridMode::fixed_noise_random_cond;
  int rows = 1;
  int cols = 8;
  std::optional<tagspace::TagVector> condition;  // fixed_cond mode; sampled otherwise
  // Interpolation: endpoints sampled from the prior/noise unless given.
  std::optional<tagspace::TagVector> cond_from, cond_to;
  bool interpolate_noise = true;
  bool interpolate_condition = true;
};

// A generator with explicit noise control, needed for fixed-noise grids.
using SeededGenerator =
    std::function<img::ImageU8(const Eigen::VectorXd& z, const tagspace::TagVector& condition)>;

struct GridResult {
  std::vector<img::ImageU8> cells;  // rows*cols images
  img::ImageU8 sheet;               // montage
  std::vector<tagspace::TagVector> conditions;
};

GridResult sample_grid(const SeededGenerator& generator, int noise_dim, const GridParams& params,
                       const tagspace::LabelPrior& prior, std::uint64_t seed);

img::ImageU8 montage(const std::vector<img::ImageU8>& cells, int rows, int cols, int padding = 2);

// --- feature export ----------------------------------------------------------------

struct ExportedFeatures {
  FeatureSet features;
  std::optional<Eigen::MatrixXd> coords_2d;
  std::string projector_id;
};

ExportedFeatures export_features(const std::vector<img::ImageU8>& images, FeatureExtractor& extractor,
                                 int sample_n, std::uint64_t seed, Projector* projector = nullptr);

void save_features(const ExportedFeatures& f, const std::string& path);
ExportedFeatures load_features(const std::string& path);

}  // namespace facegen::evaluation
