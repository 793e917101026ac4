#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "facegen/errors.hpp"
#include "facegen/rng.hpp"

// The 34-attribute condition space: 13 hair colors, 11 binary attributes
// (5 hair styles, blush/smile/open mouth, hat/ribbon/glasses), 10 eye
// colors, in the fixed published order. Index layout is versioned through
// the taxonomy manifest; vectors must never be reinterpreted silently.

namespace facegen::tagspace {

using TagVector = Eigen::Matrix<double, 34, 1>;

constexpr int kTagDim = 34;
constexpr int kHairBegin = 0;
constexpr int kHairCount = 13;
constexpr int kBinaryBegin = 13;
constexpr int kBinaryCount = 11;
constexpr int kEyeBegin = 24;
constexpr int kEyeCount = 10;

struct TagTaxonomy {
  std::string version;
  std::array<std::string, kTagDim> names;
  // Image counts per tag as printed in the source tag table. One table row
  // was duplicated in print, making the counts for hat/ribbon/glasses and
  // blue/red/brown/green eyes untrustworthy; they are kept verbatim and
  // flagged so downstream code can refuse to build priors from them.
  std::array<long, kTagDim> published_counts;
  std::array<bool, kTagDim> count_unreliable;

  int index_of(const std::string& name) const;          // -1 if unknown
  bool is_hair(int i) const { return i >= kHairBegin && i < kHairBegin + kHairCount; }
  bool is_eye(int i) const { return i >= kEyeBegin && i < kEyeBegin + kEyeCount; }
  bool is_binary(int i) const { return i >= kBinaryBegin && i < kBinaryBegin + kBinaryCount; }
};

// The canonical taxonomy this toolkit ships with.
const TagTaxonomy& taxonomy();

// Hard vectors are the training-time form: {0,1} entries with exactly one
// hair color and exactly one eye color. Soft vectors relax to [0,1] with
// group sums at most 1, used for interpolation.
bool is_hard(const TagVector& v);
bool is_soft(const TagVector& v);
void require_hard(const TagVector& v, const char* context);

enum class PriorKind { training_uniform, empirical };

struct LabelPrior {
  PriorKind kind = PriorKind::training_uniform;
  std::optional<TagVector> empirical_frequencies;  // required when empirical
  double binary_prob = 0.25;

  void validate() const;
  // Builds an empirical prior from per-tag image counts: hair and eye
  // frequencies normalized within their groups, binary frequencies relative
  // to the total image count (= sum of hair-color counts, since every image
  // carries exactly one hair color).
  static LabelPrior empirical_from_counts(const std::array<long, kTagDim>& counts);
};

// Draws one hard condition vector: hair and eye colors from the prior's
// per-group distribution, each binary attribute as an independent Bernoulli.
TagVector sample_condition(const LabelPrior& prior, Rng& rng);
TagVector sample_condition(const LabelPrior& prior, std::uint64_t rng_seed);

// As above, but with one attribute pinned true before the rest is drawn
// (the per-label precision protocol). Pinning a hair or eye color fixes
// that group; pinning a binary leaves both color groups free.
TagVector sample_condition_with_fixed(const LabelPrior& prior, int fixed_index, Rng& rng);

// Thresholded estimate from per-attribute probabilities: group argmax for
// hair and eye colors (ties break to the lower index), independent
// thresholding at `threshold` (inclusive) for binary attributes.
TagVector estimate_tags(const TagVector& probabilities, double threshold = 0.25);

// Elementwise (1-t)*a + t*b; preserves group sums, so hard inputs yield
// valid soft vectors.
TagVector interpolate(const TagVector& a, const TagVector& b, double t);

// Builds a hard vector from attribute names ("blonde hair,smile"). With
// require_complete, a missing hair or eye color is an error; otherwise the
// partial vector is returned and callers complete it from a prior.
TagVector from_names(const std::vector<std::string>& names, bool require_complete = true);

std::vector<std::string> active_names(const TagVector& v);

// Versioned JSON manifest: names in order, group index ranges, published
// counts with reliability flags.
std::string taxonomy_manifest_json(const TagTaxonomy& t = taxonomy());
TagTaxonomy taxonomy_from_manifest_json(const std::string& json_text);

std::string prior_to_json(const LabelPrior& p);
LabelPrior prior_from_json(const std::string& json_text);

}  // namespace facegen::tagspace
