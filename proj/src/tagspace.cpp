#include "facegen/tagspace.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace facegen::tagspace {

using nlohmann::json;

namespace {

TagTaxonomy build_default_taxonomy() {
  TagTaxonomy t;
  t.version = "fg-taxonomy-1";
  t.names = {
      // hair colors [0, 13)
      "blonde hair", "brown hair", "black hair", "blue hair", "pink hair",
      "purple hair", "green hair", "red hair", "silver hair", "white hair",
      "orange hair", "aqua hair", "gray hair",
      // binary attributes [13, 24)
      "long hair", "short hair", "twintails", "drill hair", "ponytail",
      "blush", "smile", "open mouth", "hat", "ribbon", "glasses",
      // eye colors [24, 34)
      "blue eyes", "red eyes", "brown eyes", "green eyes", "purple eyes",
      "yellow eyes", "pink eyes", "aqua eyes", "black eyes", "orange eyes"};
  t.published_counts = {
      4991, 6659, 4842, 3289, 2486, 2972, 1115, 2417, 987, 573, 699, 168, 57,
      16562, 1403, 5360, 1683, 8861, 4926, 5583, 4192, 1403, 5360, 1683,
      8861, 4926, 5583, 4192, 4442, 1700, 319, 193, 990, 49};
  t.count_unreliable.fill(false);
  // The printed table repeats one row of numbers, so these eight counts
  // cannot be trusted.
  for (const char* name : {"hat", "ribbon", "glasses", "blue eyes", "red eyes",
                           "brown eyes", "green eyes"}) {
    for (int i = 0; i < kTagDim; ++i)
      if (t.names[i] == name) t.count_unreliable[i] = true;
  }
  return t;
}

int group_argmax(const TagVector& v, int begin, int count) {
  int best = begin;
  for (int i = begin + 1; i < begin + count; ++i)
    if (v[i] > v[best]) best = i;  // strict: ties keep the lower index
  return best;
}

// Draws an index from `begin` over `count` slots with the given weights,
// restricted to non-negative weights; weights need not be normalized.
int draw_weighted(const TagVector& w, int begin, int count, Rng& rng) {
  double total = 0;
  for (int i = begin; i < begin + count; ++i) total += w[i];
  if (total <= 0) throw ValidationError("label prior: group has zero total mass");
  double u = rng.uniform() * total;
  for (int i = begin; i < begin + count; ++i) {
    u -= w[i];
    if (u < 0) return i;
  }
  return begin + count - 1;
}

}  // namespace

const TagTaxonomy& taxonomy() {
  static const TagTaxonomy t = build_default_taxonomy();
  return t;
}

int TagTaxonomy::index_of(const std::string& name) const {
  for (int i = 0; i < kTagDim; ++i)
    if (names[i] == name) return i;
  return -1;
}

bool is_hard(const TagVector& v) {
  int hair = 0, eye = 0;
  for (int i = 0; i < kTagDim; ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) return false;
    if (v[i] == 1.0) {
      if (i < kHairBegin + kHairCount) ++hair;
      if (i >= kEyeBegin) ++eye;
    }
  }
  return hair == 1 && eye == 1;
}

bool is_soft(const TagVector& v) {
  if ((v.array() < 0.0).any() || (v.array() > 1.0).any()) return false;
  const double hair_sum = v.segment(kHairBegin, kHairCount).sum();
  const double eye_sum = v.segment(kEyeBegin, kEyeCount).sum();
  return hair_sum <= 1.0 + 1e-9 && eye_sum <= 1.0 + 1e-9;
}

void require_hard(const TagVector& v, const char* context) {
  if (!is_hard(v))
    throw ValidationError(std::string(context) +
                          ": expected a hard tag vector (binary entries, one "
                          "hair color, one eye color)");
}

void LabelPrior::validate() const {
  if (binary_prob < 0.0 || binary_prob > 1.0)
    throw ValidationError("label prior: binary_prob outside [0,1]");
  if (kind == PriorKind::empirical) {
    if (!empirical_frequencies)
      throw ValidationError("label prior: empirical prior requires frequencies");
    const TagVector& f = *empirical_frequencies;
    if ((f.array() < 0.0).any() || (f.array() > 1.0).any())
      throw ValidationError("label prior: frequencies outside [0,1]");
    if (std::abs(f.segment(kHairBegin, kHairCount).sum() - 1.0) > 1e-6)
      throw ValidationError("label prior: hair-color frequencies must sum to 1");
    if (std::abs(f.segment(kEyeBegin, kEyeCount).sum() - 1.0) > 1e-6)
      throw ValidationError("label prior: eye-color frequencies must sum to 1");
  }
}

LabelPrior LabelPrior::empirical_from_counts(const std::array<long, kTagDim>& counts) {
  long hair_total = 0, eye_total = 0;
  for (int i = 0; i < kHairCount; ++i) hair_total += counts[kHairBegin + i];
  for (int i = 0; i < kEyeCount; ++i) eye_total += counts[kEyeBegin + i];
  if (hair_total <= 0 || eye_total <= 0)
    throw ValidationError("empirical prior: counts have an empty color group");
  LabelPrior p;
  p.kind = PriorKind::empirical;
  TagVector f = TagVector::Zero();
  for (int i = 0; i < kHairCount; ++i)
    f[kHairBegin + i] = static_cast<double>(counts[kHairBegin + i]) / static_cast<double>(hair_total);
  for (int i = 0; i < kEyeCount; ++i)
    f[kEyeBegin + i] = static_cast<double>(counts[kEyeBegin + i]) / static_cast<double>(eye_total);
  // Every image has exactly one hair color, so the hair total is the image
  // count; binary attribute frequency is per-image incidence.
  for (int i = 0; i < kBinaryCount; ++i)
    f[kBinaryBegin + i] = std::min(1.0, static_cast<double>(counts[kBinaryBegin + i]) / static_cast<double>(hair_total));
  p.empirical_frequencies = f;
  return p;
}

TagVector sample_condition(const LabelPrior& prior, Rng& rng) {
  prior.validate();
  TagVector v = TagVector::Zero();
  if (prior.kind == PriorKind::training_uniform) {
    v[kHairBegin + static_cast<int>(rng.uniform_int(kHairCount))] = 1.0;
    v[kEyeBegin + static_cast<int>(rng.uniform_int(kEyeCount))] = 1.0;
    for (int i = 0; i < kBinaryCount; ++i)
      if (rng.bernoulli(prior.binary_prob)) v[kBinaryBegin + i] = 1.0;
  } else {
    const TagVector& f = *prior.empirical_frequencies;
    v[draw_weighted(f, kHairBegin, kHairCount, rng)] = 1.0;
    v[draw_weighted(f, kEyeBegin, kEyeCount, rng)] = 1.0;
    for (int i = 0; i < kBinaryCount; ++i)
      if (rng.bernoulli(f[kBinaryBegin + i])) v[kBinaryBegin + i] = 1.0;
  }
  return v;
}

TagVector sample_condition(const LabelPrior& prior, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample_condition(prior, rng);
}

TagVector sample_condition_with_fixed(const LabelPrior& prior, int fixed_index, Rng& rng) {
  if (fixed_index < 0 || fixed_index >= kTagDim)
    throw ValidationError("sample_condition_with_fixed: index outside taxonomy");
  TagVector v = sample_condition(prior, rng);
  const auto& t = taxonomy();
  if (t.is_hair(fixed_index)) {
    v.segment(kHairBegin, kHairCount).setZero();
  } else if (t.is_eye(fixed_index)) {
    v.segment(kEyeBegin, kEyeCount).setZero();
  }
  v[fixed_index] = 1.0;
  return v;
}

TagVector estimate_tags(const TagVector& probabilities, double threshold) {
  TagVector v = TagVector::Zero();
  v[group_argmax(probabilities, kHairBegin, kHairCount)] = 1.0;
  v[group_argmax(probabilities, kEyeBegin, kEyeCount)] = 1.0;
  for (int i = kBinaryBegin; i < kBinaryBegin + kBinaryCount; ++i)
    if (probabilities[i] >= threshold) v[i] = 1.0;
  return v;
}

TagVector interpolate(const TagVector& a, const TagVector& b, double t) {
  if (t < 0.0 || t > 1.0) throw ValidationError("interpolate: t outside [0,1]");
  return (1.0 - t) * a + t * b;
}

TagVector from_names(const std::vector<std::string>& names, bool require_complete) {
  const auto& t = taxonomy();
  TagVector v = TagVector::Zero();
  for (const auto& name : names) {
    const int i = t.index_of(name);
    if (i < 0) {
      std::string valid;
      for (const auto& n : t.names) {
        if (!valid.empty()) valid += ", ";
        valid += n;
      }
      throw ValidationError("unknown attribute '" + name + "'; valid attributes: " + valid);
    }
    v[i] = 1.0;
  }
  const double hair = v.segment(kHairBegin, kHairCount).sum();
  const double eye = v.segment(kEyeBegin, kEyeCount).sum();
  if (hair > 1.0) throw ValidationError("conflicting hair colors in attribute list");
  if (eye > 1.0) throw ValidationError("conflicting eye colors in attribute list");
  if (require_complete) {
    if (hair == 0.0) throw ValidationError("attribute list must include a hair color");
    if (eye == 0.0) throw ValidationError("attribute list must include an eye color");
  }
  return v;
}

std::vector<std::string> active_names(const TagVector& v) {
  std::vector<std::string> out;
  const auto& t = taxonomy();
  for (int i = 0; i < kTagDim; ++i)
    if (v[i] == 1.0) out.push_back(t.names[i]);
  return out;
}

std::string taxonomy_manifest_json(const TagTaxonomy& t) {
  json j;
  j["version"] = t.version;
  j["total_dim"] = kTagDim;
  j["names"] = t.names;
  j["groups"] = {
      {"hair_color", {{"begin", kHairBegin}, {"count", kHairCount}}},
      {"binary", {{"begin", kBinaryBegin}, {"count", kBinaryCount}}},
      {"eye_color", {{"begin", kEyeBegin}, {"count", kEyeCount}}},
  };
  j["published_counts"] = t.published_counts;
  json unreliable = json::array();
  for (int i = 0; i < kTagDim; ++i)
    if (t.count_unreliable[i]) unreliable.push_back(t.names[i]);
  j["count_unreliable"] = unreliable;
  return j.dump(2) + "\n";
}

TagTaxonomy taxonomy_from_manifest_json(const std::string& json_text) {
  json j = json::parse(json_text);
  TagTaxonomy t;
  t.version = j.at("version").get<std::string>();
  if (j.at("total_dim").get<int>() != kTagDim)
    throw ValidationError("taxonomy manifest: unsupported dimension");
  auto names = j.at("names").get<std::vector<std::string>>();
  if (names.size() != kTagDim) throw ValidationError("taxonomy manifest: expected 34 names");
  std::copy(names.begin(), names.end(), t.names.begin());
  t.published_counts.fill(0);
  if (j.contains("published_counts")) {
    auto counts = j["published_counts"].get<std::vector<long>>();
    if (counts.size() == kTagDim) std::copy(counts.begin(), counts.end(), t.published_counts.begin());
  }
  t.count_unreliable.fill(false);
  if (j.contains("count_unreliable"))
    for (const auto& name : j["count_unreliable"]) {
      for (int i = 0; i < kTagDim; ++i)
        if (t.names[i] == name.get<std::string>()) t.count_unreliable[i] = true;
    }
  return t;
}

std::string prior_to_json(const LabelPrior& p) {
  json j;
  j["kind"] = p.kind == PriorKind::training_uniform ? "training_uniform" : "empirical";
  j["binary_prob"] = p.binary_prob;
  if (p.empirical_frequencies) {
    std::vector<double> f(p.empirical_frequencies->data(), p.empirical_frequencies->data() + kTagDim);
    j["empirical_frequencies"] = f;
  }
  j["taxonomy_version"] = taxonomy().version;
  return j.dump(2) + "\n";
}

LabelPrior prior_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  LabelPrior p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "training_uniform")
    p.kind = PriorKind::training_uniform;
  else if (kind == "empirical")
    p.kind = PriorKind::empirical;
  else
    throw ValidationError("label prior: unknown kind '" + kind + "'");
  p.binary_prob = j.value("binary_prob", 0.25);
  if (j.contains("empirical_frequencies")) {
    auto f = j["empirical_frequencies"].get<std::vector<double>>();
    if (f.size() != kTagDim) throw ValidationError("label prior: expected 34 frequencies");
    TagVector v;
    std::copy(f.begin(), f.end(), v.data());
    p.empirical_frequencies = v;
  }
  p.validate();
  return p;
}

}  // namespace facegen::tagspace
