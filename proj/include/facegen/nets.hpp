#pragma once

#include <json.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "facegen/layers.hpp"
#include "facegen/rng.hpp"

// Generator and discriminator construction.
//
// The generator follows the SRResNet recipe: a dense projection of the
// concatenated noise and condition vector to a base feature map, a chain of
// residual blocks with a trunk skip, sub-pixel x2 upscales, and a tanh
// output head. The discriminator is a strided residual stack without any
// batch normalization (normalizing across the batch would couple examples
// and corrupt the per-example gradient norms the penalty term constrains),
// with a real/fake head and a 34-way multi-label attribute head.
//
// Figure-level layer composition is not fully pinned down by the published
// description; the architecture manifest carries reconstruction=true so
// checkpoints stay self-describing about that.

namespace facegen::nets {

struct GeneratorSpec {
  std::string backbone = "srresnet";  // or "dcgan"
  int noise_dim = 128;
  int cond_dim = 34;
  int base_channels = 64;
  int base_spatial = 16;
  int n_resblocks = 16;
  int n_upscales = 3;
  int output_size = 128;

  void validate() const {
    if (noise_dim <= 0) throw ValidationError("generator spec: noise_dim must be positive");
    if (cond_dim < 0) throw ValidationError("generator spec: cond_dim must be non-negative");
    if (base_channels <= 0 || base_spatial <= 0)
      throw ValidationError("generator spec: base dimensions must be positive");
    if (backbone == "srresnet") {
      if (base_spatial * (1 << n_upscales) != output_size)
        throw ValidationError("generator spec: base_spatial * 2^n_upscales must equal output_size");
      if (base_channels % 4 != 0)
        throw ValidationError("generator spec: base_channels must be divisible by 4 for sub-pixel upscaling");
    } else if (backbone == "dcgan") {
      if (base_spatial * (1 << n_upscales) != output_size)
        throw ValidationError("generator spec: base_spatial * 2^n_upscales must equal output_size");
    } else {
      throw ValidationError("generator spec: unknown backbone '" + backbone + "'");
    }
  }

  nlohmann::json to_json() const {
    return {{"backbone", backbone},     {"noise_dim", noise_dim},       {"cond_dim", cond_dim},
            {"base_channels", base_channels}, {"base_spatial", base_spatial}, {"n_resblocks", n_resblocks},
            {"n_upscales", n_upscales}, {"output_size", output_size}};
  }

  static GeneratorSpec from_json(const nlohmann::json& j) {
    GeneratorSpec s;
    s.backbone = j.value("backbone", std::string("srresnet"));
    s.noise_dim = j.value("noise_dim", 128);
    s.cond_dim = j.value("cond_dim", 34);
    s.base_channels = j.value("base_channels", 64);
    s.base_spatial = j.value("base_spatial", 16);
    s.n_resblocks = j.value("n_resblocks", 16);
    s.n_upscales = j.value("n_upscales", 3);
    s.output_size = j.value("output_size", 128);
    s.validate();
    return s;
  }
};

struct DiscriminatorSpec {
  int n_resblocks = 10;
  bool use_batch_norm = false;  // fixed; construction fails if set
  int input_size = 128;
  int in_channels = 3;
  int base_channels = 32;
  int max_channels = 512;
  int cls_dim = 34;  // 0 disables the attribute head
  double leaky_slope = 0.2;

  void validate() const {
    if (use_batch_norm)
      throw ValidationError("discriminator spec: batch normalization is not supported; it couples "
                            "examples inside a batch and breaks the gradient-norm penalty");
    if (n_resblocks <= 0) throw ValidationError("discriminator spec: n_resblocks must be positive");
    if (input_size <= 0 || (input_size & (input_size - 1)) != 0)
      throw ValidationError("discriminator spec: input_size must be a positive power of two");
    const int n_strided = n_resblocks / 2;
    if (input_size >> n_strided < 1)
      throw ValidationError("discriminator spec: too many strided blocks for input size");
  }

  nlohmann::json to_json() const {
    return {{"n_resblocks", n_resblocks}, {"use_batch_norm", use_batch_norm}, {"input_size", input_size},
            {"in_channels", in_channels}, {"base_channels", base_channels},   {"max_channels", max_channels},
            {"cls_dim", cls_dim},         {"leaky_slope", leaky_slope}};
  }

  static DiscriminatorSpec from_json(const nlohmann::json& j) {
    DiscriminatorSpec s;
    s.n_resblocks = j.value("n_resblocks", 10);
    s.use_batch_norm = j.value("use_batch_norm", false);
    s.input_size = j.value("input_size", 128);
    s.in_channels = j.value("in_channels", 3);
    s.base_channels = j.value("base_channels", 32);
    s.max_channels = j.value("max_channels", 512);
    s.cls_dim = j.value("cls_dim", 34);
    s.leaky_slope = j.value("leaky_slope", 0.2);
    s.validate();
    return s;
  }
};

// One latent draw: noise vector z paired with its condition vector.
template <class S>
struct LatentCode {
  Eigen::Matrix<S, Eigen::Dynamic, 1> z;
  Eigen::Matrix<S, Eigen::Dynamic, 1> c;
};

// ---------------------------------------------------------------------------
// Model interfaces the trainer works against; the 2D toy benchmarks plug in
// small MLPs through the same surface.
// ---------------------------------------------------------------------------

template <class S>
struct DiscOutput {
  Var<S> adv_logit;  // 1 x batch, pre-sigmoid
  Var<S> cls_logit;  // cls_dim x batch, pre-sigmoid; empty when no head
};

template <class S>
class GeneratorModel {
 public:
  virtual ~GeneratorModel() = default;
  virtual int noise_dim() const = 0;
  virtual int cond_dim() const = 0;
  virtual int data_dim() const = 0;  // rows of the flat output
  // Core forward on the stacked (z over c) input node; taking a graph node
  // keeps gradients w.r.t. the latent reachable.
  virtual Var<S> generate_node(const Var<S>& zc, bool train) = 0;
  virtual ParamList<S> named_params() = 0;

  // z: noise_dim x batch, cond: cond_dim x batch (0 rows when unconditioned).
  // Returns data_dim x batch.
  Var<S> generate(const DenseMat<S>& z, const DenseMat<S>& cond, bool train) {
    if (z.rows() != noise_dim()) throw ValidationError("generator: noise dimension mismatch");
    if (cond.rows() != cond_dim()) throw ValidationError("generator: condition dimension mismatch");
    if (cond.rows() > 0 && cond.cols() != z.cols())
      throw ValidationError("generator: z/c batch size mismatch");
    DenseMat<S> in(z.rows() + cond.rows(), z.cols());
    in.topRows(z.rows()) = z;
    if (cond.rows() > 0) in.bottomRows(cond.rows()) = cond;
    return generate_node(ad::constant<S>(std::move(in)), train);
  }
};

template <class S>
class DiscriminatorModel {
 public:
  virtual ~DiscriminatorModel() = default;
  virtual int data_dim() const = 0;
  virtual int cls_dim() const = 0;
  virtual DiscOutput<S> discriminate(const Var<S>& x_flat) = 0;
  virtual ParamList<S> named_params() = 0;
};

// Draws all weights of a model from N(0, stddev^2) with zero biases
// (normalization scales stay at 1). Same seed, same bits.
template <class S, class Model>
void init_weights(Model& model, std::uint64_t rng_seed, S stddev = S(0.02)) {
  Rng rng(rng_seed);
  for (auto& [name, p] : model.named_params()) {
    if (name.ends_with(".bias")) {
      p->value.setZero();
    } else if (name.ends_with(".gamma")) {
      p->value.setOnes();
    } else if (name.ends_with(".beta")) {
      p->value.setZero();
    } else {
      for (Eigen::Index i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = static_cast<S>(rng.normal(0.0, static_cast<double>(stddev)));
    }
  }
}

// ---------------------------------------------------------------------------
// SRResNet-style conditional generator
// ---------------------------------------------------------------------------

template <class S>
class SrresnetGenerator : public GeneratorModel<S> {
 public:
  explicit SrresnetGenerator(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.backbone != "srresnet")
      throw ValidationError("SrresnetGenerator: spec requests backbone '" + spec_.backbone + "'");
    const int ch = spec_.base_channels;
    proj_ = Dense<S>(spec_.noise_dim + spec_.cond_dim, ch * spec_.base_spatial * spec_.base_spatial);
    proj_bn_ = BatchNorm2d<S>(ch);
    for (int i = 0; i < spec_.n_resblocks; ++i) {
      blocks_.push_back(ResBlock{Conv2d<S>(ch, ch, 3), BatchNorm2d<S>(ch), Conv2d<S>(ch, ch, 3), BatchNorm2d<S>(ch)});
    }
    trunk_conv_ = Conv2d<S>(ch, ch, 3);
    trunk_bn_ = BatchNorm2d<S>(ch);
    for (int i = 0; i < spec_.n_upscales; ++i) ups_.push_back(Conv2d<S>(ch, ch * 4, 3));
    out_conv_ = Conv2d<S>(ch, 3, 3);
  }

  int noise_dim() const override { return spec_.noise_dim; }
  int cond_dim() const override { return spec_.cond_dim; }
  int data_dim() const override { return 3 * spec_.output_size * spec_.output_size; }
  const GeneratorSpec& spec() const { return spec_; }

  Var<S> generate_node(const Var<S>& zc, bool train) override {
    if (zc->value.rows() != spec_.noise_dim + spec_.cond_dim)
      throw ValidationError("generator: stacked input has wrong size");
    auto x = proj_.forward(zc);
    auto fm = unflatten(x, spec_.base_channels, spec_.base_spatial, spec_.base_spatial);
    fm = relu_fm(proj_bn_.forward(fm, train));
    auto trunk_in = fm;
    for (auto& b : blocks_) {
      auto y = b.bn1.forward(b.conv1.forward(fm), train);
      y = relu_fm(y);
      y = b.bn2.forward(b.conv2.forward(y), train);
      fm = add_fm(fm, y);
    }
    fm = add_fm(trunk_in, trunk_bn_.forward(trunk_conv_.forward(fm), train));
    for (auto& up : ups_) {
      fm = pixel_shuffle_fm(up.forward(fm), 2);
      fm = relu_fm(fm);
    }
    auto out = out_conv_.forward(fm);
    FeatureMap<S> bounded = out;
    bounded.v = ad::tanh_(out.v);
    return flatten(bounded);
  }

  ParamList<S> named_params() override {
    ParamList<S> out;
    proj_.collect(out, "g.proj");
    proj_bn_.collect(out, "g.proj_bn");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "g.block" + std::to_string(i);
      blocks_[i].conv1.collect(out, p + ".conv1");
      blocks_[i].bn1.collect(out, p + ".bn1");
      blocks_[i].conv2.collect(out, p + ".conv2");
      blocks_[i].bn2.collect(out, p + ".bn2");
    }
    trunk_conv_.collect(out, "g.trunk_conv");
    trunk_bn_.collect(out, "g.trunk_bn");
    for (std::size_t i = 0; i < ups_.size(); ++i) ups_[i].collect(out, "g.up" + std::to_string(i));
    out_conv_.collect(out, "g.out_conv");
    return out;
  }

  // Batch-norm running statistics, serialized alongside parameters so a
  // resumed run continues bit-exactly.
  std::vector<std::pair<std::string, DenseMat<S>*>> named_buffers() {
    std::vector<std::pair<std::string, DenseMat<S>*>> out;
    auto add_bn = [&out](const std::string& p, BatchNorm2d<S>& bn) {
      out.emplace_back(p + ".running_mean", &bn.running_mean);
      out.emplace_back(p + ".running_var", &bn.running_var);
    };
    add_bn("g.proj_bn", proj_bn_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      add_bn("g.block" + std::to_string(i) + ".bn1", blocks_[i].bn1);
      add_bn("g.block" + std::to_string(i) + ".bn2", blocks_[i].bn2);
    }
    add_bn("g.trunk_bn", trunk_bn_);
    return out;
  }

  nlohmann::json architecture_manifest() const {
    nlohmann::json j;
    j["model"] = "generator";
    j["reconstruction"] = true;
    j["spec"] = spec_.to_json();
    j["layers"] = nlohmann::json::array();
    j["layers"].push_back({{"name", "proj"}, {"type", "dense"},
                           {"in", spec_.noise_dim + spec_.cond_dim},
                           {"out", spec_.base_channels * spec_.base_spatial * spec_.base_spatial}});
    j["layers"].push_back({{"name", "resblocks"}, {"type", "resblock[conv3-bn-relu-conv3-bn]+skip"},
                           {"count", spec_.n_resblocks}, {"channels", spec_.base_channels}});
    j["layers"].push_back({{"name", "trunk"}, {"type", "conv3-bn+global_skip"}});
    j["layers"].push_back({{"name", "upscales"}, {"type", "conv3-pixelshuffle2-relu"},
                           {"count", spec_.n_upscales}});
    j["layers"].push_back({{"name", "out"}, {"type", "conv3-tanh"}, {"channels", 3}});
    return j;
  }

 private:
  struct ResBlock {
    Conv2d<S> conv1;
    BatchNorm2d<S> bn1;
    Conv2d<S> conv2;
    BatchNorm2d<S> bn2;
  };

  GeneratorSpec spec_;
  Dense<S> proj_;
  BatchNorm2d<S> proj_bn_;
  std::vector<ResBlock> blocks_;
  Conv2d<S> trunk_conv_;
  BatchNorm2d<S> trunk_bn_;
  std::vector<Conv2d<S>> ups_;
  Conv2d<S> out_conv_;
};

// ---------------------------------------------------------------------------
// DCGAN-style generator preset (baseline for size/FID comparisons only)
// ---------------------------------------------------------------------------

template <class S>
class DcganGenerator : public GeneratorModel<S> {
 public:
  explicit DcganGenerator(const GeneratorSpec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.backbone != "dcgan")
      throw ValidationError("DcganGenerator: spec requests backbone '" + spec_.backbone + "'");
    // Channels halve at each upscale from base_channels * 2^n_upscales.
    int ch = spec_.base_channels << spec_.n_upscales;
    proj_ = Dense<S>(spec_.noise_dim + spec_.cond_dim, ch * spec_.base_spatial * spec_.base_spatial);
    proj_bn_ = BatchNorm2d<S>(ch);
    for (int i = 0; i < spec_.n_upscales; ++i) {
      // Fractional-stride conv: zero upsample then 5x5 conv.
      ups_.push_back(Conv2d<S>(ch, ch / 2, 5));
      bns_.push_back(BatchNorm2d<S>(ch / 2));
      ch /= 2;
    }
    out_conv_ = Conv2d<S>(ch, 3, 5);
    channels0_ = spec_.base_channels << spec_.n_upscales;
  }

  int noise_dim() const override { return spec_.noise_dim; }
  int cond_dim() const override { return spec_.cond_dim; }
  int data_dim() const override { return 3 * spec_.output_size * spec_.output_size; }
  const GeneratorSpec& spec() const { return spec_; }

  Var<S> generate_node(const Var<S>& zc, bool train) override {
    if (zc->value.rows() != spec_.noise_dim + spec_.cond_dim)
      throw ValidationError("generator: stacked input has wrong size");
    auto x = proj_.forward(zc);
    auto fm = unflatten(x, channels0_, spec_.base_spatial, spec_.base_spatial);
    fm = relu_fm(proj_bn_.forward(fm, train));
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      fm = zero_upsample_fm(fm, 2);
      fm = ups_[i].forward(fm);
      fm = relu_fm(bns_[i].forward(fm, train));
    }
    auto out = out_conv_.forward(fm);
    FeatureMap<S> bounded = out;
    bounded.v = ad::tanh_(out.v);
    return flatten(bounded);
  }

  ParamList<S> named_params() override {
    ParamList<S> out;
    proj_.collect(out, "g.proj");
    proj_bn_.collect(out, "g.proj_bn");
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      ups_[i].collect(out, "g.up" + std::to_string(i));
      bns_[i].collect(out, "g.up_bn" + std::to_string(i));
    }
    out_conv_.collect(out, "g.out_conv");
    return out;
  }

  std::vector<std::pair<std::string, DenseMat<S>*>> named_buffers() {
    std::vector<std::pair<std::string, DenseMat<S>*>> out;
    out.emplace_back("g.proj_bn.running_mean", &proj_bn_.running_mean);
    out.emplace_back("g.proj_bn.running_var", &proj_bn_.running_var);
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      out.emplace_back("g.up_bn" + std::to_string(i) + ".running_mean", &bns_[i].running_mean);
      out.emplace_back("g.up_bn" + std::to_string(i) + ".running_var", &bns_[i].running_var);
    }
    return out;
  }

  nlohmann::json architecture_manifest() const {
    nlohmann::json j;
    j["model"] = "generator";
    j["reconstruction"] = true;
    j["spec"] = spec_.to_json();
    j["layers"] = nlohmann::json::array();
    j["layers"].push_back({{"name", "proj"}, {"type", "dense"},
                           {"out", channels0_ * spec_.base_spatial * spec_.base_spatial}});
    j["layers"].push_back({{"name", "upscales"}, {"type", "zero_upsample2-conv5-bn-relu"},
                           {"count", spec_.n_upscales}});
    j["layers"].push_back({{"name", "out"}, {"type", "conv5-tanh"}, {"channels", 3}});
    return j;
  }

 private:
  GeneratorSpec spec_;
  int channels0_ = 0;
  Dense<S> proj_;
  BatchNorm2d<S> proj_bn_;
  std::vector<Conv2d<S>> ups_;
  std::vector<BatchNorm2d<S>> bns_;
  Conv2d<S> out_conv_;
};

// ---------------------------------------------------------------------------
// Residual discriminator with adversarial and attribute heads
// ---------------------------------------------------------------------------

template <class S>
class ResnetDiscriminator : public DiscriminatorModel<S> {
 public:
  explicit ResnetDiscriminator(const DiscriminatorSpec& spec) : spec_(spec) {
    spec_.validate();
    stem_ = Conv2d<S>(spec_.in_channels, spec_.base_channels, 3);
    int ch = spec_.base_channels;
    int size = spec_.input_size;
    for (int i = 0; i < spec_.n_resblocks; ++i) {
      // Every second block downsamples and doubles channels (up to the cap).
      const bool strided = (i % 2 == 1) && size > 4;
      const int out_ch = strided ? std::min(ch * 2, spec_.max_channels) : ch;
      Block b;
      b.strided = strided;
      b.conv1 = Conv2d<S>(ch, out_ch, 3, strided ? 2 : 1, 1);
      b.conv2 = Conv2d<S>(out_ch, out_ch, 3);
      if (strided || out_ch != ch) b.skip = Conv2d<S>(ch, out_ch, 1, strided ? 2 : 1, 0);
      blocks_.push_back(std::move(b));
      if (strided) size /= 2;
      ch = out_ch;
    }
    final_size_ = size;
    final_ch_ = ch;
    adv_head_ = Dense<S>(ch * size * size, 1);
    if (spec_.cls_dim > 0) cls_head_ = Dense<S>(ch * size * size, spec_.cls_dim);
  }

  int data_dim() const override { return spec_.in_channels * spec_.input_size * spec_.input_size; }
  int cls_dim() const override { return spec_.cls_dim; }
  const DiscriminatorSpec& spec() const { return spec_; }

  DiscOutput<S> discriminate(const Var<S>& x_flat) override {
    if (x_flat->value.rows() != data_dim())
      throw ValidationError("discriminator: input is not " + std::to_string(spec_.input_size) + "x" +
                            std::to_string(spec_.input_size) + "x" + std::to_string(spec_.in_channels));
    auto fm = unflatten(x_flat, spec_.in_channels, spec_.input_size, spec_.input_size);
    const S slope = static_cast<S>(spec_.leaky_slope);
    fm = leaky_relu_fm(stem_.forward(fm), slope);
    for (auto& b : blocks_) {
      auto y = leaky_relu_fm(b.conv1.forward(fm), slope);
      y = b.conv2.forward(y);
      auto shortcut = b.skip ? b.skip->forward(fm) : fm;
      fm = leaky_relu_fm(add_fm(shortcut, y), slope);
    }
    auto features = flatten(fm);
    DiscOutput<S> out;
    out.adv_logit = adv_head_.forward(features);
    if (spec_.cls_dim > 0) out.cls_logit = cls_head_.forward(features);
    return out;
  }

  ParamList<S> named_params() override {
    ParamList<S> out;
    stem_.collect(out, "d.stem");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "d.block" + std::to_string(i);
      blocks_[i].conv1.collect(out, p + ".conv1");
      blocks_[i].conv2.collect(out, p + ".conv2");
      if (blocks_[i].skip) blocks_[i].skip->collect(out, p + ".skip");
    }
    adv_head_.collect(out, "d.adv_head");
    if (spec_.cls_dim > 0) cls_head_.collect(out, "d.cls_head");
    return out;
  }

  nlohmann::json architecture_manifest() const {
    nlohmann::json j;
    j["model"] = "discriminator";
    j["reconstruction"] = true;
    j["spec"] = spec_.to_json();
    j["final_spatial"] = final_size_;
    j["final_channels"] = final_ch_;
    return j;
  }

 private:
  struct Block {
    bool strided = false;
    Conv2d<S> conv1, conv2;
    std::optional<Conv2d<S>> skip;
  };

  DiscriminatorSpec spec_;
  Conv2d<S> stem_;
  std::vector<Block> blocks_;
  int final_size_ = 0, final_ch_ = 0;
  Dense<S> adv_head_, cls_head_;
};

// Builds the generator matching an architecture manifest (used when loading
// checkpoints and export bundles).
template <class S>
std::unique_ptr<GeneratorModel<S>> build_generator(const GeneratorSpec& spec) {
  spec.validate();
  if (spec.backbone == "srresnet") return std::make_unique<SrresnetGenerator<S>>(spec);
  return std::make_unique<DcganGenerator<S>>(spec);
}

template <class S>
nlohmann::json generator_manifest(GeneratorModel<S>& g) {
  if (auto* s = dynamic_cast<SrresnetGenerator<S>*>(&g)) return s->architecture_manifest();
  if (auto* d = dynamic_cast<DcganGenerator<S>*>(&g)) return d->architecture_manifest();
  // Custom model (benchmark MLPs): checkpoints stay loadable into the same
  // code, but there is no spec to rebuild from, so export refuses them.
  return {{"model", "generator"},
          {"backbone", "custom"},
          {"noise_dim", g.noise_dim()},
          {"cond_dim", g.cond_dim()},
          {"data_dim", g.data_dim()}};
}

template <class S>
std::vector<std::pair<std::string, DenseMat<S>*>> generator_buffers(GeneratorModel<S>& g) {
  if (auto* s = dynamic_cast<SrresnetGenerator<S>*>(&g)) return s->named_buffers();
  if (auto* d = dynamic_cast<DcganGenerator<S>*>(&g)) return d->named_buffers();
  return {};
}

// Inference helper: runs the generator in eval mode over column batches,
// chunking the batch so peak memory stays bounded at full model size.
template <class S>
DenseMat<S> generate_images(GeneratorModel<S>& g, const DenseMat<S>& z, const DenseMat<S>& cond,
                            int chunk = 4) {
  const Eigen::Index n = z.cols();
  DenseMat<S> out(g.data_dim(), n);
  for (Eigen::Index at = 0; at < n; at += chunk) {
    const Eigen::Index take = std::min<Eigen::Index>(chunk, n - at);
    DenseMat<S> zc = z.middleCols(at, take);
    DenseMat<S> cc = cond.rows() > 0 ? DenseMat<S>(cond.middleCols(at, take)) : DenseMat<S>(0, take);
    out.middleCols(at, take) = g.generate(zc, cc, /*train=*/false)->value;
  }
  return out;
}

}  // namespace facegen::nets
