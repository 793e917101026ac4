#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "facegen/nets.hpp"
#include "facegen/rng.hpp"

using namespace facegen;
using namespace facegen::nets;
namespace ad = facegen::autodiff;
using Mat = ad::DenseMat<double>;

namespace {

GeneratorSpec tiny_gen_spec() {
  GeneratorSpec s;
  s.noise_dim = 16;
  s.cond_dim = 34;
  s.base_channels = 8;
  s.base_spatial = 8;
  s.n_resblocks = 2;
  s.n_upscales = 2;
  s.output_size = 32;
  return s;
}

DiscriminatorSpec tiny_disc_spec() {
  DiscriminatorSpec s;
  s.n_resblocks = 4;
  s.input_size = 32;
  s.base_channels = 8;
  s.max_channels = 32;
  return s;
}

Mat random_mat(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("pixel_shuffle: definitional 1x1x4 case") {
  // single spatial position, channels [a,b,c,d], r=2 -> 2x2 [[a,b],[c,d]]
  Mat in(4, 1);
  in << 1.5, 2.5, 3.5, 4.5;
  const Mat out = pixel_shuffle<double>(in, 1, 1, 2);
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == 4);
  CHECK(out(0, 0) == 1.5);  // (y=0, x=0)
  CHECK(out(0, 1) == 2.5);  // (y=0, x=1)
  CHECK(out(0, 2) == 3.5);  // (y=1, x=0)
  CHECK(out(0, 3) == 4.5);  // (y=1, x=1)
}

TEST_CASE("pixel_shuffle: r=1 is the identity") {
  Rng rng(51);
  const Mat in = random_mat(rng, 6, 20);
  const Mat out = pixel_shuffle<double>(in, 4, 5, 1);
  CHECK((out - in).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pixel_shuffle: random 4x4x16 matches the naive index-loop oracle") {
  Rng rng(52);
  const int h = 4, w = 4, c_in = 16, r = 2;
  const int c_out = c_in / (r * r);
  const Mat in = random_mat(rng, c_in, h * w);
  const Mat out = pixel_shuffle<double>(in, h, w, r);
  REQUIRE(out.rows() == c_out);
  REQUIRE(out.cols() == h * r * w * r);
  // oracle: out[yr*r+i, xr*r+j, c] = in[yr, xr, c*r*r + i*r + j]
  for (int c = 0; c < c_out; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) {
            const double expect = in(c * r * r + i * r + j, y * w + x);
            const double got = out(c, (y * r + i) * (w * r) + (x * r + j));
            CHECK(got == expect);
          }
}

TEST_CASE("pixel_shuffle: element bijection and error cases") {
  Rng rng(53);
  const Mat in = random_mat(rng, 8, 6);
  const Mat out = pixel_shuffle<double>(in, 2, 3, 2);
  std::vector<double> a(in.data(), in.data() + in.size());
  std::vector<double> b(out.data(), out.data() + out.size());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  CHECK_THROWS_AS(pixel_shuffle<double>(in, 2, 3, 3), ValidationError);  // 8 % 9 != 0
  CHECK_THROWS_AS(pixel_shuffle<double>(in, 2, 2, 2), ValidationError);  // cols mismatch
}

TEST_CASE("generator spec validation") {
  GeneratorSpec s = tiny_gen_spec();
  s.output_size = 64;  // 8 * 2^2 != 64
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = tiny_gen_spec();
  s.backbone = "mystery";
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("discriminator spec: batch norm is rejected at construction") {
  DiscriminatorSpec s = tiny_disc_spec();
  s.use_batch_norm = true;
  CHECK_THROWS_AS(ResnetDiscriminator<double>{s}, ValidationError);
}

TEST_CASE("generator: shapes, range, per-example determinism") {
  SrresnetGenerator<double> g(tiny_gen_spec());
  init_weights<double>(g, 1234);

  Rng rng(54);
  const int batch = 3;
  Mat z = random_mat(rng, 16, batch);
  Mat c = Mat::Zero(34, batch);
  for (int j = 0; j < batch; ++j) {
    c(j % 13, j) = 1.0;
    c(24, j) = 1.0;
  }
  // duplicate example 0 into example 2
  z.col(2) = z.col(0);
  c.col(2) = c.col(0);

  const auto out = g.generate(z, c, /*train=*/false);
  REQUIRE(out->value.rows() == 3 * 32 * 32);
  REQUIRE(out->value.cols() == batch);
  CHECK(out->value.maxCoeff() <= 1.0);
  CHECK(out->value.minCoeff() >= -1.0);
  CHECK((out->value.col(2) - out->value.col(0)).cwiseAbs().maxCoeff() == 0.0);

  // batch of one
  const auto one = g.generate(z.leftCols(1), c.leftCols(1), false);
  CHECK(one->value.cols() == 1);
  CHECK((one->value - out->value.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generator: full-size spec emits 128x128x3 in [-1,1] for (z:128, c:34)") {
  GeneratorSpec s;  // defaults: 16 resblocks, 3 upscales, 128 out
  s.base_channels = 8;  // slim channels keep this test fast; dims above stay pinned
  SrresnetGenerator<double> g(s);
  init_weights<double>(g, 99);
  Rng rng(55);
  const Mat z = random_mat(rng, 128, 2);
  Mat c = Mat::Zero(34, 2);
  c(0, 0) = c(1, 1) = 1.0;
  c(24, 0) = c(25, 1) = 1.0;
  const Mat out = generate_images<double>(g, z, c, 1);
  REQUIRE(out.rows() == 3 * 128 * 128);
  REQUIRE(out.cols() == 2);
  CHECK(out.maxCoeff() <= 1.0);
  CHECK(out.minCoeff() >= -1.0);
}

TEST_CASE("generator: gradient of mean output w.r.t. every z entry is finite, nonzero, and matches FD") {
  GeneratorSpec spec = tiny_gen_spec();
  spec.n_resblocks = 1;
  spec.cond_dim = 0;
  SrresnetGenerator<double> g(spec);
  init_weights<double>(g, 7);
  Rng rng(56);
  const Mat z0 = random_mat(rng, 16, 1);

  auto z_leaf = ad::leaf<double>(z0);
  auto mean_out = ad::mean_all(g.generate_node(z_leaf, false));
  auto grads = ad::backward(mean_out);
  auto gz = ad::grad_of(grads, z_leaf);
  REQUIRE(gz);
  REQUIRE(gz->value.allFinite());
  CHECK(gz->value.cwiseAbs().maxCoeff() > 0.0);

  auto mean_of = [&g](const Mat& z) { return ad::mean_all(g.generate(z, Mat(0, 1), false))->value(0, 0); };
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < z0.size(); ++i) {
    Mat zp = z0, zm = z0;
    zp(i, 0) += h;
    zm(i, 0) -= h;
    const double fd = (mean_of(zp) - mean_of(zm)) / (2 * h);
    REQUIRE(std::isfinite(fd));
    // relative tolerance 1e-3 at float64, with an absolute floor for the
    // entries whose derivative is near zero
    CHECK(gz->value(i, 0) == doctest::Approx(fd).epsilon(1e-3).scale(1e-4));
  }
}

TEST_CASE("discriminator: head shapes, sigmoid range, input validation") {
  ResnetDiscriminator<double> d(tiny_disc_spec());
  init_weights<double>(d, 77);
  Rng rng(57);
  const int batch = 5;
  const Mat x = random_mat(rng, 3 * 32 * 32, batch) * 0.5;
  auto out = d.discriminate(ad::constant<double>(x));
  REQUIRE(out.adv_logit->value.rows() == 1);
  REQUIRE(out.adv_logit->value.cols() == batch);
  REQUIRE(out.cls_logit->value.rows() == 34);
  REQUIRE(out.cls_logit->value.cols() == batch);

  const auto adv_p = ad::sigmoid(out.adv_logit)->value;
  const auto cls_p = ad::sigmoid(out.cls_logit)->value;
  CHECK(adv_p.minCoeff() > 0.0);
  CHECK(adv_p.maxCoeff() < 1.0);
  CHECK(cls_p.minCoeff() > 0.0);
  CHECK(cls_p.maxCoeff() < 1.0);

  const Mat wrong = random_mat(rng, 3 * 16 * 16, 2);
  CHECK_THROWS_AS(d.discriminate(ad::constant<double>(wrong)), ValidationError);
}

TEST_CASE("discriminator: permuting the batch permutes outputs identically") {
  // no batch normalization anywhere, so there is no cross-example coupling
  ResnetDiscriminator<double> d(tiny_disc_spec());
  init_weights<double>(d, 31);
  Rng rng(58);
  const int batch = 6;
  const Mat x = random_mat(rng, 3 * 32 * 32, batch) * 0.3;
  const std::vector<int> perm = {4, 2, 0, 5, 1, 3};
  Mat xp(x.rows(), batch);
  for (int j = 0; j < batch; ++j) xp.col(j) = x.col(perm[static_cast<std::size_t>(j)]);

  const auto out = d.discriminate(ad::constant<double>(x));
  const auto outp = d.discriminate(ad::constant<double>(xp));
  // equality up to GEMM blocking noise; any cross-example coupling (batch
  // norm) would show up at O(1), not O(1e-15)
  for (int j = 0; j < batch; ++j) {
    CHECK(std::abs(outp.adv_logit->value(0, j) - out.adv_logit->value(0, perm[static_cast<std::size_t>(j)])) <
          1e-12);
    CHECK((outp.cls_logit->value.col(j) - out.cls_logit->value.col(perm[static_cast<std::size_t>(j)]))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("init_weights: gaussian statistics and determinism") {
  GeneratorSpec spec;
  spec.noise_dim = 128;
  spec.base_channels = 32;
  spec.base_spatial = 16;
  spec.n_resblocks = 2;
  spec.n_upscales = 1;
  spec.output_size = 32;
  SrresnetGenerator<double> g(spec);
  init_weights<double>(g, 2718);

  bool checked_large = false;
  double pooled_sum = 0;
  long pooled_n = 0;
  for (auto& [name, p] : g.named_params()) {
    if (name.ends_with(".bias")) {
      CHECK(p->value.cwiseAbs().maxCoeff() == 0.0);
      continue;
    }
    if (name.ends_with(".gamma") || name.ends_with(".beta")) continue;
    const Eigen::Index n = p->value.size();
    const double mean = p->value.mean();
    pooled_sum += p->value.sum();
    pooled_n += n;
    // per-layer at 4 sigma (with this many layers a 3-sigma union would
    // reject a correct sampler a few percent of the time)
    CHECK(std::abs(mean) < 4.0 * 0.02 / std::sqrt(static_cast<double>(n)));
    if (n >= 10000) {
      const double stddev = std::sqrt((p->value.array() - mean).square().mean());
      CHECK(stddev == doctest::Approx(0.02).epsilon(0.10));
      checked_large = true;
    }
  }
  CHECK(checked_large);
  // pooled mean across all weight tensors at the 3-sigma bound
  CHECK(std::abs(pooled_sum / pooled_n) < 3.0 * 0.02 / std::sqrt(static_cast<double>(pooled_n)));

  SrresnetGenerator<double> g2(spec);
  init_weights<double>(g2, 2718);
  auto p1 = g.named_params();
  auto p2 = g2.named_params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i].second->value - p2[i].second->value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dcgan preset: constructs and is larger than the srresnet default at 128") {
  GeneratorSpec sr;  // srresnet defaults
  SrresnetGenerator<double> g_sr(sr);
  GeneratorSpec dc;
  dc.backbone = "dcgan";
  dc.base_spatial = 4;
  dc.n_upscales = 5;
  dc.base_channels = 32;
  dc.output_size = 128;
  DcganGenerator<double> g_dc(dc);

  auto bytes_of = [](auto& g) {
    std::uint64_t total = 0;
    for (auto& [name, p] : g.named_params()) total += static_cast<std::uint64_t>(p->value.size());
    return total;
  };
  const auto sr_params = bytes_of(g_sr);
  const auto dc_params = bytes_of(g_dc);
  CHECK(sr_params < dc_params);
  MESSAGE("srresnet params: ", sr_params, ", dcgan params: ", dc_params, ", ratio ",
          static_cast<double>(dc_params) / static_cast<double>(sr_params));
}

TEST_CASE("architecture manifest is self-describing") {
  SrresnetGenerator<double> g(tiny_gen_spec());
  const auto j = g.architecture_manifest();
  CHECK(j.at("model") == "generator");
  CHECK(j.at("reconstruction") == true);
  const auto spec = GeneratorSpec::from_json(j.at("spec"));
  CHECK(spec.output_size == 32);
  CHECK(spec.n_resblocks == 2);
}
