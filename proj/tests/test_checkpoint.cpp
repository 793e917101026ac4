#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "facegen/checkpoint.hpp"
#include "facegen/export_bundle.hpp"
#include "facegen/nets.hpp"
#include "facegen/rng.hpp"
#include "facegen/training.hpp"
#include "support/disc_world.hpp"

using namespace facegen;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nets::GeneratorSpec tiny_spec() {
  nets::GeneratorSpec s;
  s.noise_dim = 8;
  s.cond_dim = 34;
  s.base_channels = 4;
  s.base_spatial = 8;
  s.n_resblocks = 1;
  s.n_upscales = 1;
  s.output_size = 16;
  return s;
}

// Builds a minimal training checkpoint with a real generator inside.
std::string make_checkpoint(const std::string& dir) {
  nets::SrresnetGenerator<double> g(tiny_spec());
  nets::init_weights<double>(g, 5);
  nets::DiscriminatorSpec ds;
  ds.input_size = 16;
  ds.n_resblocks = 2;
  ds.base_channels = 4;
  ds.max_channels = 8;
  nets::ResnetDiscriminator<double> d(ds);
  nets::init_weights<double>(d, 6);
  training::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seed = 3;
  training::Trainer<double> trainer(g, d, cfg, training::LossWeights{1.0, 0.5},
                                    testsupport::disc_prior());
  const std::string path = dir + "/ckpt.fgt";
  trainer.save_checkpoint(path);
  return path;
}

}  // namespace

TEST_CASE("tensor store: exact round trip in both dtypes") {
  const std::string dir = temp_dir("fg_store");
  Rng rng(91);

  ckpt::TensorStore<double> s64;
  autodiff::DenseMat<double> a(7, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  s64.tensors["a"] = a;
  s64.meta["step"] = 123;
  s64.save(dir + "/t64.fgt");
  const auto back64 = ckpt::TensorStore<double>::load(dir + "/t64.fgt");
  CHECK(std::memcmp(back64.tensors.at("a").data(), a.data(), sizeof(double) * a.size()) == 0);
  CHECK(back64.meta.at("step") == 123);

  ckpt::TensorStore<float> s32;
  autodiff::DenseMat<float> b(5, 5);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<float>(rng.normal());
  s32.tensors["b"] = b;
  s32.save(dir + "/t32.fgt");
  const auto back32 = ckpt::TensorStore<float>::load(dir + "/t32.fgt");
  CHECK(std::memcmp(back32.tensors.at("b").data(), b.data(), sizeof(float) * b.size()) == 0);

  // cross-dtype load converts
  const auto as64 = ckpt::TensorStore<double>::load(dir + "/t32.fgt");
  CHECK(as64.tensors.at("b")(2, 2) == doctest::Approx(static_cast<double>(b(2, 2))));

  // no temp files left behind
  CHECK(!fs::exists(dir + "/t64.fgt.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("tensor store: peek_meta reads the header without the payload") {
  const std::string dir = temp_dir("fg_peek");
  ckpt::TensorStore<double> s;
  s.tensors["w"] = autodiff::DenseMat<double>::Ones(4, 4);
  s.meta["step"] = 7;
  s.save(dir + "/x.fgt");
  CHECK(ckpt::TensorStore<double>::peek_meta(dir + "/x.fgt").at("step") == 7);
  fs::remove_all(dir);
}

TEST_CASE("export bundle: end-to-end pack, verify, load") {
  const std::string dir = temp_dir("fg_bundle");
  const std::string ckpt_path = make_checkpoint(dir);
  const std::string prior_json = tagspace::prior_to_json(testsupport::disc_prior());

  const auto result = bundle::export_bundle(ckpt_path, prior_json, dir + "/bundle");
  CHECK(result.model_version.size() == 16);
  CHECK(result.size.total_bytes > 0);
  CHECK(!result.size.per_tensor.empty());
  CHECK(fs::exists(dir + "/bundle/bundle.json"));

  auto loaded = bundle::load_bundle(dir + "/bundle");
  CHECK(loaded.model_version == result.model_version);
  CHECK(loaded.output_size == 16);
  CHECK(loaded.generator->noise_dim() == 8);

  // generation through the loaded model works and respects shapes
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(8, 1);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(34, 1);
  c(0, 0) = c(24, 0) = 1.0;
  const auto out = nets::generate_images<double>(*loaded.generator, z, c, 1);
  CHECK(out.rows() == 3 * 16 * 16);
  CHECK(out.cwiseAbs().maxCoeff() <= 1.0);
  fs::remove_all(dir);
}

TEST_CASE("export bundle: a flipped byte fails hash verification") {
  const std::string dir = temp_dir("fg_tamper");
  const std::string ckpt_path = make_checkpoint(dir);
  bundle::export_bundle(ckpt_path, tagspace::prior_to_json(testsupport::disc_prior()), dir + "/bundle");

  // flip one byte in the middle of the tensor payload
  const std::string victim = dir + "/bundle/generator.fgt";
  std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const auto size = static_cast<long>(f.tellg());
  f.seekp(size / 2);
  char byte = 0;
  f.seekg(size / 2);
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x40);
  f.seekp(size / 2);
  f.write(&byte, 1);
  f.close();

  CHECK_THROWS_AS(bundle::load_bundle(dir + "/bundle"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("export refuses a taxonomy-version mismatch with both versions named") {
  const std::string dir = temp_dir("fg_taxmismatch");
  const std::string ckpt_path = make_checkpoint(dir);
  nlohmann::json bad = nlohmann::json::parse(tagspace::prior_to_json(testsupport::disc_prior()));
  bad["taxonomy_version"] = "fg-taxonomy-0-ancient";
  try {
    bundle::export_bundle(ckpt_path, bad.dump(), dir + "/bundle");
    FAIL("expected a taxonomy version refusal");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("fg-taxonomy-0-ancient") != std::string::npos);
    CHECK(what.find(tagspace::taxonomy().version) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("export strips discriminator and optimizer tensors") {
  const std::string dir = temp_dir("fg_strip");
  const std::string ckpt_path = make_checkpoint(dir);
  bundle::export_bundle(ckpt_path, tagspace::prior_to_json(testsupport::disc_prior()), dir + "/bundle");
  const auto store = ckpt::TensorStore<double>::load(dir + "/bundle/generator.fgt");
  for (const auto& [name, t] : store.tensors) {
    CHECK(name.rfind("g.", 0) == 0);
  }
  fs::remove_all(dir);
}
