#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "facegen/dataset.hpp"
#include "facegen/evaluation.hpp"
#include "facegen/export_bundle.hpp"
#include "facegen/image.hpp"
#include "facegen/nets.hpp"
#include "facegen/training.hpp"
#include "support/disc_world.hpp"

// Drives the installed binary over a miniature pipeline: the dataset and
// training paths get deep coverage in the acceptance suite; this exercises
// the evaluation and export commands plus the exit-code contract.

using namespace facegen;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FACEGEN_CLI_PATH;

int run(const std::string& args, const std::string& log) {
  const std::string cmd = kCli + " " + args + " > " + log + " 2>&1";
  return std::system(cmd.c_str()) / 256;
}

struct Pipeline {
  std::string root;

  Pipeline() {
    root = (fs::temp_directory_path() / "fg_cli_test").string();
    fs::remove_all(root);
    fs::create_directories(root + "/src");
    // 12 fixture images + listing
    Rng rng(3001);
    std::ofstream listing(root + "/listing.csv");
    listing << "id,name,sell_day,url\n";
    for (int i = 0; i < 12; ++i) {
      img::write_image(testsupport::render_disc(i % 8, 16, 16, 9), root + "/src/d" + std::to_string(i) + ".png");
      listing << "d" << i << ",game," << (2006 + i % 8) << "-01-01,http://x/" << i << "\n";
    }
    listing.close();
    REQUIRE(run("dataset ingest --listing " + root + "/listing.csv --images-dir " + root +
                "/src --out " + root + "/ds --detector stub --estimator stub --image-size 32",
                root + "/ingest.log") == 0);
    // tiny 32x32 training config
    nlohmann::json cfg;
    cfg["batch_size"] = 4;
    cfg["seed"] = 3002;
    cfg["precision"] = "f32";
    cfg["generator"] = {{"noise_dim", 8}, {"cond_dim", 34}, {"base_channels", 4}, {"base_spatial", 8},
                        {"n_resblocks", 1}, {"n_upscales", 2}, {"output_size", 32}};
    cfg["discriminator"] = {{"n_resblocks", 2}, {"base_channels", 4}, {"max_channels", 8}};
    std::ofstream(root + "/cfg.json") << cfg.dump();
    REQUIRE(run("train --manifest " + root + "/ds/manifest.ndjson --images-dir " + root +
                "/ds/images --config " + root + "/cfg.json --out " + root + "/run --steps 3",
                root + "/train.log") == 0);
    REQUIRE(run("export --checkpoint " + root + "/run/ckpt_final.fgt --manifest " + root +
                "/ds/manifest.ndjson --out " + root + "/bundle --compare-dcgan",
                root + "/export.log") == 0);
  }
  ~Pipeline() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("cli: exit codes for bad input") {
  CHECK(run("dataset ingest --listing /nonexistent.csv --images-dir /tmp", "/dev/null") != 0);
  CHECK(run("serve --model /nonexistent-bundle", "/dev/null") == 3);     // io error
  CHECK(run("eval grid --bundle /nonexistent --mode sideways", "/dev/null") == 3);
  CHECK(run("train --manifest /nonexistent.ndjson", "/dev/null") == 3);
}

TEST_CASE("cli: evaluation and export surface") {
  Pipeline p;

  SUBCASE("fid with the builtin grid extractor") {
    CHECK(run("eval fid --manifest " + p.root + "/ds/manifest.ndjson --images-dir " + p.root +
              "/ds/images --bundle " + p.root + "/bundle --n 8 --trials 2 --seed 5 --out " + p.root +
              "/fid.json",
              p.root + "/fid.log") == 0);
    std::ifstream f(p.root + "/fid.json");
    const auto j = nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(f), {}));
    CHECK(j.at("trials").size() == 2);
    CHECK(j.at("extractor_id") == "grid-color-3x3");
  }

  SUBCASE("precision with the stub judge, export-for-review") {
    CHECK(run("eval precision --bundle " + p.root + "/bundle --judge stub --samples 2 --seed 5 --out " +
              p.root + "/prec.json --export-for-review " + p.root + "/review",
              p.root + "/prec.log") == 0);
    std::ifstream f(p.root + "/prec.json");
    const auto j = nlohmann::json::parse(std::string(std::istreambuf_iterator<char>(f), {}));
    CHECK(j.size() == 34);
    CHECK(fs::exists(p.root + "/review/0.png"));
  }

  SUBCASE("grids in all three modes, partial condition lists allowed") {
    for (const std::string mode : {"fixed-noise", "fixed-cond", "interpolation"}) {
      CHECK(run("eval grid --bundle " + p.root + "/bundle --mode " + mode +
                " --cond \"blonde hair,smile\" --rows 1 --cols 3 --seed 5 --out " + p.root + "/g.png",
                p.root + "/grid.log") == 0);
      const img::ImageU8 sheet = img::read_image(p.root + "/g.png");
      CHECK(sheet.width > 3 * 32);
    }
    CHECK(run("eval grid --bundle " + p.root + "/bundle --cond \"neon hair\" --out " + p.root + "/g2.png",
              "/dev/null") == 2);  // invalid attribute -> validation exit code
  }

  SUBCASE("feature export with the identity projector") {
    CHECK(run("eval features --manifest " + p.root + "/ds/manifest.ndjson --images-dir " + p.root +
              "/ds/images --sample-n 6 --projector identity --out " + p.root + "/f.fgt",
              p.root + "/feat.log") == 0);
    const auto loaded = evaluation::load_features(p.root + "/f.fgt");
    CHECK(loaded.features.vectors.rows() == 6);
    REQUIRE(loaded.coords_2d.has_value());
  }

  SUBCASE("export wrote a verifiable bundle and a size report") {
    CHECK(fs::exists(p.root + "/bundle/size_report.json"));
    const auto loaded = bundle::load_bundle(p.root + "/bundle");
    CHECK(loaded.output_size == 32);
    // size comparison against the dcgan preset was reported
    std::ifstream f(p.root + "/export.log");
    const std::string log{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    CHECK(log.find("dcgan preset size") != std::string::npos);
    CHECK(log.find("model_version") != std::string::npos);
  }

  SUBCASE("training is reproducible from its config file alone") {
    // identical config + seed -> byte-identical checkpoint artifacts
    REQUIRE(run("train --manifest " + p.root + "/ds/manifest.ndjson --images-dir " + p.root +
                "/ds/images --config " + p.root + "/cfg.json --out " + p.root + "/runB --steps 3",
                p.root + "/trainB.log") == 0);
    auto bytes_of = [](const std::string& path) {
      std::ifstream f(path, std::ios::binary);
      return std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    };
    CHECK(bytes_of(p.root + "/run/ckpt_final.fgt") == bytes_of(p.root + "/runB/ckpt_final.fgt"));
  }

  SUBCASE("stats and taxonomy artifacts") {
    CHECK(run("dataset stats --manifest " + p.root + "/ds/manifest.ndjson --out " + p.root +
              "/rep.json --text " + p.root + "/rep.txt",
              "/dev/null") == 0);
    CHECK(fs::exists(p.root + "/rep.txt"));
    CHECK(run("dataset taxonomy --out " + p.root + "/tax.json", "/dev/null") == 0);
    const auto tax = tagspace::taxonomy_from_manifest_json([&] {
      std::ifstream f(p.root + "/tax.json");
      return std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    }());
    CHECK(tax.version == tagspace::taxonomy().version);
  }
}
