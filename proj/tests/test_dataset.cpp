#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "facegen/dataset.hpp"
#include "facegen/rng.hpp"

using namespace facegen;
using namespace facegen::dataset;
namespace fs = std::filesystem;

TEST_CASE("scale_box: center-preserving arithmetic") {
  const BoundingBox in{40, 40, 20, 20};
  const BoundingBox out = scale_box(in, 1.5, 200, 200);
  CHECK(out == BoundingBox{35, 35, 30, 30});
}

TEST_CASE("scale_box: factor 1 is the identity") {
  const BoundingBox in{12, 7, 33, 21};
  CHECK(scale_box(in, 1.0, 100, 100) == in);
}

TEST_CASE("scale_box: clamp saturates at the image") {
  const BoundingBox in{0, 0, 100, 100};
  CHECK(scale_box(in, 1.5, 100, 100) == BoundingBox{0, 0, 100, 100});
}

TEST_CASE("scale_box: shifts inward to preserve size near edges") {
  const BoundingBox in{0, 0, 20, 20};  // corner box
  const BoundingBox out = scale_box(in, 1.5, 200, 200);
  CHECK(out.w == 30);
  CHECK(out.h == 30);
  CHECK(out.x == 0);  // ideal x would be -5; shifted inward
  CHECK(out.y == 0);
}

TEST_CASE("scale_box: errors") {
  CHECK_THROWS_AS(scale_box({0, 0, 0, 5}, 1.5, 10, 10), ValidationError);
  CHECK_THROWS_AS(scale_box({0, 0, 5, 5}, 0.5, 10, 10), ValidationError);
  CHECK_THROWS_AS(scale_box({8, 8, 5, 5}, 1.5, 10, 10), ValidationError);  // outside image
}

TEST_CASE("scale_box preserves the center when no clamping occurs") {
  Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const int img_w = 400, img_h = 300;
    const int w = 1 + static_cast<int>(rng.uniform_int(60));
    const int h = 1 + static_cast<int>(rng.uniform_int(60));
    const int x = 100 + static_cast<int>(rng.uniform_int(100));
    const int y = 100 + static_cast<int>(rng.uniform_int(80));
    const BoundingBox box{x, y, w, h};
    const BoundingBox out = scale_box(box, 1.5, img_w, img_h);
    if (out.x > 0 && out.y > 0 && out.x + out.w < img_w && out.y + out.h < img_h) {
      CHECK(2 * out.x + out.w == 2 * x + w);  // same center, integer arithmetic
      CHECK(2 * out.y + out.h == 2 * y + h);
    }
  }
}

namespace {

struct Fixture {
  std::string root;
  std::vector<SourceRow> rows;

  explicit Fixture(int n_images, const std::string& name) {
    root = (fs::temp_directory_path() / name).string();
    fs::remove_all(root);
    fs::create_directories(root + "/src");
    Rng rng(1);
    for (int i = 0; i < n_images; ++i) {
      img::ImageU8 im = img::make_image(96, 80, static_cast<std::uint8_t>(40 + i * 7),
                                        static_cast<std::uint8_t>(90 + i * 3), 120);
      const std::string path = root + "/src/img" + std::to_string(i) + ".png";
      img::write_image(im, path);
      SourceRow r;
      r.id = "img" + std::to_string(i);
      r.name = "game " + std::to_string(i);
      r.sell_day = i % 3 == 0 ? "2003-04-01" : "200" + std::to_string(5 + i % 5) + "-01-15";
      r.url = "http://example.test/soft.phtml?id=" + std::to_string(1000 + i);
      r.image_path = path;
      rows.push_back(r);
    }
  }
  ~Fixture() { fs::remove_all(root); }
};

class TwoFaceDetector : public FaceDetector {
 public:
  std::vector<BoundingBox> detect(const img::ImageU8& im) override {
    return {{4, 4, im.width / 3, im.height / 3}, {im.width / 2, im.height / 2, im.width / 3, im.height / 3}};
  }
};

}  // namespace

TEST_CASE("ingest: empty listing gives an empty manifest") {
  Fixture fx(0, "fg_ds_empty");
  StubDetector det;
  StubEstimator est;
  IngestOptions opt;
  opt.out_image_dir = fx.root + "/images";
  const DatasetManifest m = ingest({}, det, est, opt);
  CHECK(m.records.empty());
  CHECK(m.taxonomy_version == tagspace::taxonomy().version);
}

TEST_CASE("ingest: two faces per image gives two records") {
  Fixture fx(3, "fg_ds_two");
  TwoFaceDetector det;
  StubEstimator est;
  IngestOptions opt;
  opt.out_image_dir = fx.root + "/images";
  opt.image_size = 32;
  const DatasetManifest m = ingest(fx.rows, det, est, opt);
  CHECK(m.records.size() == 6);
  for (const auto& r : m.records) {
    CHECK(tagspace::is_hard(r.tags));
    CHECK(r.scaled_box.w >= r.detector_box.w);
    CHECK(fs::exists(fx.root + "/images/" + r.image_ref));
    const img::ImageU8 face = img::read_image(fx.root + "/images/" + r.image_ref);
    CHECK(face.width == 32);
    CHECK(face.height == 32);
  }
}

TEST_CASE("ingest: adapter failure skips the image, never aborts") {
  class FailingDetector : public FaceDetector {
   public:
    std::vector<BoundingBox> detect(const img::ImageU8& im) override {
      if (++calls_ == 2) throw IoError("detector crashed");
      return {{2, 2, im.width / 2, im.height / 2}};
    }

   private:
    int calls_ = 0;
  };
  Fixture fx(3, "fg_ds_fail");
  FailingDetector det;
  StubEstimator est;
  IngestOptions opt;
  opt.out_image_dir = fx.root + "/images";
  int logged = 0;
  opt.log = [&logged](const std::string&) { ++logged; };
  const DatasetManifest m = ingest(fx.rows, det, est, opt);
  CHECK(m.records.size() == 2);
  CHECK(logged == 1);
}

TEST_CASE("filter: year threshold, unknown years, rejection list, idempotence") {
  DatasetManifest m;
  m.taxonomy_version = tagspace::taxonomy().version;
  auto mk = [](int year, const std::string& ref) {
    FaceRecord r;
    r.release_year = year;
    r.image_ref = ref;
    r.tags = tagspace::TagVector::Zero();
    r.tags[0] = 1.0;
    r.tags[tagspace::kEyeBegin] = 1.0;
    return r;
  };
  m.records = {mk(2004, "a"), mk(2005, "b"), mk(2010, "c"), mk(kYearUnknown, "d"), mk(2012, "e")};

  const DatasetManifest f1 = filter(m, 2005, {"e"});
  CHECK(f1.records[0].rejected);        // 2004 < 2005
  CHECK(!f1.records[1].rejected);       // 2005 retained: the threshold is inclusive
  CHECK(!f1.records[2].rejected);
  CHECK(f1.records[3].rejected);        // unknown year cannot satisfy the filter
  CHECK(f1.records[4].rejected);        // manual rejection
  CHECK(f1.active_count() == 2);

  const DatasetManifest f2 = filter(f1, 2005, {"e"});
  for (std::size_t i = 0; i < f1.records.size(); ++i) {
    CHECK(f2.records[i].rejected == f1.records[i].rejected);
    CHECK(f2.records[i].rejection_reason == f1.records[i].rejection_reason);
  }
}

TEST_CASE("stats: per-year counts, tag counts, empty manifest") {
  DatasetManifest empty;
  empty.taxonomy_version = tagspace::taxonomy().version;
  const StatsReport zero = stats(empty);
  CHECK(zero.n_records == 0);
  CHECK(zero.n_active == 0);
  for (long c : zero.per_tag) CHECK(c == 0);

  DatasetManifest m;
  m.taxonomy_version = tagspace::taxonomy().version;
  auto mk = [](int year, int hair, bool smile) {
    FaceRecord r;
    r.release_year = year;
    r.source_w = 100;
    r.source_h = 80;
    r.tags = tagspace::TagVector::Zero();
    r.tags[hair] = 1.0;
    r.tags[tagspace::kEyeBegin + 1] = 1.0;
    if (smile) r.tags[tagspace::taxonomy().index_of("smile")] = 1.0;
    return r;
  };
  m.records = {mk(2004, 0, true), mk(2006, 0, false), mk(2006, 2, true), mk(2006, 1, false), mk(2008, 1, true)};
  const StatsReport rep = stats(m);
  CHECK(rep.per_year.at(2004) == 1);
  CHECK(rep.per_year.at(2006) == 3);
  CHECK(rep.per_year.at(2008) == 1);
  CHECK(rep.per_tag[0] == 2);
  CHECK(rep.per_tag[1] == 2);
  CHECK(rep.per_tag[2] == 1);
  CHECK(rep.per_tag[static_cast<std::size_t>(tagspace::taxonomy().index_of("smile"))] == 3);

  // each active record has exactly one hair color
  long hair_total = 0;
  for (int i = 0; i < tagspace::kHairCount; ++i) hair_total += rep.per_tag[static_cast<std::size_t>(i)];
  CHECK(hair_total == rep.n_active);

  CHECK(rep.render_text().find("records by release year") != std::string::npos);
}

TEST_CASE("manifest serialization round-trips byte-identically") {
  Fixture fx(4, "fg_ds_roundtrip");
  StubDetector det;
  StubEstimator est;
  IngestOptions opt;
  opt.out_image_dir = fx.root + "/images";
  DatasetManifest m = ingest(fx.rows, det, est, opt);
  m = filter(std::move(m), 2005, {});

  const std::string once = manifest_to_ndjson(m);
  const DatasetManifest parsed = manifest_from_ndjson(once);
  const std::string twice = manifest_to_ndjson(parsed);
  CHECK(once == twice);

  save_manifest(m, fx.root + "/manifest.ndjson");
  const DatasetManifest loaded = load_manifest(fx.root + "/manifest.ndjson");
  CHECK(manifest_to_ndjson(loaded) == once);
}

TEST_CASE("empirical prior from a manifest matches hand counts") {
  DatasetManifest m;
  m.taxonomy_version = tagspace::taxonomy().version;
  auto mk = [](int hair, int eye) {
    FaceRecord r;
    r.release_year = 2010;
    r.tags = tagspace::TagVector::Zero();
    r.tags[hair] = 1.0;
    r.tags[tagspace::kEyeBegin + eye] = 1.0;
    return r;
  };
  m.records = {mk(0, 0), mk(0, 0), mk(1, 1), mk(2, 0)};
  const auto prior = empirical_prior(m);
  const auto& f = *prior.empirical_frequencies;
  CHECK(f[0] == doctest::Approx(0.5));
  CHECK(f[1] == doctest::Approx(0.25));
  CHECK(f[tagspace::kEyeBegin] == doctest::Approx(0.75));
}

TEST_CASE("listing csv parses rows and finds images") {
  Fixture fx(2, "fg_ds_csv");
  const std::string csv = fx.root + "/listing.csv";
  {
    std::ofstream f(csv);
    f << "id,name,sell_day,url\n";
    f << "img0,\"some, game\",2006-05-01,http://example.test/0\n";
    f << "img1,other,2007-02-11,http://example.test/1\n";
    f << "missing,gone,2008-01-01,http://example.test/2\n";
  }
  const auto rows = read_listing(csv, fx.root + "/src");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].name == "some, game");
  CHECK(!rows[0].image_path.empty());
  CHECK(!rows[1].image_path.empty());
  CHECK(rows[2].image_path.empty());

  const std::string jlist = fx.root + "/listing.json";
  {
    std::ofstream f(jlist);
    f << R"([{"id": "img0", "name": "json game", "sell_day": "2009-03-03", "url": "http://example.test/9"},
             {"id": 12345, "sell_day": "", "url": ""}])";
  }
  const auto jrows = read_listing(jlist, fx.root + "/src");
  REQUIRE(jrows.size() == 2);
  CHECK(jrows[0].name == "json game");
  CHECK(!jrows[0].image_path.empty());
  CHECK(jrows[1].id == "12345");
  CHECK(jrows[1].image_path.empty());
}
