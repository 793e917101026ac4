#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "facegen/image.hpp"
#include "facegen/tagspace.hpp"

// Training-manifest construction: ingest source listings and images, scale
// detector boxes, run tag estimation through an adapter, filter by release
// year and a manual rejection list, and report distribution statistics.
//
// The face detector and tag estimator are external tools integrated behind
// adapter interfaces; this toolkit ships deterministic stubs and a
// subprocess adapter, not the models themselves.

namespace facegen::dataset {

constexpr int kYearUnknown = 0;

struct BoundingBox {
  int x = 0, y = 0, w = 0, h = 0;

  bool operator==(const BoundingBox&) const = default;
};

// Grows a detector box about its center by `factor`, then clamps to the
// image: the box shifts inward to keep its size where possible and
// saturates to the full image edge-to-edge when larger.
BoundingBox scale_box(const BoundingBox& box, double factor, int image_w, int image_h);

struct FaceRecord {
  std::string source_url;
  std::string source_id;
  std::string image_ref;  // content-addressed crop file: <sha256>.png
  std::string image_sha256;
  int source_w = 0, source_h = 0;
  BoundingBox detector_box;
  BoundingBox scaled_box;
  int release_year = kYearUnknown;
  tagspace::TagVector tags = tagspace::TagVector::Zero();
  bool rejected = false;
  std::string rejection_reason;
};

struct DatasetManifest {
  std::vector<FaceRecord> records;
  std::string taxonomy_version;
  int image_size = 128;

  std::size_t active_count() const;
};

// --- adapters --------------------------------------------------------------

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<BoundingBox> detect(const img::ImageU8& image) = 0;
};

class TagEstimator {
 public:
  virtual ~TagEstimator() = default;
  // Probabilities for the 34 taxonomy attributes, in taxonomy order.
  virtual tagspace::TagVector estimate(const img::ImageU8& image) = 0;
};

// Deterministic stand-ins for pipeline tests: the stub detector returns one
// centered box covering 60% of the image; the stub estimator hashes the
// image bytes into a reproducible probability vector.
class StubDetector : public FaceDetector {
 public:
  std::vector<BoundingBox> detect(const img::ImageU8& image) override;
};

class StubEstimator : public TagEstimator {
 public:
  tagspace::TagVector estimate(const img::ImageU8& image) override;
};

// Runs `command <image-file>` and parses a JSON array of {x,y,w,h} boxes /
// an array of 34 probabilities from stdout; this is how the external
// cascade detector and the tag-estimation CNN plug in.
class CommandDetector : public FaceDetector {
 public:
  explicit CommandDetector(std::string command) : command_(std::move(command)) {}
  std::vector<BoundingBox> detect(const img::ImageU8& image) override;

 private:
  std::string command_;
};

class CommandEstimator : public TagEstimator {
 public:
  explicit CommandEstimator(std::string command) : command_(std::move(command)) {}
  tagspace::TagVector estimate(const img::ImageU8& image) override;

 private:
  std::string command_;
};

// --- ingestion ---------------------------------------------------------------

// One row of the source listing (the columns of the upstream database
// export: id, name, sell date, page url). `image_path` points at the
// operator-downloaded illustration for that row.
struct SourceRow {
  std::string id;
  std::string name;
  std::string sell_day;  // YYYY-MM-DD, empty if unknown
  std::string url;
  std::string image_path;
};

// CSV (id,name,sell_day,url header optional) or a JSON array of objects
// with those keys, chosen by file extension. Image files are looked up as
// <images_dir>/<id>.png or .ppm; rows without one keep an empty image_path.
std::vector<SourceRow> read_listing(const std::string& path, const std::string& images_dir);
std::vector<SourceRow> read_listing_csv(const std::string& path, const std::string& images_dir);
std::vector<SourceRow> read_listing_json(const std::string& path, const std::string& images_dir);

struct IngestOptions {
  double box_scale = 1.5;
  int image_size = 128;
  std::string out_image_dir;  // crops are written here, content-addressed
  std::function<void(const std::string&)> log;  // skipped-image reporting
};

// Detects faces in every listed image, scales each box, crops, resizes,
// estimates tags, and emits one record per face. A detector or estimator
// failure skips that image (logged) and never aborts the batch.
DatasetManifest ingest(const std::vector<SourceRow>& listing, FaceDetector& detector,
                       TagEstimator& estimator, const IngestOptions& options);

// Marks records rejected when release_year < min_year (unknown years cannot
// satisfy the filter and are rejected) or when their image_ref appears in
// the rejection list. Idempotent.
DatasetManifest filter(DatasetManifest manifest, int min_year = 2005,
                       const std::set<std::string>& rejection_list = {});

// --- statistics ---------------------------------------------------------------

struct StatsReport {
  std::map<int, long> per_year;            // kYearUnknown bucket for unknown
  std::map<int, long> short_edge_hist;     // source short edge, bucketed by 64px
  std::array<long, tagspace::kTagDim> per_tag{};
  long n_records = 0;
  long n_active = 0;

  std::string to_json() const;
  std::string render_text() const;  // bar charts for terminal / report files
};

StatsReport stats(const DatasetManifest& manifest);

// Label prior measured from the manifest's active records.
tagspace::LabelPrior empirical_prior(const DatasetManifest& manifest);

// Loads every active record's cropped image; order matches the manifest.
std::pair<std::vector<img::ImageU8>, std::vector<tagspace::TagVector>> load_active_images(
    const DatasetManifest& manifest, const std::string& images_dir);

// --- persistence ---------------------------------------------------------------

// Newline-delimited JSON: a header line, then one record per line. Stable
// key ordering, so serialize(parse(x)) == x byte-for-byte.
std::string manifest_to_ndjson(const DatasetManifest& manifest);
DatasetManifest manifest_from_ndjson(const std::string& text);
void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

}  // namespace facegen::dataset
