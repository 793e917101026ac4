#include "facegen/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "facegen/digest.hpp"

namespace facegen::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

BoundingBox scale_box(const BoundingBox& box, double factor, int image_w, int image_h) {
  if (box.w <= 0 || box.h <= 0) throw ValidationError("scale_box: degenerate box");
  if (factor < 1.0) throw ValidationError("scale_box: factor must be >= 1");
  if (box.x < 0 || box.y < 0 || box.x + box.w > image_w || box.y + box.h > image_h)
    throw ValidationError("scale_box: box outside image");

  // Symmetric integer padding: both sides grow by the same amount, so the
  // center is preserved exactly on the pixel grid before clamping.
  const int pad_x = static_cast<int>(std::lround((factor - 1.0) * box.w / 2.0));
  const int pad_y = static_cast<int>(std::lround((factor - 1.0) * box.h / 2.0));
  const int w = box.w + 2 * pad_x;
  const int h = box.h + 2 * pad_y;

  BoundingBox out;
  if (w >= image_w) {
    out.x = 0;
    out.w = image_w;
  } else {
    out.w = w;
    out.x = std::clamp(box.x - pad_x, 0, image_w - w);  // shift inward, keep size
  }
  if (h >= image_h) {
    out.y = 0;
    out.h = image_h;
  } else {
    out.h = h;
    out.y = std::clamp(box.y - pad_y, 0, image_h - h);
  }
  return out;
}

std::size_t DatasetManifest::active_count() const {
  std::size_t n = 0;
  for (const auto& r : records)
    if (!r.rejected) ++n;
  return n;
}

// --- stub adapters -----------------------------------------------------------

std::vector<BoundingBox> StubDetector::detect(const img::ImageU8& image) {
  BoundingBox b;
  b.w = std::max(1, image.width * 3 / 5);
  b.h = std::max(1, image.height * 3 / 5);
  b.x = (image.width - b.w) / 2;
  b.y = (image.height - b.h) / 2;
  return {b};
}

tagspace::TagVector StubEstimator::estimate(const img::ImageU8& image) {
  const std::string digest = Sha256::of(image.rgb.data(), image.rgb.size());
  std::uint64_t seed = 0;
  for (int i = 0; i < 16; ++i) seed = seed * 16 + (digest[i] <= '9' ? digest[i] - '0' : digest[i] - 'a' + 10);
  Rng rng(seed);
  tagspace::TagVector probs;
  for (int i = 0; i < tagspace::kTagDim; ++i) probs[i] = rng.uniform();
  return probs;
}

// --- subprocess adapters -----------------------------------------------------

namespace {

std::string run_command_on_image(const std::string& command, const img::ImageU8& image) {
  const std::string tmp =
      (fs::temp_directory_path() / ("fg_adapter_" + Sha256::of(image.rgb.data(), image.rgb.size()).substr(0, 16) + ".png"))
          .string();
  img::write_image(image, tmp);
  const std::string full = command + " " + tmp;
  std::string output;
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) {
    fs::remove(tmp);
    throw IoError("adapter: cannot spawn: " + full);
  }
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
  const int rc = pclose(pipe);
  fs::remove(tmp);
  if (rc != 0) throw IoError("adapter: command failed (" + std::to_string(rc) + "): " + full);
  return output;
}

}  // namespace

std::vector<BoundingBox> CommandDetector::detect(const img::ImageU8& image) {
  const json j = json::parse(run_command_on_image(command_, image));
  std::vector<BoundingBox> out;
  for (const auto& e : j) {
    BoundingBox b;
    b.x = e.at("x").get<int>();
    b.y = e.at("y").get<int>();
    b.w = e.at("w").get<int>();
    b.h = e.at("h").get<int>();
    out.push_back(b);
  }
  return out;
}

tagspace::TagVector CommandEstimator::estimate(const img::ImageU8& image) {
  const json j = json::parse(run_command_on_image(command_, image));
  if (!j.is_array() || j.size() != tagspace::kTagDim)
    throw IoError("adapter: estimator must return 34 probabilities");
  tagspace::TagVector probs;
  for (int i = 0; i < tagspace::kTagDim; ++i) probs[i] = j[static_cast<std::size_t>(i)].get<double>();
  return probs;
}

// --- listing -----------------------------------------------------------------

namespace {

int year_of(const std::string& sell_day) {
  if (sell_day.size() < 4) return kYearUnknown;
  int year = 0;
  for (int i = 0; i < 4; ++i) {
    if (sell_day[i] < '0' || sell_day[i] > '9') return kYearUnknown;
    year = year * 10 + (sell_day[i] - '0');
  }
  return year;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

}  // namespace

namespace {

void attach_image_path(SourceRow& row, const std::string& images_dir) {
  for (const char* ext : {".png", ".ppm"}) {
    const std::string candidate = images_dir + "/" + row.id + ext;
    if (fs::exists(candidate)) {
      row.image_path = candidate;
      return;
    }
  }
}

}  // namespace

std::vector<SourceRow> read_listing_csv(const std::string& path, const std::string& images_dir) {
  std::ifstream f(path);
  if (!f) throw IoError("listing: cannot open " + path);
  std::vector<SourceRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first && fields.size() >= 1 && fields[0] == "id") {
      first = false;
      continue;  // header
    }
    first = false;
    if (fields.size() < 4) throw ValidationError("listing: expected columns id,name,sell_day,url");
    SourceRow r;
    r.id = fields[0];
    r.name = fields[1];
    r.sell_day = fields[2];
    r.url = fields[3];
    attach_image_path(r, images_dir);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SourceRow> read_listing_json(const std::string& path, const std::string& images_dir) {
  std::ifstream f(path);
  if (!f) throw IoError("listing: cannot open " + path);
  json doc;
  try {
    f >> doc;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("listing: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ValidationError("listing: expected a JSON array of rows");
  std::vector<SourceRow> rows;
  for (const auto& entry : doc) {
    SourceRow r;
    r.id = entry.at("id").is_string() ? entry.at("id").get<std::string>()
                                      : std::to_string(entry.at("id").get<long>());
    r.name = entry.value("name", "");
    r.sell_day = entry.value("sell_day", "");
    r.url = entry.value("url", "");
    attach_image_path(r, images_dir);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SourceRow> read_listing(const std::string& path, const std::string& images_dir) {
  if (path.ends_with(".json")) return read_listing_json(path, images_dir);
  return read_listing_csv(path, images_dir);
}

// --- ingest --------------------------------------------------------------------

DatasetManifest ingest(const std::vector<SourceRow>& listing, FaceDetector& detector,
                       TagEstimator& estimator, const IngestOptions& options) {
  if (options.out_image_dir.empty()) throw ValidationError("ingest: out_image_dir is required");
  fs::create_directories(options.out_image_dir);
  auto log = options.log ? options.log : [](const std::string&) {};

  DatasetManifest manifest;
  manifest.taxonomy_version = tagspace::taxonomy().version;
  manifest.image_size = options.image_size;

  for (const auto& row : listing) {
    if (row.image_path.empty()) {
      log("skip " + row.id + ": no image file");
      continue;
    }
    try {
      const img::ImageU8 image = img::read_image(row.image_path);
      const auto boxes = detector.detect(image);
      for (const auto& box : boxes) {
        FaceRecord rec;
        rec.source_url = row.url;
        rec.source_id = row.id;
        rec.source_w = image.width;
        rec.source_h = image.height;
        rec.detector_box = box;
        rec.scaled_box = scale_box(box, options.box_scale, image.width, image.height);
        rec.release_year = year_of(row.sell_day);

        img::ImageU8 face = img::crop(image, rec.scaled_box.x, rec.scaled_box.y, rec.scaled_box.w, rec.scaled_box.h);
        face = img::resize_bilinear(face, options.image_size, options.image_size);
        const auto png = img::encode_png(face);
        rec.image_sha256 = Sha256::of(png.data(), png.size());
        rec.image_ref = rec.image_sha256 + ".png";
        const std::string out_path = options.out_image_dir + "/" + rec.image_ref;
        if (!fs::exists(out_path)) {
          std::ofstream out(out_path, std::ios::binary);
          out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
          if (!out) throw IoError("ingest: cannot write " + out_path);
        }
        rec.tags = tagspace::estimate_tags(estimator.estimate(face));
        manifest.records.push_back(std::move(rec));
      }
    } catch (const std::exception& e) {
      log("skip " + row.id + ": " + e.what());
    }
  }
  return manifest;
}

DatasetManifest filter(DatasetManifest manifest, int min_year, const std::set<std::string>& rejection_list) {
  for (auto& r : manifest.records) {
    if (r.rejected) continue;
    if (r.release_year == kYearUnknown) {
      r.rejected = true;
      r.rejection_reason = "release year unknown";
    } else if (r.release_year < min_year) {
      r.rejected = true;
      r.rejection_reason = "released before " + std::to_string(min_year);
    } else if (rejection_list.count(r.image_ref)) {
      r.rejected = true;
      r.rejection_reason = "manual rejection";
    }
  }
  return manifest;
}

// --- stats ---------------------------------------------------------------------

StatsReport stats(const DatasetManifest& manifest) {
  StatsReport rep;
  rep.n_records = static_cast<long>(manifest.records.size());
  for (const auto& r : manifest.records) {
    rep.per_year[r.release_year]++;
    const int short_edge = std::min(r.source_w, r.source_h);
    rep.short_edge_hist[(short_edge / 64) * 64]++;
    if (!r.rejected) {
      ++rep.n_active;
      for (int i = 0; i < tagspace::kTagDim; ++i)
        if (r.tags[i] == 1.0) rep.per_tag[static_cast<std::size_t>(i)]++;
    }
  }
  return rep;
}

std::string StatsReport::to_json() const {
  json j;
  json years = json::object();
  for (const auto& [y, n] : per_year) years[std::to_string(y)] = n;
  j["per_year"] = years;
  json edges = json::object();
  for (const auto& [e, n] : short_edge_hist) edges[std::to_string(e)] = n;
  j["short_edge_hist"] = edges;
  json tags = json::object();
  for (int i = 0; i < tagspace::kTagDim; ++i)
    tags[tagspace::taxonomy().names[static_cast<std::size_t>(i)]] = per_tag[static_cast<std::size_t>(i)];
  j["per_tag"] = tags;
  j["n_records"] = n_records;
  j["n_active"] = n_active;
  return j.dump(2) + "\n";
}

namespace {

void render_hist(std::ostringstream& os, const std::string& title,
                 const std::vector<std::pair<std::string, long>>& rows) {
  os << title << "\n";
  long max_n = 1;
  for (const auto& [_, n] : rows) max_n = std::max(max_n, n);
  for (const auto& [label, n] : rows) {
    const int bar = static_cast<int>(50.0 * n / max_n);
    os << "  " << label;
    for (std::size_t i = label.size(); i < 14; ++i) os << ' ';
    os << std::string(static_cast<std::size_t>(bar), '#') << ' ' << n << "\n";
  }
}

}  // namespace

std::string StatsReport::render_text() const {
  std::ostringstream os;
  std::vector<std::pair<std::string, long>> rows;
  for (const auto& [y, n] : per_year)
    rows.emplace_back(y == kYearUnknown ? "unknown" : std::to_string(y), n);
  render_hist(os, "records by release year", rows);
  rows.clear();
  for (const auto& [e, n] : short_edge_hist)
    rows.emplace_back(std::to_string(e) + "-" + std::to_string(e + 63), n);
  render_hist(os, "source images by short edge (px)", rows);
  rows.clear();
  for (int i = 0; i < tagspace::kTagDim; ++i)
    rows.emplace_back(tagspace::taxonomy().names[static_cast<std::size_t>(i)], per_tag[static_cast<std::size_t>(i)]);
  render_hist(os, "active records by tag", rows);
  os << "records: " << n_records << "  active: " << n_active << "\n";
  return os.str();
}

tagspace::LabelPrior empirical_prior(const DatasetManifest& manifest) {
  const StatsReport rep = stats(manifest);
  if (rep.n_active == 0) throw ValidationError("empirical_prior: manifest has no active records");
  return tagspace::LabelPrior::empirical_from_counts(rep.per_tag);
}

// --- persistence ----------------------------------------------------------------

namespace {

json record_to_json(const FaceRecord& r) {
  json j;
  j["type"] = "record";
  j["source_url"] = r.source_url;
  j["source_id"] = r.source_id;
  j["image_ref"] = r.image_ref;
  j["image_sha256"] = r.image_sha256;
  j["source_w"] = r.source_w;
  j["source_h"] = r.source_h;
  j["detector_box"] = {{"x", r.detector_box.x}, {"y", r.detector_box.y}, {"w", r.detector_box.w}, {"h", r.detector_box.h}};
  j["scaled_box"] = {{"x", r.scaled_box.x}, {"y", r.scaled_box.y}, {"w", r.scaled_box.w}, {"h", r.scaled_box.h}};
  j["release_year"] = r.release_year;
  std::vector<double> tags(r.tags.data(), r.tags.data() + tagspace::kTagDim);
  j["tags"] = tags;
  j["rejected"] = r.rejected;
  if (!r.rejection_reason.empty()) j["rejection_reason"] = r.rejection_reason;
  return j;
}

FaceRecord record_from_json(const json& j) {
  FaceRecord r;
  r.source_url = j.value("source_url", "");
  r.source_id = j.value("source_id", "");
  r.image_ref = j.value("image_ref", "");
  r.image_sha256 = j.value("image_sha256", "");
  r.source_w = j.value("source_w", 0);
  r.source_h = j.value("source_h", 0);
  const auto& db = j.at("detector_box");
  r.detector_box = {db.at("x").get<int>(), db.at("y").get<int>(), db.at("w").get<int>(), db.at("h").get<int>()};
  const auto& sb = j.at("scaled_box");
  r.scaled_box = {sb.at("x").get<int>(), sb.at("y").get<int>(), sb.at("w").get<int>(), sb.at("h").get<int>()};
  r.release_year = j.value("release_year", kYearUnknown);
  const auto tags = j.at("tags").get<std::vector<double>>();
  if (tags.size() != tagspace::kTagDim) throw ValidationError("manifest: record tags must have 34 entries");
  std::copy(tags.begin(), tags.end(), r.tags.data());
  r.rejected = j.value("rejected", false);
  r.rejection_reason = j.value("rejection_reason", "");
  return r;
}

}  // namespace

std::string manifest_to_ndjson(const DatasetManifest& manifest) {
  std::ostringstream os;
  json header;
  header["type"] = "header";
  header["taxonomy_version"] = manifest.taxonomy_version;
  header["image_size"] = manifest.image_size;
  os << header.dump() << "\n";
  for (const auto& r : manifest.records) os << record_to_json(r).dump() << "\n";
  return os.str();
}

DatasetManifest manifest_from_ndjson(const std::string& text) {
  DatasetManifest m;
  std::istringstream is(text);
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "header") {
      m.taxonomy_version = j.at("taxonomy_version").get<std::string>();
      m.image_size = j.at("image_size").get<int>();
      have_header = true;
    } else if (type == "record") {
      m.records.push_back(record_from_json(j));
    } else {
      throw ValidationError("manifest: unknown line type '" + type + "'");
    }
  }
  if (!have_header) throw ValidationError("manifest: missing header line");
  return m;
}

std::pair<std::vector<img::ImageU8>, std::vector<tagspace::TagVector>> load_active_images(
    const DatasetManifest& manifest, const std::string& images_dir) {
  std::vector<img::ImageU8> images;
  std::vector<tagspace::TagVector> tags;
  for (const auto& r : manifest.records) {
    if (r.rejected) continue;
    images.push_back(img::read_image(images_dir + "/" + r.image_ref));
    tags.push_back(r.tags);
  }
  return {std::move(images), std::move(tags)};
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("manifest: cannot open " + tmp);
    f << manifest_to_ndjson(manifest);
    if (!f) throw IoError("manifest: short write");
  }
  fs::rename(tmp, path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("manifest: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return manifest_from_ndjson(os.str());
}

}  // namespace facegen::dataset
