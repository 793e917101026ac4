#include "facegen/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "facegen/checkpoint.hpp"

namespace facegen::evaluation {

using nlohmann::json;

FidReport make_fid_report(std::vector<double> trials, std::string extractor_id, int n_per_trial) {
  if (trials.empty()) throw ValidationError("fid report: no trials");
  FidReport r;
  r.trials = std::move(trials);
  r.average = std::accumulate(r.trials.begin(), r.trials.end(), 0.0) / static_cast<double>(r.trials.size());
  const auto [lo, hi] = std::minmax_element(r.trials.begin(), r.trials.end());
  r.spread = *hi - *lo;
  r.extractor_id = std::move(extractor_id);
  r.n_per_trial = n_per_trial;
  return r;
}

std::string FidReport::to_json() const {
  json j;
  j["trials"] = trials;
  j["average"] = average;
  j["spread"] = spread;
  j["extractor_id"] = extractor_id;
  j["n_per_trial"] = n_per_trial;
  return j.dump(2) + "\n";
}

std::string FidReport::render_text() const {
  std::ostringstream os;
  os << "FID (" << extractor_id << ", n=" << n_per_trial << " per trial)\n";
  os << "  trial distances:";
  for (double t : trials) os << ' ' << t;
  os << "\n  average: " << average << "\n  max-min spread: " << spread << "\n";
  return os.str();
}

Eigen::MatrixXd GridColorExtractor::extract(const std::vector<img::ImageU8>& images) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), dim());
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& im = images[n];
    if (im.empty()) throw ValidationError("extractor: empty image");
    for (int gy = 0; gy < grid_; ++gy)
      for (int gx = 0; gx < grid_; ++gx) {
        const int x0 = gx * im.width / grid_, x1 = (gx + 1) * im.width / grid_;
        const int y0 = gy * im.height / grid_, y1 = (gy + 1) * im.height / grid_;
        double acc[3] = {0, 0, 0};
        long count = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            const std::uint8_t* p = im.pixel(x, y);
            for (int ch = 0; ch < 3; ++ch) acc[ch] += p[ch];
            ++count;
          }
        for (int ch = 0; ch < 3; ++ch)
          out(static_cast<Eigen::Index>(n), (gy * grid_ + gx) * 3 + ch) =
              count > 0 ? acc[ch] / (255.0 * count) : 0.0;
      }
  }
  return out;
}

Eigen::MatrixXd IdentityProjector::project(const Eigen::MatrixXd& features) {
  if (features.cols() < 2) throw ValidationError("projector: need at least 2 feature dimensions");
  return features.leftCols(2);
}

namespace {

std::string run_command_capture(const std::string& command) {
  std::string output;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) throw IoError("adapter: cannot spawn: " + command);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
  if (pclose(pipe) != 0) throw IoError("adapter: command failed: " + command);
  return output;
}

}  // namespace

Eigen::MatrixXd CommandExtractor::extract(const std::vector<img::ImageU8>& images) {
  namespace fs = std::filesystem;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), dim_);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const std::string tmp = (fs::temp_directory_path() / ("fg_feat_" + std::to_string(n) + ".png")).string();
    img::write_image(images[n], tmp);
    std::string text;
    try {
      text = run_command_capture(command_ + " " + tmp);
    } catch (...) {
      fs::remove(tmp);
      throw;
    }
    fs::remove(tmp);
    const json j = json::parse(text);
    if (!j.is_array() || static_cast<int>(j.size()) != dim_)
      throw IoError("extractor: expected " + std::to_string(dim_) + " floats");
    for (int i = 0; i < dim_; ++i) out(static_cast<Eigen::Index>(n), i) = j[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

Eigen::MatrixXd CommandProjector::project(const Eigen::MatrixXd& features) {
  namespace fs = std::filesystem;
  const std::string tmp = (fs::temp_directory_path() / "fg_features.csv").string();
  {
    std::ofstream f(tmp);
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
      for (Eigen::Index c = 0; c < features.cols(); ++c) f << (c ? "," : "") << features(r, c);
      f << "\n";
    }
  }
  std::string text;
  try {
    text = run_command_capture(command_ + " " + tmp);
  } catch (...) {
    fs::remove(tmp);
    throw;
  }
  fs::remove(tmp);
  Eigen::MatrixXd out(features.rows(), 2);
  std::istringstream is(text);
  std::string line;
  Eigen::Index r = 0;
  while (std::getline(is, line) && r < features.rows()) {
    if (line.empty()) continue;
    double x = 0, y = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf", &x, &y) != 2)
      throw IoError("projector: expected 'x,y' lines");
    out(r, 0) = x;
    out(r, 1) = y;
    ++r;
  }
  if (r != features.rows()) throw IoError("projector: row count mismatch");
  return out;
}

FidReport fid_protocol(const std::vector<img::ImageU8>& real_images,
                       const std::vector<tagspace::TagVector>& real_tags,
                       const ConditionalGenerator& generator, FeatureExtractor& extractor, int n,
                       int trials, std::uint64_t seed, const std::function<void(const std::string&)>& log) {
  if (real_images.size() != real_tags.size())
    throw ValidationError("fid_protocol: image/tag count mismatch");
  if (real_images.size() < 2) throw ValidationError("fid_protocol: need at least 2 real images");
  if (trials < 1) throw ValidationError("fid_protocol: trials must be positive");
  int effective_n = n;
  if (static_cast<std::size_t>(n) > real_images.size()) {
    effective_n = static_cast<int>(real_images.size());
    if (log) log("fid_protocol: pool has " + std::to_string(real_images.size()) + " images; lowering n from " +
                 std::to_string(n) + " to " + std::to_string(effective_n));
  }

  std::vector<double> distances;
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, 0xf1d0000 + static_cast<std::uint64_t>(t));
    // Draw without replacement via a partial Fisher-Yates pass.
    std::vector<std::size_t> pool(real_images.size());
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < effective_n; ++i) {
      const std::size_t j = i + rng.uniform_int(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }

    std::vector<img::ImageU8> reals, fakes;
    reals.reserve(static_cast<std::size_t>(effective_n));
    fakes.reserve(static_cast<std::size_t>(effective_n));
    for (int i = 0; i < effective_n; ++i) {
      const std::size_t idx = pool[static_cast<std::size_t>(i)];
      reals.push_back(real_images[idx]);
      fakes.push_back(generator(real_tags[idx], rng));
    }
    const auto fr = extractor.extract(reals);
    const auto ff = extractor.extract(fakes);
    const auto mr = fit_moments<double>(fr);
    const auto mf = fit_moments<double>(ff);
    distances.push_back(frechet_distance<double>(mr, mf));
  }
  return make_fid_report(std::move(distances), extractor.id(), effective_n);
}

std::array<double, tagspace::kTagDim> label_precision(const ConditionalGenerator& generator,
                                                      dataset::TagEstimator& judge,
                                                      const tagspace::LabelPrior& prior,
                                                      int per_label_samples, std::uint64_t seed) {
  if (per_label_samples < 1) throw ValidationError("label_precision: need at least one sample per label");
  std::array<double, tagspace::kTagDim> out{};
  for (int label = 0; label < tagspace::kTagDim; ++label) {
    Rng rng = Rng::stream(seed, 0xace10000 + static_cast<std::uint64_t>(label));
    int hits = 0;
    for (int s = 0; s < per_label_samples; ++s) {
      const tagspace::TagVector cond = tagspace::sample_condition_with_fixed(prior, label, rng);
      const img::ImageU8 image = generator(cond, rng);
      const tagspace::TagVector judged = tagspace::estimate_tags(judge.estimate(image));
      if (judged[label] == 1.0) ++hits;
    }
    out[static_cast<std::size_t>(label)] = static_cast<double>(hits) / per_label_samples;
  }
  return out;
}

std::string precision_to_json(const std::array<double, tagspace::kTagDim>& p) {
  json j;
  for (int i = 0; i < tagspace::kTagDim; ++i)
    j[tagspace::taxonomy().names[static_cast<std::size_t>(i)]] = p[static_cast<std::size_t>(i)];
  return j.dump(2) + "\n";
}

std::string precision_render_text(const std::array<double, tagspace::kTagDim>& p) {
  std::ostringstream os;
  os << "per-label precision\n";
  for (int i = 0; i < tagspace::kTagDim; ++i) {
    const auto& name = tagspace::taxonomy().names[static_cast<std::size_t>(i)];
    os << "  " << name;
    for (std::size_t k = name.size(); k < 14; ++k) os << ' ';
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", p[static_cast<std::size_t>(i)]);
    os << buf << "\n";
  }
  return os.str();
}

img::ImageU8 montage(const std::vector<img::ImageU8>& cells, int rows, int cols, int padding) {
  if (cells.empty()) throw ValidationError("montage: no cells");
  const int cw = cells[0].width, ch = cells[0].height;
  img::ImageU8 sheet = img::make_image(cols * (cw + padding) + padding, rows * (ch + padding) + padding, 24, 24, 24);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int r = static_cast<int>(i) / cols;
    const int c = static_cast<int>(i) % cols;
    if (r >= rows) break;
    const int ox = padding + c * (cw + padding);
    const int oy = padding + r * (ch + padding);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        const std::uint8_t* src = cells[i].pixel(x, y);
        std::uint8_t* dst = sheet.pixel(ox + x, oy + y);
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
      }
  }
  return sheet;
}

GridResult sample_grid(const SeededGenerator& generator, int noise_dim, const GridParams& params,
                       const tagspace::LabelPrior& prior, std::uint64_t seed) {
  if (params.rows < 1 || params.cols < 1) throw ValidationError("sample_grid: empty grid");
  Rng rng = Rng::stream(seed, 0x67726964);
  auto draw_z = [&](Rng& r) {
    Eigen::VectorXd z(noise_dim);
    for (int i = 0; i < noise_dim; ++i) z[i] = r.normal();
    return z;
  };

  GridResult out;
  const int cells = params.rows * params.cols;
  switch (params.mode) {
    case GridMode::fixed_noise_random_cond: {
      const Eigen::VectorXd z = draw_z(rng);  // shared by every cell
      for (int i = 0; i < cells; ++i) {
        const tagspace::TagVector c =
            params.condition ? *params.condition : tagspace::sample_condition(prior, rng);
        out.conditions.push_back(c);
        out.cells.push_back(generator(z, c));
      }
      break;
    }
    case GridMode::fixed_cond_random_noise: {
      const tagspace::TagVector c =
          params.condition ? *params.condition : tagspace::sample_condition(prior, rng);
      for (int i = 0; i < cells; ++i) {
        out.conditions.push_back(c);
        out.cells.push_back(generator(draw_z(rng), c));
      }
      break;
    }
    case GridMode::interpolation: {
      // Row-wise sheets: endpoints in the first and last column, linear in
      // both z and the (soft) condition in between.
      for (int r = 0; r < params.rows; ++r) {
        const Eigen::VectorXd z0 = draw_z(rng), z1 = draw_z(rng);
        const tagspace::TagVector c0 = params.cond_from ? *params.cond_from : tagspace::sample_condition(prior, rng);
        const tagspace::TagVector c1 = params.cond_to ? *params.cond_to : tagspace::sample_condition(prior, rng);
        for (int i = 0; i < params.cols; ++i) {
          const double t = params.cols == 1 ? 0.0 : static_cast<double>(i) / (params.cols - 1);
          const Eigen::VectorXd z = params.interpolate_noise ? ((1 - t) * z0 + t * z1).eval() : z0;
          const tagspace::TagVector c =
              params.interpolate_condition ? tagspace::interpolate(c0, c1, t) : c0;
          out.conditions.push_back(c);
          out.cells.push_back(generator(z, c));
        }
      }
      break;
    }
  }
  out.sheet = montage(out.cells, params.rows, params.cols);
  return out;
}

ExportedFeatures export_features(const std::vector<img::ImageU8>& images, FeatureExtractor& extractor,
                                 int sample_n, std::uint64_t seed, Projector* projector) {
  ExportedFeatures out;
  out.features.extractor_id = extractor.id();
  if (sample_n == 0 || images.empty()) {
    out.features.vectors = Eigen::MatrixXd(0, extractor.dim());
    return out;  // no projector call on an empty set
  }
  Rng rng = Rng::stream(seed, 0xfea70000);
  std::vector<std::size_t> pool(images.size());
  std::iota(pool.begin(), pool.end(), 0);
  const int take = std::min<int>(sample_n, static_cast<int>(images.size()));
  for (int i = 0; i < take; ++i) {
    const std::size_t j = i + rng.uniform_int(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  std::vector<img::ImageU8> sampled;
  for (int i = 0; i < take; ++i) sampled.push_back(images[pool[static_cast<std::size_t>(i)]]);
  out.features.vectors = extractor.extract(sampled);
  if (projector) {
    out.coords_2d = projector->project(out.features.vectors);
    out.projector_id = projector->id();
  }
  return out;
}

void save_features(const ExportedFeatures& f, const std::string& path) {
  ckpt::TensorStore<double> store;
  store.tensors["features"] = f.features.vectors;
  if (f.coords_2d) store.tensors["coords_2d"] = *f.coords_2d;
  store.meta["extractor_id"] = f.features.extractor_id;
  store.meta["projector_id"] = f.projector_id;
  store.save(path);
}

ExportedFeatures load_features(const std::string& path) {
  auto store = ckpt::TensorStore<double>::load(path);
  ExportedFeatures f;
  f.features.vectors = store.tensors.at("features");
  f.features.extractor_id = store.meta.value("extractor_id", "");
  f.projector_id = store.meta.value("projector_id", "");
  if (store.tensors.count("coords_2d")) f.coords_2d = store.tensors.at("coords_2d");
  return f;
}

}  // namespace facegen::evaluation
