#pragma once

#include <memory>
#include <string>

#include "facegen/nets.hpp"
#include "facegen/tagspace.hpp"

// Self-contained model bundle for serving: generator tensors, architecture
// manifest, taxonomy manifest, empirical label prior, and a content hash
// that doubles as the model version. The server loads a bundle directory
// with no other inputs; any byte flip fails hash verification on load.

namespace facegen::bundle {

struct SizeReport {
  std::uint64_t total_bytes = 0;
  std::vector<std::pair<std::string, std::uint64_t>> per_tensor;
  std::string to_json() const;
  std::string render_text() const;
};

struct ExportResult {
  std::string model_version;
  SizeReport size;
};

// Packs a training checkpoint's generator into out_dir. The prior must
// carry the same taxonomy version as this build; a mismatch refuses with
// both versions spelled out.
ExportResult export_bundle(const std::string& checkpoint_path, const std::string& prior_json,
                           const std::string& out_dir);

struct LoadedBundle {
  std::unique_ptr<nets::GeneratorModel<double>> generator;
  nets::GeneratorSpec spec;
  tagspace::LabelPrior prior;
  std::string taxonomy_manifest;
  std::string model_version;
  int output_size = 0;
};

// Verifies every file hash against the bundle index before constructing
// the generator.
LoadedBundle load_bundle(const std::string& dir);

}  // namespace facegen::bundle
