#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "facegen/export_bundle.hpp"
#include "facegen/tagspace.hpp"

// HTTP generation service over an exported bundle.
//
//   POST /v1/generate  {"assigned": {"blonde hair": true, ...},
//                       "count": 1..16, "seed": optional}
//     -> {"images": [base64 PNG, ...], "resolved_conditions": [[34 floats]],
//         "model_version": "...", "latency_ms": ...}
//   GET /v1/taxonomy   -> taxonomy manifest
//   GET /v1/health     -> {"status", "model_version", "output_size"}
//
// Attribute names are taxonomy strings. Assigned attributes are honored
// exactly; unassigned hair and eye colors are drawn from the bundle's
// empirical prior renormalized over the colors left possible, unassigned
// binaries from their empirical frequencies. The loaded model is shared
// read-only; per-request randomness is isolated by seed derivation
// (request seed, or startup entropy xor a request counter when unseeded),
// so identical seeded requests return identical images.

namespace facegen::server {

struct GenerationRequest {
  std::map<std::string, bool> assigned;
  int count = 1;
  std::optional<std::uint64_t> seed;
};

GenerationRequest parse_request(const std::string& body);  // throws ValidationError (422)

// Draws `count` hard condition vectors honoring every assignment.
std::vector<tagspace::TagVector> resolve_conditions(const GenerationRequest& request,
                                                    const tagspace::LabelPrior& empirical_prior,
                                                    Rng& rng);

struct ServedImage {
  std::vector<std::uint8_t> png;
  tagspace::TagVector condition;
};

struct ServerOptions {
  std::string bind = "127.0.0.1";  // FACEGEN_BIND overrides
  int port = 8080;
  int max_concurrency = 4;
};

class ModelServer {
 public:
  ModelServer(bundle::LoadedBundle bundle, ServerOptions options);
  ~ModelServer();

  // Blocks until stop(); returns false if the port cannot be bound.
  bool run();
  // Starts in a background thread and waits until the listener is up.
  bool start();
  void stop();
  int port() const { return options_.port; }

  // Core generation path, also used directly by tests and the CLI.
  std::vector<ServedImage> generate(const GenerationRequest& request);
  const std::string& model_version() const { return bundle_.model_version; }

 private:
  struct Impl;
  bundle::LoadedBundle bundle_;
  ServerOptions options_;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::uint64_t> request_counter_{0};
  std::uint64_t startup_entropy_ = 0;
};

}  // namespace facegen::server
