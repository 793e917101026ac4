#include "facegen/server.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "facegen/digest.hpp"
#include "facegen/image.hpp"

namespace facegen::server {

using nlohmann::json;

GenerationRequest parse_request(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("request: invalid JSON: ") + e.what());
  }
  GenerationRequest r;
  if (j.contains("assigned")) {
    if (!j["assigned"].is_object()) throw ValidationError("request: 'assigned' must be an object");
    for (const auto& [name, value] : j["assigned"].items()) {
      if (!value.is_boolean()) throw ValidationError("request: assignment for '" + name + "' must be boolean");
      r.assigned[name] = value.get<bool>();
    }
  }
  r.count = j.value("count", 1);
  if (r.count < 1 || r.count > 16) throw ValidationError("request: count must be in [1, 16]");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ValidationError("request: seed must be an integer");
    r.seed = j["seed"].get<std::uint64_t>();
  }
  return r;
}

namespace {

// Validates names and group exclusivity; returns per-index assignment
// (-1 unassigned, 0 forced off, 1 forced on).
std::array<int, tagspace::kTagDim> assignment_table(const std::map<std::string, bool>& assigned) {
  const auto& tax = tagspace::taxonomy();
  std::array<int, tagspace::kTagDim> table;
  table.fill(-1);
  for (const auto& [name, value] : assigned) {
    const int i = tax.index_of(name);
    if (i < 0) throw ValidationError("request: unknown attribute '" + name + "'");
    table[static_cast<std::size_t>(i)] = value ? 1 : 0;
  }
  int hair_on = 0, eye_on = 0;
  for (int i = 0; i < tagspace::kHairCount; ++i)
    if (table[static_cast<std::size_t>(tagspace::kHairBegin + i)] == 1) ++hair_on;
  for (int i = 0; i < tagspace::kEyeCount; ++i)
    if (table[static_cast<std::size_t>(tagspace::kEyeBegin + i)] == 1) ++eye_on;
  if (hair_on > 1) throw ValidationError("request: more than one hair color assigned true");
  if (eye_on > 1) throw ValidationError("request: more than one eye color assigned true");
  return table;
}

int draw_color(const std::array<int, tagspace::kTagDim>& table, const tagspace::TagVector& freqs,
               int begin, int count, Rng& rng, const char* group) {
  for (int i = begin; i < begin + count; ++i)
    if (table[static_cast<std::size_t>(i)] == 1) return i;
  // Renormalize the empirical frequencies over the colors not forced off.
  double total = 0;
  for (int i = begin; i < begin + count; ++i)
    if (table[static_cast<std::size_t>(i)] != 0) total += freqs[i];
  if (total <= 0)
    throw ValidationError(std::string("request: every ") + group + " is excluded or has zero prior mass");
  double u = rng.uniform() * total;
  for (int i = begin; i < begin + count; ++i) {
    if (table[static_cast<std::size_t>(i)] == 0) continue;
    u -= freqs[i];
    if (u < 0) return i;
  }
  for (int i = begin + count - 1; i >= begin; --i)
    if (table[static_cast<std::size_t>(i)] != 0) return i;
  throw ValidationError(std::string("request: no candidate ") + group);
}

}  // namespace

std::vector<tagspace::TagVector> resolve_conditions(const GenerationRequest& request,
                                                    const tagspace::LabelPrior& empirical_prior,
                                                    Rng& rng) {
  empirical_prior.validate();
  if (empirical_prior.kind != tagspace::PriorKind::empirical || !empirical_prior.empirical_frequencies)
    throw ValidationError("resolve_conditions: server needs an empirical prior");
  const auto table = assignment_table(request.assigned);
  const tagspace::TagVector& freqs = *empirical_prior.empirical_frequencies;

  std::vector<tagspace::TagVector> out;
  out.reserve(static_cast<std::size_t>(request.count));
  for (int k = 0; k < request.count; ++k) {
    tagspace::TagVector v = tagspace::TagVector::Zero();
    v[draw_color(table, freqs, tagspace::kHairBegin, tagspace::kHairCount, rng, "hair color")] = 1.0;
    v[draw_color(table, freqs, tagspace::kEyeBegin, tagspace::kEyeCount, rng, "eye color")] = 1.0;
    for (int i = tagspace::kBinaryBegin; i < tagspace::kBinaryBegin + tagspace::kBinaryCount; ++i) {
      const int forced = table[static_cast<std::size_t>(i)];
      if (forced == 1)
        v[i] = 1.0;
      else if (forced == -1 && rng.bernoulli(freqs[i]))
        v[i] = 1.0;
    }
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ModelServer::Impl {
  httplib::Server http;
  std::thread worker;
  std::mutex gen_mutex;  // generation slots
  std::condition_variable gen_cv;
  int in_flight = 0;
};

ModelServer::ModelServer(bundle::LoadedBundle bundle, ServerOptions options)
    : bundle_(std::move(bundle)), options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  if (const char* bind = std::getenv("FACEGEN_BIND")) options_.bind = bind;
  startup_entropy_ = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());

  impl_->http.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    json j;
    j["status"] = "ok";
    j["model_version"] = bundle_.model_version;
    j["output_size"] = bundle_.output_size;
    j["backbone"] = bundle_.spec.backbone;
    res.set_content(j.dump(), "application/json");
  });

  impl_->http.Get("/v1/taxonomy", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(bundle_.taxonomy_manifest, "application/json");
  });

  impl_->http.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
    const auto started = std::chrono::steady_clock::now();
    try {
      const GenerationRequest request = parse_request(req.body);
      {
        // Concurrency cap: block until a generation slot frees up.
        std::unique_lock<std::mutex> lock(impl_->gen_mutex);
        impl_->gen_cv.wait(lock, [this] { return impl_->in_flight < options_.max_concurrency; });
        ++impl_->in_flight;
      }
      std::vector<ServedImage> images;
      try {
        images = generate(request);
      } catch (...) {
        std::lock_guard<std::mutex> lock(impl_->gen_mutex);
        --impl_->in_flight;
        impl_->gen_cv.notify_one();
        throw;
      }
      {
        std::lock_guard<std::mutex> lock(impl_->gen_mutex);
        --impl_->in_flight;
        impl_->gen_cv.notify_one();
      }
      json j;
      json imgs = json::array();
      json conds = json::array();
      for (const auto& im : images) {
        imgs.push_back(base64_encode(im.png));
        std::vector<double> c(im.condition.data(), im.condition.data() + tagspace::kTagDim);
        conds.push_back(c);
      }
      j["images"] = imgs;
      j["resolved_conditions"] = conds;
      j["model_version"] = bundle_.model_version;
      j["latency_ms"] =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      res.set_content(j.dump(), "application/json");
    } catch (const ValidationError& e) {
      res.status = 422;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

ModelServer::~ModelServer() { stop(); }

std::vector<ServedImage> ModelServer::generate(const GenerationRequest& request) {
  if (!bundle_.generator) throw IoError("server: no model loaded");
  const std::uint64_t seed =
      request.seed ? *request.seed : (startup_entropy_ ^ request_counter_.fetch_add(1));
  Rng cond_rng = Rng::stream(seed, 0xc0de0001);
  Rng noise_rng = Rng::stream(seed, 0xc0de0002);

  const auto conditions = resolve_conditions(request, bundle_.prior, cond_rng);
  const int noise_dim = bundle_.generator->noise_dim();
  Eigen::MatrixXd z(noise_dim, request.count);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = noise_rng.normal();
  Eigen::MatrixXd c(tagspace::kTagDim, request.count);
  for (int k = 0; k < request.count; ++k) c.col(k) = conditions[static_cast<std::size_t>(k)];

  const Eigen::MatrixXd cols = nets::generate_images<double>(*bundle_.generator, z, c, /*chunk=*/2);
  std::vector<ServedImage> out;
  out.reserve(static_cast<std::size_t>(request.count));
  for (int k = 0; k < request.count; ++k) {
    ServedImage im;
    im.condition = conditions[static_cast<std::size_t>(k)];
    const img::ImageU8 image =
        img::from_column<double>(cols.col(k), bundle_.output_size, bundle_.output_size);
    im.png = img::encode_png(image);
    out.push_back(std::move(im));
  }
  return out;
}

bool ModelServer::run() { return impl_->http.listen(options_.bind, options_.port); }

bool ModelServer::start() {
  impl_->worker = std::thread([this] { impl_->http.listen(options_.bind, options_.port); });
  for (int i = 0; i < 200; ++i) {
    if (impl_->http.is_running()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  return false;
}

void ModelServer::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace facegen::server
