#include "facegen/export_bundle.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "facegen/checkpoint.hpp"
#include "facegen/digest.hpp"

namespace facegen::bundle {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("export: cannot open " + path);
  f << text;
  if (!f) throw IoError("export: short write to " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("bundle: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

std::string SizeReport::to_json() const {
  json j;
  j["total_bytes"] = total_bytes;
  json t = json::array();
  for (const auto& [name, bytes] : per_tensor) t.push_back({{"name", name}, {"bytes", bytes}});
  j["per_tensor"] = t;
  return j.dump(2) + "\n";
}

std::string SizeReport::render_text() const {
  std::ostringstream os;
  os << "bundle size: " << total_bytes << " bytes\n";
  for (const auto& [name, bytes] : per_tensor) os << "  " << name << ": " << bytes << "\n";
  return os.str();
}

ExportResult export_bundle(const std::string& checkpoint_path, const std::string& prior_json,
                           const std::string& out_dir) {
  const tagspace::LabelPrior prior = tagspace::prior_from_json(prior_json);
  const json prior_doc = json::parse(prior_json);
  const std::string prior_tax = prior_doc.value("taxonomy_version", "");
  const std::string current_tax = tagspace::taxonomy().version;
  if (prior_tax != current_tax)
    throw ValidationError("export: taxonomy version mismatch: prior carries '" + prior_tax +
                          "' but this build is '" + current_tax + "'");

  auto store = ckpt::TensorStore<double>::load(checkpoint_path);
  if (!store.meta.contains("generator_arch"))
    throw ValidationError("export: checkpoint has no generator architecture manifest");

  // Keep only generator tensors; drop the discriminator and optimizer state.
  ckpt::TensorStore<double> gen_store;
  gen_store.meta["generator_arch"] = store.meta["generator_arch"];
  gen_store.meta["step"] = store.meta.value("step", 0L);
  SizeReport size;
  for (const auto& [name, t] : store.tensors) {
    if (name.rfind("g.", 0) != 0) continue;
    gen_store.tensors[name] = t;
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * sizeof(double);
    size.per_tensor.emplace_back(name, bytes);
    size.total_bytes += bytes;
  }
  if (gen_store.tensors.empty()) throw ValidationError("export: checkpoint has no generator tensors");

  fs::create_directories(out_dir);
  const std::string gen_path = out_dir + "/generator.fgt";
  gen_store.save(gen_path);
  write_text(out_dir + "/taxonomy.json", tagspace::taxonomy_manifest_json());
  write_text(out_dir + "/prior.json", tagspace::prior_to_json(prior));
  write_text(out_dir + "/arch.json", gen_store.meta["generator_arch"].dump(2) + "\n");

  // Bundle index: per-file hashes, then the model version as the hash of
  // the hashes in file-name order.
  json index;
  index["format"] = "facegen-bundle-1";
  json files = json::object();
  for (const char* name : {"generator.fgt", "taxonomy.json", "prior.json", "arch.json"})
    files[name] = Sha256::of_file(out_dir + "/" + std::string(name));
  std::string combined;
  for (const auto& [name, digest] : files.items()) combined += digest.get<std::string>();
  index["files"] = files;
  const std::string version = Sha256::of(combined).substr(0, 16);
  index["model_version"] = version;
  write_text(out_dir + "/bundle.json", index.dump(2) + "\n");

  ExportResult out;
  out.model_version = version;
  out.size = size;
  return out;
}

LoadedBundle load_bundle(const std::string& dir) {
  const json index = json::parse(read_text(dir + "/bundle.json"));
  if (index.value("format", "") != "facegen-bundle-1")
    throw ValidationError("bundle: unrecognized format in " + dir);

  std::string combined;
  for (const auto& [name, digest] : index.at("files").items()) {
    const std::string actual = Sha256::of_file(dir + "/" + name);
    if (actual != digest.get<std::string>())
      throw IoError("bundle: integrity check failed for " + name + " (expected " +
                    digest.get<std::string>().substr(0, 12) + "..., got " + actual.substr(0, 12) + "...)");
    combined += actual;
  }
  if (Sha256::of(combined).substr(0, 16) != index.at("model_version").get<std::string>())
    throw IoError("bundle: model_version does not match file hashes");

  LoadedBundle out;
  out.model_version = index.at("model_version").get<std::string>();
  out.taxonomy_manifest = read_text(dir + "/taxonomy.json");
  const auto tax = tagspace::taxonomy_from_manifest_json(out.taxonomy_manifest);
  if (tax.version != tagspace::taxonomy().version)
    throw ValidationError("bundle: taxonomy version '" + tax.version + "' does not match this build ('" +
                          tagspace::taxonomy().version + "')");
  out.prior = tagspace::prior_from_json(read_text(dir + "/prior.json"));

  auto store = ckpt::TensorStore<double>::load(dir + "/generator.fgt");
  const json arch = store.meta.at("generator_arch");
  out.spec = nets::GeneratorSpec::from_json(arch.at("spec"));
  out.generator = nets::build_generator<double>(out.spec);
  for (auto& [name, p] : out.generator->named_params()) {
    auto it = store.tensors.find(name);
    if (it == store.tensors.end()) throw IoError("bundle: missing tensor " + name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw IoError("bundle: tensor shape mismatch for " + name);
    p->value = it->second;
  }
  for (auto& [name, buf] : nets::generator_buffers<double>(*out.generator)) {
    auto it = store.tensors.find(name);
    if (it != store.tensors.end()) *buf = it->second;
  }
  out.output_size = out.spec.output_size;
  return out;
}

}  // namespace facegen::bundle
