#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "facegen/autodiff.hpp"
#include "facegen/errors.hpp"

// Self-describing tensor container: a magic string, a JSON header naming
// every tensor with its shape and payload offset plus free-form metadata
// (step counter, RNG states, architecture manifest), then raw little-endian
// data. Used for training checkpoints, export bundles, and feature dumps.
// Writes go through a temp file and rename, so a crash never leaves a
// half-written checkpoint behind.

namespace facegen::ckpt {

constexpr char kMagic[] = "FGTEN1\n";

template <class S>
const char* dtype_name() {
  if constexpr (sizeof(S) == 4)
    return "f32";
  else
    return "f64";
}

template <class S>
struct TensorStore {
  std::map<std::string, autodiff::DenseMat<S>> tensors;
  nlohmann::json meta;

  void save(const std::string& path) const {
    nlohmann::json header;
    header["dtype"] = dtype_name<S>();
    header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
    nlohmann::json list = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      list.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
      offset += static_cast<std::uint64_t>(t.size()) * sizeof(S);
    }
    header["tensors"] = list;
    const std::string header_text = header.dump();

    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("checkpoint: cannot open " + tmp);
      f.write(kMagic, sizeof(kMagic) - 1);
      const std::uint64_t len = header_text.size();
      f.write(reinterpret_cast<const char*>(&len), sizeof(len));
      f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
      for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(S)));
      if (!f) throw IoError("checkpoint: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  static TensorStore load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
      throw IoError("checkpoint: bad magic in " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f || len > (1ull << 30)) throw IoError("checkpoint: bad header length");
    std::string header_text(len, '\0');
    f.read(header_text.data(), static_cast<std::streamsize>(len));
    nlohmann::json header = nlohmann::json::parse(header_text);

    TensorStore out;
    out.meta = header.value("meta", nlohmann::json::object());
    const std::string dtype = header.at("dtype").get<std::string>();
    const std::size_t elem = dtype == "f32" ? 4 : 8;
    if (dtype != "f32" && dtype != "f64") throw IoError("checkpoint: unknown dtype " + dtype);

    const std::streampos payload_start = f.tellg();
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
      const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
      const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
      autodiff::DenseMat<S> t(rows, cols);
      f.seekg(payload_start + static_cast<std::streamoff>(offset));
      if (elem == sizeof(S)) {
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(S)));
      } else if (elem == 4) {
        std::vector<float> buf(static_cast<std::size_t>(t.size()));
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
      } else {
        std::vector<double> buf(static_cast<std::size_t>(t.size()));
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
      }
      if (!f) throw IoError("checkpoint: truncated tensor payload for " + name);
      out.tensors.emplace(name, std::move(t));
    }
    return out;
  }

  static nlohmann::json peek_meta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
      throw IoError("checkpoint: bad magic in " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!f || len > (1ull << 30)) throw IoError("checkpoint: bad header length");
    std::string header_text(len, '\0');
    f.read(header_text.data(), static_cast<std::streamsize>(len));
    return nlohmann::json::parse(header_text).value("meta", nlohmann::json::object());
  }
};

}  // namespace facegen::ckpt
