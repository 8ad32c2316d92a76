#include "nsdehaze/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nsdehaze/error.hpp"

namespace nsd::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

}  // namespace

void round_to_float(ag::Tensor& t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

void write(const fs::path& dir, const std::vector<std::pair<std::string, const ag::Tensor*>>& tensors,
           const std::string& meta_json) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("checkpoint: cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format"] = "nsdehaze-checkpoint";
  manifest["version"] = 1;
  manifest["blob"] = kBlob;
  manifest["meta"] = json::parse(meta_json);
  json entries = json::array();
  std::ofstream blob(dir / kBlob, std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("checkpoint: cannot write " + (dir / kBlob).string());
  std::uint64_t offset = 0;
  std::vector<float> buf;
  for (const auto& [name, t] : tensors) {
    const ag::Shape& s = t->shape();
    entries.push_back({{"name", name},
                       {"shape", {s.n, s.c, s.h, s.w}},
                       {"dtype", "f32"},
                       {"offset", offset}});
    buf.resize(t->numel());
    for (std::size_t i = 0; i < t->numel(); ++i) buf[i] = static_cast<float>((*t)[i]);
    blob.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    offset += buf.size() * sizeof(float);
  }
  if (!blob) throw IoError("checkpoint: short write to " + (dir / kBlob).string());
  manifest["tensors"] = std::move(entries);
  std::ofstream out(dir / kManifest, std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + (dir / kManifest).string());
  out << manifest.dump(1) << '\n';
  if (!out) throw IoError("checkpoint: short write to " + (dir / kManifest).string());
}

Contents read(const fs::path& dir) {
  const fs::path mpath = dir / kManifest;
  if (!fs::is_regular_file(mpath)) throw NotFound("checkpoint: no manifest at " + mpath.string());
  json manifest;
  try {
    std::ifstream in(mpath);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: malformed manifest " + mpath.string() + ": " + e.what());
  }
  const fs::path bpath = dir / manifest.value("blob", std::string(kBlob));
  if (!fs::is_regular_file(bpath)) throw NotFound("checkpoint: no blob at " + bpath.string());
  const auto blob_size = fs::file_size(bpath);
  std::ifstream blob(bpath, std::ios::binary);

  Contents c;
  c.meta_json = manifest.contains("meta") ? manifest["meta"].dump() : "{}";
  try {
    for (const auto& e : manifest.at("tensors")) {
      if (e.at("dtype").get<std::string>() != "f32") throw FormatError("checkpoint: unsupported dtype");
      const auto dims = e.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw FormatError("checkpoint: shape must have 4 dims");
      const ag::Shape s{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (offset + s.numel() * sizeof(float) > blob_size) {
        throw FormatError("checkpoint: tensor '" + e.at("name").get<std::string>() + "' runs past the blob end");
      }
      std::vector<float> buf(s.numel());
      blob.seekg(static_cast<std::streamoff>(offset));
      blob.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!blob) throw FormatError("checkpoint: failed reading " + bpath.string());
      ag::Tensor t(s);
      for (std::size_t i = 0; i < buf.size(); ++i) t[i] = buf[i];
      c.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: malformed manifest " + mpath.string() + ": " + e.what());
  }
  return c;
}

const ag::Tensor& Contents::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw NotFound("checkpoint: no tensor '" + name + "'");
}

bool Contents::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

}  // namespace nsd::ckpt
