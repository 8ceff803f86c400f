#include "lfm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lfm/errors.hpp"

namespace lfm {

namespace {

void append_f64le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double read_f64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ContractError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = "lfm-checkpoint";
  manifest["format_version"] = Checkpoint::kFormatVersion;
  manifest["dtype"] = "f64le";
  manifest["meta"] = ckpt.meta;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += t.size() * 8;
  }
  std::string out = manifest.dump();
  out.push_back('\n');
  out.reserve(out.size() + offset);
  for (const auto& entry : ckpt.tensors) {
    for (double v : entry.second.data()) append_f64le(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw ConfigError("checkpoint: missing manifest terminator");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "lfm-checkpoint") throw ConfigError("checkpoint: unknown format tag");
  if (manifest.value("format_version", 0) != Checkpoint::kFormatVersion) {
    throw ConfigError("checkpoint: unsupported format_version");
  }
  if (manifest.value("dtype", "") != "f64le") throw ConfigError("checkpoint: unsupported dtype");

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data()) + newline + 1;
  const std::size_t payload_size = bytes.size() - newline - 1;
  for (const auto& entry : manifest.at("tensors")) {
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (offset + count * 8 > payload_size) throw ConfigError("checkpoint: truncated payload");
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = read_f64le(payload + offset + 8 * i);
    ckpt.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(data)));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

void store_parameters(Checkpoint& ckpt, const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) ckpt.add(p->name, p->value);
}

void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    const Tensor& t = ckpt.get(p->name);
    if (t.shape() != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + p->name + "' has shape " + shape_to_string(t.shape()) +
                           ", expected " + shape_to_string(p->value.shape()));
    }
    p->value = t;
    p->zero_grad();
  }
}

}  // namespace lfm
