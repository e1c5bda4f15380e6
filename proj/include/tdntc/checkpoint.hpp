#pragma once

// Checkpoint container: the 6-byte magic "TDNTC1", a little-endian u64
// metadata length, the UTF-8 JSON metadata, then each tensor of the
// metadata directory as raw little-endian float64 values, in order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdntc/models.hpp"

namespace tdntc {

inline constexpr char kCheckpointMagic[] = "TDNTC1";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointExtras {
  std::optional<ScalerState> scaler;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;
  nlohmann::json training = nlohmann::json::object();  // informational
};

struct LoadedModel {
  ModelGraph graph;
  CheckpointExtras extras;
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

struct DirEntry {
  std::string name;
  Shape shape;
  std::string kind;
};

}  // namespace detail

inline void save_checkpoint(ModelGraph& g, const CheckpointExtras& extras, std::ostream& out) {
  std::vector<detail::DirEntry> dir;
  for (auto& [name, p] : g.named_parameters()) dir.push_back({name, p->value.shape(), "param"});
  for (auto& [name, t] : g.named_buffers()) dir.push_back({name, t->shape(), "buffer"});
  std::vector<std::vector<double>> payload;
  for (auto& [name, p] : g.named_parameters()) payload.emplace_back(p->value.values());
  for (auto& [name, t] : g.named_buffers()) payload.emplace_back(t->values());
  if (extras.scaler) {
    dir.push_back({"scaler.min", {extras.scaler->min.size()}, "scaler"});
    payload.push_back(extras.scaler->min);
    dir.push_back({"scaler.max", {extras.scaler->max.size()}, "scaler"});
    payload.push_back(extras.scaler->max);
  }

  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& d : dir) tensors.push_back({{"name", d.name}, {"shape", d.shape}, {"kind", d.kind}});
  const nlohmann::json meta = {{"format_version", kCheckpointVersion},
                               {"config", config_to_json(g.config())},
                               {"tensors", std::move(tensors)},
                               {"class_names", extras.class_names},
                               {"feature_names", extras.feature_names},
                               {"training", extras.training}};
  const std::string text = meta.dump();
  out.write(kCheckpointMagic, 6);
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& values : payload) {
    for (double v : values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IntegrityError("failed while writing checkpoint");
}

inline void save_checkpoint(ModelGraph& g, const CheckpointExtras& extras, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot open '" + path + "' for writing");
  save_checkpoint(g, extras, out);
}

// Reads and validates the whole file before a graph is handed back.
inline LoadedModel load_checkpoint(std::istream& in, const std::string& source = "<stream>") {
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "TDNTC", 5) != 0) {
    throw FormatError(source + ": not a checkpoint (missing TDNTC magic)");
  }
  if (bytes[5] != static_cast<unsigned char>(kCheckpointMagic[5])) {
    throw VersionError(source + ": checkpoint format version '" + std::string(1, static_cast<char>(bytes[5])) +
                       "' is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 14) throw IntegrityError(source + ": truncated checkpoint header");
  const std::uint64_t meta_len = detail::get_u64(bytes.data() + 6);
  if (meta_len > bytes.size() - 14) throw IntegrityError(source + ": truncated checkpoint metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + 14, bytes.begin() + 14 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(source + ": unreadable checkpoint metadata: " + e.what());
  }
  if (meta.value("format_version", -1) != kCheckpointVersion) {
    throw VersionError(source + ": metadata format_version " + meta.value("format_version", nlohmann::json()).dump() +
                       " is not supported");
  }

  struct Entry {
    std::string name;
    Shape shape;
    std::string kind;
  };
  std::vector<Entry> dir;
  std::size_t total = 0;
  try {
    for (const auto& t : meta.at("tensors")) {
      Entry e{t.at("name").get<std::string>(), t.at("shape").get<Shape>(), t.at("kind").get<std::string>()};
      total += element_count(e.shape);
      dir.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(source + ": malformed tensor directory: " + e.what());
  }
  const std::size_t payload_start = 14 + meta_len;
  const std::size_t available = bytes.size() - payload_start;
  if (available < total * 8) {
    throw IntegrityError(source + ": truncated checkpoint (" + std::to_string(available) + " payload bytes, expected " +
                         std::to_string(total * 8) + ")");
  }
  if (available > total * 8) throw IntegrityError(source + ": trailing bytes after checkpoint payload");

  const ModelConfig cfg = config_from_json(meta.at("config"));
  ModelGraph g = build_model(cfg);
  std::map<std::string, Tensor*> targets;
  for (auto& [name, p] : g.named_parameters()) targets[name] = &p->value;
  for (auto& [name, t] : g.named_buffers()) targets[name] = t;

  LoadedModel out{std::move(g), {}};
  std::size_t offset = payload_start;
  std::size_t matched = 0;
  for (const auto& e : dir) {
    std::vector<double> values(element_count(e.shape));
    for (auto& v : values) {
      v = std::bit_cast<double>(detail::get_u64(bytes.data() + offset));
      offset += 8;
    }
    if (e.kind == "scaler") {
      if (!out.extras.scaler) out.extras.scaler = ScalerState{};
      (e.name == "scaler.min" ? out.extras.scaler->min : out.extras.scaler->max) = std::move(values);
      continue;
    }
    auto it = targets.find(e.name);
    if (it == targets.end()) throw IntegrityError(source + ": tensor '" + e.name + "' does not belong to a " + to_string(cfg.variant) + " graph");
    if (it->second->shape() != e.shape) {
      throw ShapeError(source + ": tensor '" + e.name + "' has shape " + to_string(e.shape) + " but the config implies " +
                       to_string(it->second->shape()));
    }
    *it->second = Tensor(e.shape, std::move(values));
    ++matched;
  }
  if (matched != targets.size()) {
    throw IntegrityError(source + ": checkpoint holds " + std::to_string(matched) + " of " +
                         std::to_string(targets.size()) + " graph tensors");
  }
  if (out.extras.scaler && out.extras.scaler->min.size() != out.extras.scaler->max.size()) {
    throw IntegrityError(source + ": scaler min/max lengths differ");
  }
  out.extras.class_names = meta.value("class_names", std::vector<std::string>{});
  out.extras.feature_names = meta.value("feature_names", std::vector<std::string>{});
  out.extras.training = meta.value("training", nlohmann::json::object());
  return out;
}

inline LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in, path);
}

}  // namespace tdntc
