// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "json.hpp"

#include "mmnerf/error.hpp"
#include "mmnerf/image.hpp"

namespace mmnerf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(U));
  }
  void put_bytes(const std::string& s) {
    put<uint32_t>(static_cast<uint32_t>(s.size()));
    out_ += s;
  }
  void put_floats(const std::vector<float>& v) { out_.append(reinterpret_cast<const char*>(v.data()), v.size() * 4); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_bytes() {
    const uint32_t n = get<uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<float> get_floats(uint64_t n) {
    if (n > (in_.size() - pos_) / 4) throw FormatError("checkpoint is truncated");
    std::vector<float> v(n);
    std::memcpy(v.data(), in_.data() + pos_, n * 4);
    pos_ += n * 4;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  std::string_view in_;
  size_t pos_ = 0;
};

json config_json(const ModelConfig& c) {
  const auto& e = c.encoding;
  return {{"encoding",
           {{"levels", e.levels},
            {"table_size", e.table_size},
            {"features_per_entry", e.features_per_entry},
            {"base_resolution", e.base_resolution},
            {"growth", e.growth},
            {"direction_degree", e.direction_degree}}},
          {"network",
           {{"density_hidden", c.dims.density_hidden},
            {"density_layers", c.dims.density_layers},
            {"color_hidden", c.dims.color_hidden},
            {"color_layers", c.dims.color_layers}}}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  const auto& e = j.at("encoding");
  c.encoding.levels = e.at("levels").get<int>();
  c.encoding.table_size = e.at("table_size").get<uint32_t>();
  c.encoding.features_per_entry = e.at("features_per_entry").get<int>();
  c.encoding.base_resolution = e.at("base_resolution").get<int>();
  c.encoding.growth = e.at("growth").get<double>();
  c.encoding.direction_degree = e.at("direction_degree").get<int>();
  const auto& n = j.at("network");
  c.dims.density_hidden = n.at("density_hidden").get<int>();
  c.dims.density_layers = n.at("density_layers").get<int>();
  c.dims.color_hidden = n.at("color_hidden").get<int>();
  c.dims.color_layers = n.at("color_layers").get<int>();
  return c;
}

}  // namespace

std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
  validate_model(ckpt.model);
  const auto& m = ckpt.model;
  Writer w;
  w.put<char>('M');
  w.put<char>('M');
  w.put<char>('N');
  w.put<char>('F');
  w.put<uint32_t>(kCheckpointVersion);
  w.put<uint32_t>(static_cast<uint32_t>(m.strategy));
  w.put<uint32_t>(static_cast<uint32_t>(m.role));
  w.put_bytes(config_json(m.config).dump());
  w.put<uint64_t>(ckpt.iteration);
  w.put<uint64_t>(m.params.size());
  w.put_floats(m.params);
  const bool has_opt = !ckpt.optimizer.m.empty();
  if (has_opt && (ckpt.optimizer.m.size() != m.params.size() || ckpt.optimizer.v.size() != m.params.size())) {
    throw DimensionError("optimizer moments do not match the parameter vector");
  }
  w.put<uint8_t>(has_opt ? 1 : 0);
  if (has_opt) {
    w.put<uint64_t>(ckpt.optimizer.step);
    w.put_floats(ckpt.optimizer.m);
    w.put_floats(ckpt.optimizer.v);
  }
  json segs = json::array();
  for (const auto& s : m.segments) segs.push_back({{"name", s.name}, {"offset", s.offset}, {"size", s.size}});
  w.put_bytes(segs.dump());
  return w.take();
}

ModelCheckpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, "MMNF", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const uint32_t version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const uint32_t strategy = r.get<uint32_t>();
  const uint32_t role = r.get<uint32_t>();
  if (strategy > static_cast<uint32_t>(Strategy::kSC) || role > static_cast<uint32_t>(ModelRole::kJoint)) {
    throw FormatError("checkpoint header has an unknown strategy or role");
  }
  ModelConfig cfg;
  try {
    cfg = config_from_json(json::parse(r.get_bytes()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config is malformed: ") + e.what());
  }
  ModelCheckpoint ck;
  ck.model = make_model<float>(cfg, static_cast<Strategy>(strategy), static_cast<ModelRole>(role));
  ck.iteration = r.get<uint64_t>();
  const uint64_t count = r.get<uint64_t>();
  if (count != ck.model.params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, configuration needs " +
                      std::to_string(ck.model.params.size()));
  }
  ck.model.params = r.get_floats(count);
  if (r.get<uint8_t>() != 0) {
    ck.optimizer.step = r.get<uint64_t>();
    ck.optimizer.m = r.get_floats(count);
    ck.optimizer.v = r.get_floats(count);
  }
  try {
    const json segs = json::parse(r.get_bytes());
    if (segs.size() != ck.model.segments.size()) throw FormatError("checkpoint segment table does not match");
    for (size_t i = 0; i < segs.size(); ++i) {
      const auto& s = ck.model.segments[i];
      if (segs[i].at("name").get<std::string>() != s.name || segs[i].at("offset").get<size_t>() != s.offset ||
          segs[i].at("size").get<size_t>() != s.size) {
        throw FormatError("checkpoint segment " + s.name + " does not match the configuration");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint segment table is malformed: ") + e.what());
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  validate_model(ck.model);
  return ck;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  atomic_write(path, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace mmnerf
