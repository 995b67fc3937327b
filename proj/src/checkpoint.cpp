#include "headkd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "headkd/error.hpp"

namespace headkd {

namespace {

void put_float(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double get_float(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

nlohmann::json layout_to_json(const HeadLayout& layout) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& site : all_sites(layout.layers)) {
    sites.push_back({{"kind", site_kind_name(site.kind)}, {"layer", site.layer}, {"heads", layout.at(site)}});
  }
  return sites;
}

HeadLayout layout_from_json(const nlohmann::json& j, std::size_t layers) {
  HeadLayout layout{layers, std::vector<std::vector<int>>(kSiteKinds * layers)};
  std::vector<bool> seen(layout.heads.size(), false);
  try {
    for (const auto& rec : j) {
      AttentionSite site{parse_site_kind(rec.at("kind").get<std::string>()), rec.at("layer").get<std::size_t>()};
      if (site.layer >= layers) throw FormatError("layout names layer " + std::to_string(site.layer));
      const auto idx = site.index(layers);
      if (seen[idx]) throw FormatError("layout lists " + site.str() + " twice");
      seen[idx] = true;
      layout.heads[idx] = rec.at("heads").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed layout: ") + e.what());
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw FormatError("layout is missing site " + all_sites(layers)[i].str());
  }
  return layout;
}

std::string checkpoint_bytes(const Model& model, const nlohmann::json& meta) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string data;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.var.value().shape()}, {"offset", data.size()}});
    for (double v : p.var.value().data()) put_float(data, v);
  }
  nlohmann::json header{{"config", model.config().to_json()},
                        {"layout", layout_to_json(model.layout())},
                        {"params", manifest},
                        {"meta", meta}};
  std::string out(kCheckpointMagic);
  out += header.dump();
  out += '\n';
  out += data;
  return out;
}

Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  if (!bytes.starts_with(kCheckpointMagic)) throw FormatError("not a PKD1 checkpoint (bad magic)");
  bytes.remove_prefix(kCheckpointMagic.size());
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw FormatError("checkpoint header line is not terminated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, eol));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  const std::string_view data = bytes.substr(eol + 1);

  ModelConfig config;
  try {
    config = ModelConfig::from_json(header.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck{Model::with_layout(config, layout_from_json(header.at("layout"), config.layers)),
                header.value("meta", nlohmann::json::object())};

  auto params = ck.model.parameters();
  const auto& manifest = header.at("params");
  if (manifest.size() != params.size()) {
    throw FormatError("checkpoint lists " + std::to_string(manifest.size()) + " parameters, layout implies " +
                      std::to_string(params.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = manifest[i];
    auto& t = params[i].var.mutable_value();
    const auto name = rec.at("name").get<std::string>();
    if (name != params[i].name) throw FormatError("checkpoint parameter '" + name + "' where '" + params[i].name + "' was expected");
    if (rec.at("shape").get<Shape>() != t.shape()) throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
    const auto offset = rec.at("offset").get<std::size_t>();
    if (offset != expected_offset || offset + 4 * t.numel() > data.size()) {
      throw FormatError("checkpoint parameter '" + name + "' has a bad offset");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + offset;
    for (std::size_t k = 0; k < t.numel(); ++k) t[k] = get_float(p + 4 * k);
    expected_offset = offset + 4 * t.numel();
  }
  if (expected_offset != data.size()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto bytes = checkpoint_bytes(model, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace headkd
