#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "headkd/model.hpp"

namespace headkd {

// "PKD1\n", one JSON header line {config, layout, params[{name, shape, offset}],
// meta}, then little-endian float32 parameter data in manifest order. Offsets
// are byte offsets from the start of the data section.
inline constexpr std::string_view kCheckpointMagic = "PKD1\n";

struct Checkpoint {
  Model model;
  nlohmann::json meta;  // free-form, e.g. recorded validation accuracy
};

std::string checkpoint_bytes(const Model& model, const nlohmann::json& meta = nlohmann::json::object());
// Throws FormatError on a malformed or inconsistent blob.
Checkpoint checkpoint_from_bytes(std::string_view bytes);

// Throws IoError naming the path.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json layout_to_json(const HeadLayout& layout);
HeadLayout layout_from_json(const nlohmann::json& j, std::size_t layers);

}  // namespace headkd
