#pragma once

#include <filesystem>

#include "pkt/lm/model.hpp"

namespace pkt::lm {

/// Backbone checkpoint: magic "PKTB", u32 version, six u32 config fields
/// (vocab, d_model, layers, heads, ffn, context), then every weight as f64 LE
/// in BackboneModel parameter order. The vocabulary is written next to it as
/// `<path>.vocab.json`. Writes go through a temporary file and a rename.
void save_backbone(const std::filesystem::path& path, const BackboneModel& model);

/// Throws NotFoundError for a missing file, DataError for a malformed one.
BackboneModel load_backbone(const std::filesystem::path& path);

std::filesystem::path vocab_path(const std::filesystem::path& checkpoint);

}  // namespace pkt::lm
