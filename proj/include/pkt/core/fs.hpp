#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

namespace pkt::fsutil {

/// Writes `path` via a sibling temporary file and a rename, so readers never
/// observe a partial file. Parent directories are created.
void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

std::string read_text(const std::filesystem::path& path);

}  // namespace pkt::fsutil
