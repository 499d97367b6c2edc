#pragma once

#include <filesystem>
#include <string>

namespace mf {

// Throws Error(IoError) on failure.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace mf
