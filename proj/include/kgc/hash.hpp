#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace kgc {

/// Lower-case hex SHA-1 digest.
std::string sha1_hex(std::string_view data);

/// Hash git assigns to a blob with this content ("blob <len>\0" prefix).
std::string git_blob_hash(std::string_view content);

std::string git_blob_hash_of_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Write via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace kgc
