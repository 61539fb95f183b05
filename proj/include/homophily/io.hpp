#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace homophily::io {

using nlohmann::json;

/// Calls `on_line` for each line of `path`; gzip-compressed files are
/// decompressed transparently. Throws Error on I/O failure.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view)>& on_line);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Sorted paths matching a POSIX glob pattern; empty when nothing matches.
std::vector<std::filesystem::path> glob(const std::string& pattern);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Maps a user name onto a portable file stem ([A-Za-z0-9_-] kept, the rest %XX).
std::string file_stem_for(std::string_view user);
std::string user_from_file_stem(std::string_view stem);

/// Minimal RFC 4180 field quoting.
std::string csv_field(std::string_view field);
std::vector<std::string> split_csv_line(std::string_view line);

std::string dump_jsonl(const std::vector<json>& records);

}  // namespace homophily::io
