#include "homophily/io.hpp"

#include <glob.h>
#include <zlib.h>

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <memory>
#include <sstream>

#include <fmt/format.h>

#include "homophily/error.hpp"

namespace homophily::io {

namespace {

struct GzCloser {
  void operator()(gzFile_s* f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

}  // namespace

void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view)>& on_line) {
  GzHandle file(gzopen(path.c_str(), "rb"));
  if (!file) throw Error(fmt::format("cannot open '{}'", path.string()));
  gzbuffer(file.get(), 1 << 17);

  std::array<char, 1 << 16> chunk{};
  std::string line;
  for (;;) {
    const int n = gzread(file.get(), chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int code = 0;
      const char* message = gzerror(file.get(), &code);
      throw Error(fmt::format("read error in '{}': {}", path.string(), message));
    }
    if (n == 0) break;
    std::string_view data(chunk.data(), static_cast<std::size_t>(n));
    while (!data.empty()) {
      const auto nl = data.find('\n');
      if (nl == std::string_view::npos) {
        line.append(data);
        break;
      }
      line.append(data.substr(0, nl));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      on_line(line);
      line.clear();
      data.remove_prefix(nl + 1);
    }
  }
  if (!line.empty()) on_line(line);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  for_each_line(path, [&](std::string_view l) { lines.emplace_back(l); });
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(fmt::format("write failed for '{}'", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::filesystem::path> glob(const std::string& pattern) {
  glob_t result{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &result);
  std::vector<std::filesystem::path> paths;
  if (rc == 0) {
    for (std::size_t i = 0; i < result.gl_pathc; ++i) paths.emplace_back(result.gl_pathv[i]);
  }
  globfree(&result);
  if (rc != 0 && rc != GLOB_NOMATCH) throw Error(fmt::format("glob failed for '{}'", pattern));
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string file_stem_for(std::string_view user) {
  std::string out;
  for (const char c : user) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_' || c == '-') {
      out += c;
    } else {
      out += fmt::format("%{:02X}", u);
    }
  }
  return out;
}

std::string user_from_file_stem(std::string_view stem) {
  std::string out;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    if (stem[i] == '%' && i + 2 < stem.size()) {
      out += static_cast<char>(std::stoi(std::string(stem.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += stem[i];
    }
  }
  return out;
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

std::string dump_jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

}  // namespace homophily::io
