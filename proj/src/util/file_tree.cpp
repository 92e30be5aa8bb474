// SPDX-License-Identifier: Apache-2.0
#include "exploitbench/util/file_tree.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "exploitbench/util/encoding.hpp"

namespace fs = std::filesystem;

namespace exploitbench::util {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FileTree load_directory(const fs::path& root) {
  FileTree tree;
  if (!fs::exists(root)) return tree;
  for (auto it = fs::recursive_directory_iterator(root);
       it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory() && it->path().filename() == ".git") {
      it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    auto rel = fs::relative(it->path(), root).generic_string();
    tree.emplace(rel, read_file(it->path()));
  }
  return tree;
}

void write_tree(const fs::path& root, const FileTree& tree) {
  for (const auto& [path, bytes] : tree) write_file(root / path, bytes);
}

std::string tree_checksum(const FileTree& tree) {
  std::string buf;
  for (const auto& [path, bytes] : tree) {
    buf += path;
    buf.push_back('\0');
    buf += std::to_string(bytes.size());
    buf.push_back('\0');
    buf += sha256_hex(bytes);
    buf.push_back('\n');
  }
  return sha256_hex(buf);
}

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width includes the trailing NUL.
  std::string s(width - 1, '0');
  for (std::size_t i = width - 1; i-- > 0 && value != 0;) {
    s[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  std::memcpy(field, s.data(), width - 1);
  field[width - 1] = '\0';
}

std::string header_block(std::string_view name, std::size_t size, unsigned mode,
                         char type) {
  std::array<char, kBlock> h{};
  std::memcpy(h.data(), name.data(), std::min<std::size_t>(name.size(), 100));
  put_octal(h.data() + 100, 8, mode);
  put_octal(h.data() + 108, 8, 0);
  put_octal(h.data() + 116, 8, 0);
  put_octal(h.data() + 124, 12, size);
  put_octal(h.data() + 136, 12, 0);
  h[156] = type;
  std::memcpy(h.data() + 257, "ustar", 6);
  std::memcpy(h.data() + 263, "00", 2);
  std::memset(h.data() + 148, ' ', 8);
  unsigned sum = 0;
  for (char c : h) sum += static_cast<unsigned char>(c);
  put_octal(h.data() + 148, 7, sum);
  h[155] = ' ';
  return std::string(h.data(), h.size());
}

void pad(std::string& out) {
  if (out.size() % kBlock != 0) out.append(kBlock - out.size() % kBlock, '\0');
}

void append_entry(std::string& out, const TarEntry& e) {
  std::string name = e.directory ? e.path + "/" : e.path;
  if (name.size() > 100) {
    // pax record: "<len> path=<name>\n" where len counts itself.
    std::string body = " path=" + name + "\n";
    std::size_t len = body.size() + 1;
    while (std::to_string(len).size() + body.size() != len) ++len;
    std::string rec = std::to_string(len) + body;
    out += header_block("PaxHeader", rec.size(), 0644, 'x');
    out += rec;
    pad(out);
  }
  out += header_block(name, e.directory ? 0 : e.data.size(), e.mode,
                      e.directory ? '5' : '0');
  if (!e.directory) {
    out += e.data;
    pad(out);
  }
}

std::uint64_t parse_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    char c = field[i];
    if (c == '\0' || c == ' ') {
      if (v != 0) break;
      continue;
    }
    if (c < '0' || c > '7') throw TarError("bad octal field in tar header");
    v = (v << 3) | static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

std::string cstr_field(const char* field, std::size_t width) {
  return std::string(field, strnlen(field, width));
}

}  // namespace

std::string write_tar(const std::vector<TarEntry>& entries) {
  std::string out;
  std::set<std::string> dirs;
  for (const auto& e : entries) {
    if (e.directory) {
      dirs.insert(e.path);
      continue;
    }
    for (auto pos = e.path.find('/'); pos != std::string::npos;
         pos = e.path.find('/', pos + 1)) {
      dirs.insert(e.path.substr(0, pos));
    }
  }
  for (const auto& d : dirs) append_entry(out, {d, {}, 0755, true});
  for (const auto& e : entries) {
    if (!e.directory) append_entry(out, e);
  }
  out.append(2 * kBlock, '\0');
  return out;
}

std::string write_tar(const FileTree& tree, std::string_view prefix) {
  std::vector<TarEntry> entries;
  entries.reserve(tree.size());
  for (const auto& [path, bytes] : tree) {
    std::string full = prefix.empty() ? path : std::string(prefix) + "/" + path;
    entries.push_back({full, bytes, 0644, false});
  }
  return write_tar(entries);
}

std::vector<TarEntry> read_tar(std::string_view archive) {
  std::vector<TarEntry> out;
  std::size_t pos = 0;
  std::string pending_name;
  while (pos + kBlock <= archive.size()) {
    const char* h = archive.data() + pos;
    if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;
    auto size = parse_octal(h + 124, 12);
    char type = h[156];
    pos += kBlock;
    if (pos + size > archive.size()) throw TarError("truncated tar entry");
    std::string_view data = archive.substr(pos, size);
    pos += (size + kBlock - 1) / kBlock * kBlock;

    if (type == 'x') {
      std::size_t p = 0;
      while (p < data.size()) {
        auto sp = data.find(' ', p);
        if (sp == std::string_view::npos) break;
        auto len = std::stoul(std::string(data.substr(p, sp - p)));
        auto rec = data.substr(sp + 1, len - (sp - p) - 2);
        if (rec.rfind("path=", 0) == 0) pending_name = std::string(rec.substr(5));
        p += len;
      }
      continue;
    }
    if (type == 'L') {
      pending_name = cstr_field(data.data(), data.size());
      continue;
    }
    if (type == 'g') continue;

    std::string name = pending_name;
    pending_name.clear();
    if (name.empty()) {
      name = cstr_field(h, 100);
      std::string prefix = cstr_field(h + 345, 155);
      if (!prefix.empty()) name = prefix + "/" + name;
    }
    bool dir = type == '5';
    while (!name.empty() && name.back() == '/') name.pop_back();
    if (type != '0' && type != '\0' && !dir) continue;
    TarEntry e;
    e.path = name;
    e.directory = dir;
    e.mode = static_cast<unsigned>(parse_octal(h + 100, 8));
    if (!dir) e.data = std::string(data);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace exploitbench::util
