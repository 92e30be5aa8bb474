// SPDX-License-Identifier: Apache-2.0
#include "toml_subset.hpp"

#include <string>
#include <vector>

namespace exploitbench::envsynth::detail {

namespace {

using nlohmann::json;

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  json run() {
    json root = json::object();
    json* current = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        current = table_header(root);
      } else {
        auto key = dotted_key();
        skip_ws();
        expect('=');
        skip_ws();
        json value = parse_value();
        assign(*current, key, std::move(value));
      }
      end_of_line();
    }
    return root;
  }

 private:
  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0';
  }
  bool looking_at(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }

  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) {
      if (s_[i] == '\n') ++line;
    }
    throw TomlError("line " + std::to_string(line) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // Whitespace, newlines and comments, as allowed inside arrays.
  void skip_all() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        ++pos_;
      } else {
        return;
      }
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (eof()) return;
    if (peek() == '\r') ++pos_;
    if (peek() != '\n') fail("unexpected text after value");
    ++pos_;
  }

  std::string key_part() {
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string out;
    while (!eof()) {
      char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        out.push_back(c);
        ++pos_;
      } else {
        break;
      }
    }
    if (out.empty()) fail("expected a key");
    return out;
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key_part()};
    while (true) {
      skip_ws();
      if (peek() != '.') break;
      ++pos_;
      skip_ws();
      parts.push_back(key_part());
    }
    return parts;
  }

  json* descend(json& root, const std::vector<std::string>& path) {
    json* node = &root;
    for (const auto& part : path) {
      json& child = (*node)[part];
      if (child.is_null()) child = json::object();
      if (child.is_array() && !child.empty() && child.back().is_object()) {
        node = &child.back();
      } else if (child.is_object()) {
        node = &child;
      } else {
        fail("key " + part + " is not a table");
      }
    }
    return node;
  }

  json* table_header(json& root) {
    bool array_table = looking_at("[[");
    pos_ += array_table ? 2 : 1;
    skip_ws();
    auto path = dotted_key();
    skip_ws();
    expect(']');
    if (array_table) expect(']');
    if (!array_table) return descend(root, path);

    auto parent_path = path;
    parent_path.pop_back();
    json* parent = descend(root, parent_path);
    json& arr = (*parent)[path.back()];
    if (arr.is_null()) arr = json::array();
    if (!arr.is_array()) fail("key " + path.back() + " is not an array of tables");
    arr.push_back(json::object());
    return &arr.back();
  }

  void assign(json& table, const std::vector<std::string>& key, json value) {
    json* node = &table;
    for (std::size_t i = 0; i + 1 < key.size(); ++i) {
      json& child = (*node)[key[i]];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) fail("key " + key[i] + " is not a table");
      node = &child;
    }
    (*node)[key.back()] = std::move(value);
  }

  json parse_value() {
    if (looking_at("\"\"\"")) return multiline_basic();
    if (looking_at("'''")) return multiline_literal();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    if (peek() == '[') return array();
    if (peek() == '{') return inline_table();
    std::string raw;
    while (!eof()) {
      char c = peek();
      if (c == ',' || c == ']' || c == '}' || c == '#' || c == '\n' || c == '\r') break;
      raw.push_back(c);
      ++pos_;
    }
    while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t')) raw.pop_back();
    if (raw.empty()) fail("expected a value");
    if (raw == "true") return true;
    if (raw == "false") return false;
    return raw;
  }

  void escape(std::string& out) {
    char e = peek();
    ++pos_;
    switch (e) {
      case 'b': out.push_back('\b'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'f': out.push_back('\f'); break;
      case 'r': out.push_back('\r'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'u':
      case 'U': {
        std::size_t len = e == 'u' ? 4 : 8;
        if (pos_ + len > s_.size()) fail("truncated unicode escape");
        unsigned long cp = std::stoul(std::string(s_.substr(pos_, len)), nullptr, 16);
        pos_ += len;
        append_utf8(out, cp);
        break;
      }
      default: fail("bad escape");
    }
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = peek();
      ++pos_;
      if (c == '"') return out;
      if (c == '\\') {
        escape(out);
      } else {
        out.push_back(c);
      }
    }
  }

  std::string literal_string() {
    expect('\'');
    auto end = s_.find('\'', pos_);
    auto nl = s_.find('\n', pos_);
    if (end == std::string_view::npos || nl < end) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  std::string multiline_basic() {
    pos_ += 3;
    if (peek() == '\r') ++pos_;
    if (peek() == '\n') ++pos_;
    std::string out;
    while (true) {
      if (eof()) fail("unterminated string");
      if (looking_at("\"\"\"")) {
        pos_ += 3;
        // Up to two quotes may sit right before the closing delimiter.
        for (int extra = 0; extra < 2 && peek() == '"'; ++extra) {
          out.push_back('"');
          ++pos_;
        }
        return out;
      }
      char c = peek();
      ++pos_;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      std::size_t save = pos_;
      while (peek() == ' ' || peek() == '\t') ++pos_;
      if (peek() == '\r' || peek() == '\n') {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
      } else {
        pos_ = save;
        escape(out);
      }
    }
  }

  std::string multiline_literal() {
    pos_ += 3;
    if (peek() == '\r') ++pos_;
    if (peek() == '\n') ++pos_;
    auto end = s_.find("'''", pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 3;
    for (int extra = 0; extra < 2 && peek() == '\''; ++extra) {
      out.push_back('\'');
      ++pos_;
    }
    return out;
  }

  json array() {
    expect('[');
    json out = json::array();
    while (true) {
      skip_all();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(parse_value());
      skip_all();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json inline_table() {
    expect('{');
    json out = json::object();
    while (true) {
      skip_all();
      if (peek() == '}') {
        ++pos_;
        return out;
      }
      auto key = dotted_key();
      skip_ws();
      expect('=');
      skip_ws();
      assign(out, key, parse_value());
      skip_all();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != '}') {
        fail("expected ',' or '}' in inline table");
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

json parse_toml(std::string_view text) { return Parser(text).run(); }

}  // namespace exploitbench::envsynth::detail
