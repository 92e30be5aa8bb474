// SPDX-License-Identifier: Apache-2.0
// A small, forgiving HTML reader: enough of the browser parsing rules to get
// advisory pages into a sensible tree, and a Markdown writer over that tree.

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <set>

#include "exploitbench/pocminer.hpp"

namespace exploitbench::pocminer {

namespace {

constexpr std::size_t kMaxDepth = 512;

struct Node {
  bool is_text = false;
  std::string tag;  // lowercase; empty for text and the document root
  std::map<std::string, std::string> attrs;
  std::string text;
  std::vector<std::unique_ptr<Node>> children;
};

// ---- entities ----

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
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

const std::map<std::string, std::uint32_t, std::less<>>& named_entities() {
  static const std::map<std::string, std::uint32_t, std::less<>> table{
      {"amp", '&'},      {"lt", '<'},        {"gt", '>'},        {"quot", '"'},
      {"apos", '\''},    {"nbsp", 0xA0},     {"copy", 0xA9},     {"reg", 0xAE},
      {"trade", 0x2122}, {"hellip", 0x2026}, {"mdash", 0x2014},  {"ndash", 0x2013},
      {"lsquo", 0x2018}, {"rsquo", 0x2019},  {"ldquo", 0x201C},  {"rdquo", 0x201D},
      {"bull", 0x2022},  {"middot", 0xB7},   {"times", 0xD7},    {"laquo", 0xAB},
      {"raquo", 0xBB},   {"deg", 0xB0},      {"plusmn", 0xB1},   {"para", 0xB6},
      {"sect", 0xA7},    {"euro", 0x20AC},   {"pound", 0xA3},    {"yen", 0xA5},
      {"cent", 0xA2},    {"shy", 0xAD},      {"ensp", 0x2002},   {"emsp", 0x2003},
      {"thinsp", 0x2009}, {"zwj", 0x200D},   {"zwnj", 0x200C},   {"larr", 0x2190},
      {"rarr", 0x2192},  {"uarr", 0x2191},   {"darr", 0x2193},   {"hArr", 0x21D4},
      {"rArr", 0x21D2},  {"check", 0x2713},  {"lowast", 0x2217}, {"minus", 0x2212},
      {"le", 0x2264},    {"ge", 0x2265},     {"ne", 0x2260},     {"infin", 0x221E},
      {"grave", '`'},    {"lbrace", '{'},    {"rbrace", '}'},    {"lbrack", '['},
      {"rbrack", ']'},   {"lpar", '('},      {"rpar", ')'},      {"sol", '/'},
      {"bsol", '\\'},    {"verbar", '|'},    {"vert", '|'},      {"colon", ':'},
      {"semi", ';'},     {"equals", '='},    {"num", '#'},       {"dollar", '$'},
      {"percnt", '%'},   {"ast", '*'},       {"plus", '+'},      {"comma", ','},
      {"period", '.'},   {"excl", '!'},      {"quest", '?'},     {"commat", '@'},
      {"lowbar", '_'},   {"Hat", '^'},       {"tilde", 0x2DC},   {"newline", '\n'},
      {"Tab", '\t'},
  };
  return table;
}

// Entities that browsers still honour without the trailing semicolon.
bool legacy_entity(std::string_view name) {
  return name == "amp" || name == "lt" || name == "gt" || name == "quot" || name == "nbsp" ||
         name == "copy" || name == "reg";
}

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (c != '&') {
      out.push_back(c);
      ++i;
      continue;
    }
    if (i + 1 < s.size() && s[i + 1] == '#') {
      std::size_t j = i + 2;
      bool hex = j < s.size() && (s[j] == 'x' || s[j] == 'X');
      if (hex) ++j;
      std::size_t start = j;
      std::uint64_t cp = 0;
      while (j < s.size() && (hex ? std::isxdigit(static_cast<unsigned char>(s[j]))
                                  : std::isdigit(static_cast<unsigned char>(s[j])))) {
        if (cp <= 0x10FFFF) cp = cp * (hex ? 16 : 10) + std::stoul(std::string(1, s[j]), nullptr, 16);
        ++j;
      }
      if (j == start) {
        out.push_back('&');
        ++i;
        continue;
      }
      if (j < s.size() && s[j] == ';') ++j;
      append_utf8(out, cp > 0x10FFFF ? 0xFFFD : static_cast<std::uint32_t>(cp));
      i = j;
      continue;
    }
    std::size_t j = i + 1;
    while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j])) && j - i <= 32) ++j;
    std::string_view name = s.substr(i + 1, j - i - 1);
    bool semi = j < s.size() && s[j] == ';';
    auto it = named_entities().find(name);
    if (it != named_entities().end() && (semi || legacy_entity(name))) {
      append_utf8(out, it->second);
      i = j + (semi ? 1 : 0);
    } else {
      out.push_back('&');
      ++i;
    }
  }
  return out;
}

// ---- element classes ----

const std::set<std::string, std::less<>> kVoid{"area", "base", "br",   "col",   "embed",
                                               "hr",   "img",  "input", "link", "meta",
                                               "param", "source", "track", "wbr"};
const std::set<std::string, std::less<>> kRawText{"script", "style", "xmp", "iframe",
                                                  "noembed", "noframes", "noscript"};
const std::set<std::string, std::less<>> kEscapableRaw{"textarea", "title"};
const std::set<std::string, std::less<>> kFormatting{"a",     "b",      "big", "code", "em",
                                                     "font",  "i",      "nobr", "s",   "small",
                                                     "strike", "strong", "tt",  "u"};
const std::set<std::string, std::less<>> kClosesP{
    "address", "article", "aside",  "blockquote", "center", "details", "dialog",  "dir",
    "div",     "dl",      "fieldset", "figcaption", "figure", "footer", "header", "hgroup",
    "main",    "menu",    "nav",    "ol",         "p",      "section", "summary", "ul",
    "h1",      "h2",      "h3",     "h4",         "h5",     "h6",      "pre",     "listing",
    "form",    "table",   "hr",     "li",         "dd",     "dt",      "plaintext"};
const std::set<std::string, std::less<>> kHeadOnly{"title", "meta", "link", "base", "style",
                                                   "script", "noscript"};
const std::set<std::string, std::less<>> kDropped{"script", "style", "nav",    "footer",
                                                  "head",   "noscript", "template", "svg",
                                                  "iframe", "object", "title"};

bool is_heading(std::string_view t) {
  return t.size() == 2 && t[0] == 'h' && t[1] >= '1' && t[1] <= '6';
}

// ---- tokenizer + tree construction ----

std::size_t find_ci(std::string_view hay, const std::string& needle, std::size_t from) {
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size() && ok; ++k) {
      ok = std::tolower(static_cast<unsigned char>(hay[i + k])) == needle[k];
    }
    if (ok) return i;
  }
  return std::string_view::npos;
}


class TreeBuilder {
 public:
  explicit TreeBuilder(std::string_view src) : src_(src) {
    root_ = std::make_unique<Node>();
    stack_.push_back(root_.get());
  }

  std::unique_ptr<Node> build() {
    if (src_.find('\0') != std::string_view::npos) throw HtmlUnparseable("NUL byte in page");
    while (pos_ < src_.size()) step();
    return std::move(root_);
  }

 private:
  struct Formatting {
    Node* node = nullptr;  // nullptr is a scope marker
  };

  Node* current() { return stack_.back(); }

  bool on_stack(const Node* n) const {
    return std::find(stack_.begin(), stack_.end(), n) != stack_.end();
  }

  void push(std::unique_ptr<Node> n) {
    Node* raw = n.get();
    current()->children.push_back(std::move(n));
    stack_.push_back(raw);
    if (stack_.size() > kMaxDepth) throw HtmlUnparseable("nesting deeper than " + std::to_string(kMaxDepth));
  }

  void pop_until(const Node* target) {
    while (stack_.size() > 1) {
      Node* top = stack_.back();
      stack_.pop_back();
      if (top == target) break;
    }
  }

  Node* find_open(std::string_view tag, std::initializer_list<std::string_view> stop = {}) {
    for (auto it = stack_.rbegin(); it != stack_.rend() && *it != root_.get(); ++it) {
      if ((*it)->tag == tag) return *it;
      for (auto s : stop) {
        if ((*it)->tag == s) return nullptr;
      }
    }
    return nullptr;
  }

  void close_p() {
    if (Node* p = find_open("p", {"button", "table", "td", "th"})) pop_until(p);
  }

  void reconstruct_formatting() {
    std::size_t first = active_.size();
    for (std::size_t i = active_.size(); i-- > 0;) {
      if (!active_[i].node || on_stack(active_[i].node)) break;
      first = i;
    }
    for (std::size_t i = first; i < active_.size(); ++i) {
      auto clone = std::make_unique<Node>();
      clone->tag = active_[i].node->tag;
      clone->attrs = active_[i].node->attrs;
      active_[i].node = clone.get();
      push(std::move(clone));
    }
  }

  void forget_formatting(const Node* n) {
    active_.erase(std::remove_if(active_.begin(), active_.end(),
                                 [n](const Formatting& f) { return f.node == n; }),
                  active_.end());
  }

  void clear_to_marker() {
    while (!active_.empty()) {
      bool marker = active_.back().node == nullptr;
      active_.pop_back();
      if (marker) break;
    }
  }

  void add_text(std::string text) {
    if (text.empty()) return;
    bool blank = text.find_first_not_of(" \t\n\r\f") == std::string::npos;
    if (!blank) reconstruct_formatting();
    auto& kids = current()->children;
    if (!kids.empty() && kids.back()->is_text) {
      kids.back()->text += text;
      return;
    }
    auto n = std::make_unique<Node>();
    n->is_text = true;
    n->text = std::move(text);
    kids.push_back(std::move(n));
  }

  void leave_head() {
    if (Node* h = find_open("head")) pop_until(h);
  }

  void start_tag(std::string tag, std::map<std::string, std::string> attrs, bool self_closing) {
    if (tag == "html" || tag == "body") {
      if (tag == "body") leave_head();
      return;
    }
    if (tag == "head") {
      if (!find_open("head")) push(element(tag, std::move(attrs)));
      return;
    }
    if (find_open("head") && !kHeadOnly.count(tag)) leave_head();

    if (tag == "li") {
      if (Node* li = find_open("li", {"ul", "ol", "div", "address", "p"})) pop_until(li);
    } else if (tag == "dd" || tag == "dt") {
      Node* open = find_open("dd", {"dl", "div", "address", "p"});
      if (!open) open = find_open("dt", {"dl", "div", "address", "p"});
      if (open) pop_until(open);
    } else if (tag == "td" || tag == "th") {
      Node* cell = find_open("td", {"tr", "table"});
      if (!cell) cell = find_open("th", {"tr", "table"});
      if (cell) {
        pop_until(cell);
        clear_to_marker();
      }
    } else if (tag == "tr") {
      if (Node* row = find_open("tr", {"table"})) {
        pop_until(row);
      }
    } else if (tag == "option") {
      if (current()->tag == "option") pop_until(current());
    }
    if (kClosesP.count(tag)) close_p();
    if (is_heading(tag) && is_heading(current()->tag)) pop_until(current());

    if (tag == "a") {
      for (auto it = active_.rbegin(); it != active_.rend() && it->node; ++it) {
        if (it->node->tag == "a") {
          Node* old = it->node;
          if (on_stack(old)) pop_until(old);
          forget_formatting(old);
          break;
        }
      }
    }

    bool block = kClosesP.count(tag) || tag == "table" || tag == "tr" || tag == "td" || tag == "th";
    if (!block) reconstruct_formatting();

    auto n = element(tag, std::move(attrs));
    if (kVoid.count(tag) || self_closing) {
      current()->children.push_back(std::move(n));
      return;
    }
    Node* raw = n.get();
    push(std::move(n));
    if (kFormatting.count(tag)) active_.push_back({raw});
    if (tag == "td" || tag == "th" || tag == "caption") active_.push_back({nullptr});

    if (kRawText.count(tag) || kEscapableRaw.count(tag)) {
      auto end = find_ci(src_, "</" + tag, pos_);
      std::string_view body = src_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
      add_text(kEscapableRaw.count(tag) ? decode_entities(body) : std::string(body));
      pos_ = end == std::string_view::npos ? src_.size() : end;
      return;
    }
    if (tag == "pre" || tag == "listing" || tag == "textarea") {
      // A newline right after the start tag is not content.
      if (pos_ < src_.size() && src_[pos_] == '\n') ++pos_;
      else if (src_.substr(pos_, 2) == "\r\n") pos_ += 2;
    }
  }

  void end_tag(const std::string& tag) {
    if (tag == "html" || tag == "body") return;
    if (tag == "br") {
      start_tag("br", {}, true);
      return;
    }
    if (kFormatting.count(tag)) {
      Node* n = nullptr;
      for (auto it = active_.rbegin(); it != active_.rend() && it->node; ++it) {
        if (it->node->tag == tag) {
          n = it->node;
          break;
        }
      }
      if (!n) return;
      if (on_stack(n)) pop_until(n);
      forget_formatting(n);
      return;
    }
    Node* n = find_open(tag);
    if (!n) return;
    pop_until(n);
    if (tag == "td" || tag == "th" || tag == "caption") clear_to_marker();
  }

  static std::unique_ptr<Node> element(std::string tag, std::map<std::string, std::string> attrs) {
    auto n = std::make_unique<Node>();
    n->tag = std::move(tag);
    n->attrs = std::move(attrs);
    return n;
  }

  void step() {
    std::size_t lt = src_.find('<', pos_);
    if (lt == std::string_view::npos) {
      add_text(decode_entities(src_.substr(pos_)));
      pos_ = src_.size();
      return;
    }
    if (lt > pos_) {
      add_text(decode_entities(src_.substr(pos_, lt - pos_)));
      pos_ = lt;
    }
    std::string_view rest = src_.substr(pos_);
    if (rest.starts_with("<!--")) {
      auto end = src_.find("-->", pos_ + 4);
      if (end == std::string_view::npos) throw HtmlUnparseable("comment never closed");
      pos_ = end + 3;
      return;
    }
    if (rest.starts_with("<!") || rest.starts_with("<?")) {
      auto end = src_.find('>', pos_);
      if (end == std::string_view::npos) throw HtmlUnparseable("declaration never closed");
      pos_ = end + 1;
      return;
    }
    bool closing = rest.starts_with("</");
    std::size_t name_at = pos_ + (closing ? 2 : 1);
    if (name_at >= src_.size() || !std::isalpha(static_cast<unsigned char>(src_[name_at]))) {
      add_text("<");
      ++pos_;
      return;
    }
    std::size_t i = name_at;
    while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '>' &&
           src_[i] != '/') {
      ++i;
    }
    std::string tag;
    for (char c : src_.substr(name_at, i - name_at)) {
      tag.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }

    std::map<std::string, std::string> attrs;
    bool self_closing = false;
    for (;;) {
      while (i < src_.size() && (std::isspace(static_cast<unsigned char>(src_[i])) || src_[i] == '/')) {
        if (src_[i] == '/') self_closing = true;
        ++i;
      }
      if (i >= src_.size()) throw HtmlUnparseable("tag <" + tag + "> never closed");
      if (src_[i] == '>') {
        ++i;
        break;
      }
      self_closing = false;
      std::size_t a = i;
      while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '=' &&
             src_[i] != '>' && src_[i] != '/') {
        ++i;
      }
      std::string name;
      for (char c : src_.substr(a, i - a)) {
        name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
      while (i < src_.size() && std::isspace(static_cast<unsigned char>(src_[i]))) ++i;
      std::string value;
      if (i < src_.size() && src_[i] == '=') {
        ++i;
        while (i < src_.size() && std::isspace(static_cast<unsigned char>(src_[i]))) ++i;
        if (i < src_.size() && (src_[i] == '"' || src_[i] == '\'')) {
          char q = src_[i++];
          auto end = src_.find(q, i);
          if (end == std::string_view::npos) throw HtmlUnparseable("attribute value never closed");
          value = decode_entities(src_.substr(i, end - i));
          i = end + 1;
        } else {
          std::size_t v = i;
          while (i < src_.size() && !std::isspace(static_cast<unsigned char>(src_[i])) && src_[i] != '>') ++i;
          value = decode_entities(src_.substr(v, i - v));
        }
      }
      if (!name.empty()) attrs.emplace(std::move(name), std::move(value));
    }
    pos_ = i;
    if (closing) {
      end_tag(tag);
    } else {
      start_tag(std::move(tag), std::move(attrs), self_closing);
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::unique_ptr<Node> root_;
  std::vector<Node*> stack_;
  std::vector<Formatting> active_;
};

// ---- Markdown writer ----

constexpr char kHardBreak = '\x01';

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

std::string collapse(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  if (pending && !out.empty()) out.push_back(' ');
  return out;
}

std::string trim_spaces(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Collapsed and trimmed paragraph text with hard breaks made real.
std::string finish_inline(std::string_view raw) {
  auto text = trim_spaces(collapse(raw));
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != kHardBreak) {
      out.push_back(text[i]);
      continue;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "  \n";
    while (i + 1 < text.size() && text[i + 1] == ' ') ++i;
  }
  while (out.ends_with("  \n")) out.resize(out.size() - 3);
  return out;
}

void raw_text(const Node& n, std::string& out) {
  if (n.is_text) {
    out += n.text;
    return;
  }
  if (n.tag == "br") out.push_back('\n');
  for (const auto& c : n.children) raw_text(*c, out);
}

std::string indent_rest(std::string_view text, std::size_t width) {
  std::string out;
  std::string pad(width, ' ');
  std::size_t pos = 0;
  bool first = true;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!first) out += "\n" + (line.empty() ? std::string() : pad);
    out += line;
    first = false;
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

class Writer {
 public:
  std::vector<std::string> blocks;

  void children(const Node& n) {
    for (const auto& c : n.children) node(*c);
  }

  void flush() {
    auto t = finish_inline(inline_);
    inline_.clear();
    if (!t.empty()) blocks.push_back(std::move(t));
  }

 private:
  std::string inline_;

  static std::vector<std::string> blocks_of(const Node& n) {
    Writer w;
    w.children(n);
    w.flush();
    return w.blocks;
  }

  void node(const Node& n) {
    if (n.is_text) {
      inline_ += n.text;
      return;
    }
    const auto& t = n.tag;
    if (kDropped.count(t)) return;
    if (is_heading(t)) {
      flush();
      auto text = finish_inline(inline_of(n));
      std::replace(text.begin(), text.end(), '\n', ' ');
      if (!text.empty()) blocks.push_back(std::string(t[1] - '0', '#') + " " + text);
      return;
    }
    if (t == "pre" || t == "listing" || t == "plaintext" || t == "xmp") {
      flush();
      std::string body;
      raw_text(n, body);
      if (body.ends_with('\n')) body.pop_back();
      std::string fence = "```";
      while (body.find(fence) != std::string::npos) fence.push_back('`');
      blocks.push_back(fence + "\n" + body + "\n" + fence);
      return;
    }
    if (t == "hr") {
      flush();
      blocks.push_back("---");
      return;
    }
    if (t == "ul" || t == "ol") {
      flush();
      auto l = list(n);
      if (!l.empty()) blocks.push_back(std::move(l));
      return;
    }
    if (t == "li") {
      flush();
      auto body = join(blocks_of(n), "\n");
      blocks.push_back(indent_rest("- " + body, 2));
      return;
    }
    if (t == "blockquote") {
      flush();
      auto inner = join(blocks_of(n), "\n\n");
      if (inner.empty()) return;
      std::string out;
      std::size_t pos = 0;
      while (pos <= inner.size()) {
        auto nl = inner.find('\n', pos);
        auto line = inner.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (!out.empty()) out += "\n";
        out += line.empty() ? ">" : "> " + line;
        if (nl == std::string::npos) break;
        pos = nl + 1;
      }
      blocks.push_back(out);
      return;
    }
    if (t == "table") {
      flush();
      auto tbl = table(n);
      if (!tbl.empty()) blocks.push_back(std::move(tbl));
      return;
    }
    if (kClosesP.count(t) || t == "tr" || t == "td" || t == "th" || t == "caption" ||
        t == "tbody" || t == "thead" || t == "tfoot" || t == "head") {
      flush();
      for (auto& b : blocks_of(n)) blocks.push_back(std::move(b));
      return;
    }
    inline_ += element_inline(n);
  }

  static std::string list(const Node& n) {
    bool ordered = n.tag == "ol";
    long number = 1;
    if (ordered) {
      auto it = n.attrs.find("start");
      if (it != n.attrs.end()) {
        try {
          number = std::stol(it->second);
        } catch (...) {
        }
      }
    }
    std::vector<std::string> items;
    Writer loose;
    auto emit_loose = [&] {
      loose.flush();
      for (auto& b : loose.blocks) items.push_back(std::move(b));
      loose.blocks.clear();
    };
    for (const auto& c : n.children) {
      if (c->is_text || c->tag != "li") {
        loose.node(*c);
        continue;
      }
      emit_loose();
      std::string marker = ordered ? std::to_string(number++) + ". " : "- ";
      auto body = join(blocks_of(*c), "\n");
      items.push_back(indent_rest(marker + body, marker.size()));
    }
    emit_loose();
    return join(items, "\n");
  }

  static void collect_rows(const Node& n, std::vector<const Node*>& rows) {
    for (const auto& c : n.children) {
      if (c->is_text || c->tag == "table") continue;
      if (c->tag == "tr") {
        rows.push_back(c.get());
      } else {
        collect_rows(*c, rows);
      }
    }
  }

  static std::string table(const Node& n) {
    std::vector<const Node*> rows;
    collect_rows(n, rows);
    std::vector<std::vector<std::string>> cells;
    std::size_t width = 0;
    for (const auto* r : rows) {
      std::vector<std::string> row;
      for (const auto& c : r->children) {
        if (c->is_text || (c->tag != "td" && c->tag != "th")) continue;
        auto text = finish_inline(inline_of(*c));
        std::replace(text.begin(), text.end(), '\n', ' ');
        std::string escaped;
        for (char ch : text) {
          if (ch == '|') escaped.push_back('\\');
          escaped.push_back(ch);
        }
        row.push_back(escaped);
      }
      width = std::max(width, row.size());
      cells.push_back(std::move(row));
    }
    if (width == 0) return {};
    auto line = [width](std::vector<std::string> row) {
      row.resize(width);
      std::string out = "|";
      for (const auto& c : row) out += " " + c + " |";
      return out;
    };
    std::vector<std::string> out{line(cells[0]), line(std::vector<std::string>(width, "---"))};
    for (std::size_t i = 1; i < cells.size(); ++i) out.push_back(line(cells[i]));
    return join(out, "\n");
  }

  // Leading and trailing whitespace moves outside the markers.
  static std::string wrap(const std::string& inner, std::string_view open, std::string_view close) {
    auto b = inner.find_first_not_of(" \t\n\r\f");
    if (b == std::string::npos) return inner.empty() ? "" : " ";
    auto e = inner.find_last_not_of(" \t\n\r\f");
    return inner.substr(0, b) + std::string(open) + inner.substr(b, e - b + 1) + std::string(close) +
           inner.substr(e + 1);
  }

  static std::string inline_of(const Node& n) {
    std::string inner;
    for (const auto& c : n.children) {
      if (c->is_text) {
        inner += c->text;
      } else if (!kDropped.count(c->tag)) {
        inner += element_inline(*c);
      }
    }
    return inner;
  }

  static std::string element_inline(const Node& n) {
    const auto& t = n.tag;
    if (t == "br") return std::string(1, kHardBreak);
    if (t == "img") {
      auto alt = n.attrs.count("alt") ? n.attrs.at("alt") : "";
      auto src = n.attrs.count("src") ? n.attrs.at("src") : "";
      if (src.empty()) return alt;
      return "![" + collapse(alt) + "](" + src + ")";
    }
    auto inner = inline_of(n);
    if (t == "a") {
      auto it = n.attrs.find("href");
      if (it == n.attrs.end() || it->second.empty() || trim_spaces(inner).empty()) return inner;
      return wrap(inner, "[", "](" + it->second + ")");
    }
    if (t == "strong" || t == "b") return wrap(inner, "**", "**");
    if (t == "em" || t == "i") return wrap(inner, "*", "*");
    if (t == "del" || t == "s" || t == "strike") return wrap(inner, "~~", "~~");
    if (t == "code" || t == "kbd" || t == "samp" || t == "tt") {
      std::string raw;
      raw_text(n, raw);
      auto text = collapse(raw);
      std::string tick = "`";
      while (text.find(tick) != std::string::npos) tick.push_back('`');
      return wrap(text, tick, tick);
    }
    if (is_heading(t) || kClosesP.count(t) || t == "tr" || t == "td" || t == "th") {
      return " " + inner + " ";
    }
    return inner;
  }
};

}  // namespace

std::string html_to_markdown(std::string_view html) {
  auto root = TreeBuilder(html).build();
  Writer w;
  w.children(*root);
  w.flush();
  return join(w.blocks, "\n\n");
}

std::string strip_tags(std::string_view html) {
  std::string text;
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] == '<') {
      auto close = html.find('>', i);
      if (close == std::string_view::npos) {
        text.append(html.substr(i));
        break;
      }
      std::string tag;
      for (std::size_t k = i + 1; k < close && std::isalpha(static_cast<unsigned char>(html[k])); ++k) {
        tag.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(html[k]))));
      }
      i = close + 1;
      if (tag == "script" || tag == "style") {
        auto end = find_ci(html, "</" + tag, i);
        i = end == std::string_view::npos ? html.size() : end;
      }
      text.push_back(' ');
      continue;
    }
    text.push_back(html[i] == '\0' ? ' ' : html[i]);
    ++i;
  }
  return trim_spaces(collapse(decode_entities(text)));
}

MarkdownResult convert_page(const PageDocument& doc) {
  MarkdownResult r;
  try {
    r.markdown = html_to_markdown(doc.html);
  } catch (const HtmlUnparseable& e) {
    r.fallback = true;
    r.warning = e.what();
    r.markdown = strip_tags(doc.html);
  }
  return r;
}

}  // namespace exploitbench::pocminer
