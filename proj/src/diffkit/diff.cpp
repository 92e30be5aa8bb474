// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "exploitbench/diffkit.hpp"
#include "lines.hpp"

namespace exploitbench::diffkit {

using detail::split_lines;
using detail::TextLine;

namespace {

struct Edit {
  LineTag tag;
  std::size_t a = 0;  // index into a for Context/Del
  std::size_t b = 0;  // index into b for Context/Add
};

bool equal(const TextLine& x, const TextLine& y) {
  return x.eol == y.eol && x.text == y.text;
}

// Greedy forward Myers with a saved frontier per edit distance, then a
// backtrack. Quadratic memory in D only, which is fine for source files.
std::vector<Edit> myers(const std::vector<TextLine>& a,
                        const std::vector<TextLine>& b) {
  const long n = static_cast<long>(a.size());
  const long m = static_cast<long>(b.size());
  const long max = n + m;
  const long off = max + 1;
  std::vector<long> v(static_cast<std::size_t>(2 * max + 3), 0);
  std::vector<std::vector<long>> trace;

  long final_d = 0;
  for (long d = 0; d <= max; ++d) {
    trace.push_back(v);
    bool done = false;
    for (long k = -d; k <= d; k += 2) {
      long x;
      if (k == -d || (k != d && v[off + k - 1] < v[off + k + 1])) {
        x = v[off + k + 1];
      } else {
        x = v[off + k - 1] + 1;
      }
      long y = x - k;
      while (x < n && y < m && equal(a[x], b[y])) {
        ++x;
        ++y;
      }
      v[off + k] = x;
      if (x >= n && y >= m) {
        done = true;
        break;
      }
    }
    if (done) {
      final_d = d;
      break;
    }
  }

  std::vector<Edit> edits;
  long x = n;
  long y = m;
  for (long d = final_d; d >= 0; --d) {
    const auto& vd = trace[static_cast<std::size_t>(d)];
    long k = x - y;
    long prev_k;
    if (k == -d || (k != d && vd[off + k - 1] < vd[off + k + 1])) {
      prev_k = k + 1;
    } else {
      prev_k = k - 1;
    }
    long prev_x = d == 0 ? 0 : vd[off + prev_k];
    long prev_y = prev_x - prev_k;
    if (d == 0) {
      prev_x = 0;
      prev_y = 0;
    }
    while (x > prev_x && y > prev_y) {
      --x;
      --y;
      edits.push_back({LineTag::Context, static_cast<std::size_t>(x),
                       static_cast<std::size_t>(y)});
    }
    if (d > 0) {
      if (x == prev_x) {
        --y;
        edits.push_back({LineTag::Add, 0, static_cast<std::size_t>(y)});
      } else {
        --x;
        edits.push_back({LineTag::Del, static_cast<std::size_t>(x), 0});
      }
    }
  }
  std::reverse(edits.begin(), edits.end());

  // Within a change block, list deletions before additions.
  for (std::size_t i = 0; i < edits.size();) {
    if (edits[i].tag == LineTag::Context) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < edits.size() && edits[j].tag != LineTag::Context) ++j;
    std::stable_partition(edits.begin() + static_cast<long>(i),
                          edits.begin() + static_cast<long>(j),
                          [](const Edit& e) { return e.tag == LineTag::Del; });
    i = j;
  }
  return edits;
}

}  // namespace

std::string unified_diff(std::string_view old_path, std::string_view new_path,
                         std::string_view a, std::string_view b,
                         std::size_t context) {
  if (a == b) return {};
  const auto al = split_lines(a);
  const auto bl = split_lines(b);
  const auto edits = myers(al, bl);

  // Group changes whose context windows touch.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (edits[i].tag == LineTag::Context) continue;
    std::size_t j = i;
    while (j + 1 < edits.size() && edits[j + 1].tag != LineTag::Context) ++j;
    if (!groups.empty() && i - groups.back().second - 1 <= 2 * context) {
      groups.back().second = j;
    } else {
      groups.emplace_back(i, j);
    }
    i = j;
  }

  FileDiff fd;
  fd.old_path = std::string(old_path);
  fd.new_path = std::string(new_path);
  for (auto [first, last] : groups) {
    std::size_t begin = first >= context ? first - context : 0;
    std::size_t end = std::min(edits.size(), last + 1 + context);
    Hunk h;
    bool have_old = false;
    bool have_new = false;
    std::size_t a_pos = 0;
    std::size_t b_pos = 0;
    // Position of the hunk in each file even when one side is empty.
    for (std::size_t i = 0; i < begin; ++i) {
      if (edits[i].tag != LineTag::Add) ++a_pos;
      if (edits[i].tag != LineTag::Del) ++b_pos;
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = edits[i];
      HunkLine hl;
      hl.tag = e.tag;
      const TextLine& src = e.tag == LineTag::Add ? bl[e.b] : al[e.a];
      hl.text = std::string(src.text);
      hl.eol = src.eol;
      if (e.tag != LineTag::Add) {
        ++h.old_len;
        have_old = true;
      }
      if (e.tag != LineTag::Del) {
        ++h.new_len;
        have_new = true;
      }
      h.lines.push_back(std::move(hl));
    }
    h.old_start = have_old ? a_pos + 1 : a_pos;
    h.new_start = have_new ? b_pos + 1 : b_pos;
    fd.hunks.push_back(std::move(h));
  }
  PatchSet ps;
  ps.files.push_back(std::move(fd));
  return render_patch(ps);
}

}  // namespace exploitbench::diffkit
