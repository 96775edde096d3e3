#pragma once

#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/util.hpp"

namespace patchnet::corpus {

struct DiffLine {
  int number;        // line number in its own file version
  std::string text;  // without the +/- prefix
  bool operator==(const DiffLine&) const = default;
};

struct DiffHunk {
  int old_start = 0, old_count = 0;
  int new_start = 0, new_count = 0;
  std::vector<DiffLine> removed;  // numbered in the old file
  std::vector<DiffLine> added;    // numbered in the new file
};

struct DiffFile {
  std::string path;
  bool is_new = false;
  bool is_deleted = false;
  bool is_binary = false;
  std::vector<DiffHunk> hunks;
};

namespace detail {

// "@@ -a[,b] +c[,d] @@ ..." -> (a, b, c, d); b and d default to 1
inline bool parse_hunk_header(const std::string& line, DiffHunk& hunk) {
  if (line.rfind("@@ -", 0) != 0) return false;
  std::size_t i = 4;
  auto read_int = [&](int& out) -> bool {
    if (i >= line.size() || !std::isdigit(static_cast<unsigned char>(line[i])))
      return false;
    long v = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])))
      v = v * 10 + (line[i++] - '0');
    out = static_cast<int>(v);
    return true;
  };
  if (!read_int(hunk.old_start)) return false;
  hunk.old_count = 1;
  if (i < line.size() && line[i] == ',') {
    ++i;
    if (!read_int(hunk.old_count)) return false;
  }
  if (i + 1 >= line.size() || line[i] != ' ' || line[i + 1] != '+') return false;
  i += 2;
  if (!read_int(hunk.new_start)) return false;
  hunk.new_count = 1;
  if (i < line.size() && line[i] == ',') {
    ++i;
    if (!read_int(hunk.new_count)) return false;
  }
  return i + 3 <= line.size() && line.compare(i, 3, " @@") == 0;
}

// path from "--- a/..." / "+++ b/..." lines; empty for /dev/null
inline std::string file_marker_path(const std::string& line) {
  std::string p = line.substr(4);
  // strip a trailing tab-separated timestamp if present
  if (auto tab = p.find('\t'); tab != std::string::npos) p = p.substr(0, tab);
  if (p == "/dev/null") return {};
  if (p.rfind("a/", 0) == 0 || p.rfind("b/", 0) == 0) return p.substr(2);
  return p;
}

}  // namespace detail

// Parses git-style unified diff output into per-file hunks. Context lines
// are dropped; removed/added lines carry their old/new file line numbers.
// Malformed hunk headers or truncated hunk bodies are fatal, with the
// offending input line in the message.
inline std::vector<DiffFile> parse_unified_diff(const std::string& text) {
  const auto lines = util::split_lines(text);
  std::vector<DiffFile> files;
  DiffFile* cur = nullptr;

  auto parse_error = [&](std::size_t idx, const std::string& what) {
    fail("diff parse error at line " + std::to_string(idx + 1) + ": " + what);
  };

  std::size_t i = 0;
  while (i < lines.size()) {
    const std::string& line = lines[i];
    if (line.rfind("diff --git ", 0) == 0) {
      files.emplace_back();
      cur = &files.back();
      // fallback path from the header itself; ---/+++ markers refine it
      const std::string rest = line.substr(11);
      if (auto sep = rest.find(" b/"); sep != std::string::npos) {
        std::string p = rest.substr(sep + 3);
        if (!p.empty()) cur->path = p;
      }
      ++i;
      continue;
    }
    if (line.rfind("Binary files ", 0) == 0) {
      if (cur) cur->is_binary = true;
      ++i;
      continue;
    }
    if (line.rfind("--- ", 0) == 0) {
      if (!cur) {
        files.emplace_back();
        cur = &files.back();
      }
      const std::string old_path = detail::file_marker_path(line);
      if (old_path.empty()) cur->is_new = true;
      ++i;
      if (i >= lines.size() || lines[i].rfind("+++ ", 0) != 0)
        parse_error(i, "expected +++ after ---");
      const std::string new_path = detail::file_marker_path(lines[i]);
      if (new_path.empty()) {
        cur->is_deleted = true;
        cur->path = old_path;
      } else {
        cur->path = new_path;
      }
      ++i;
      continue;
    }
    if (line.rfind("@@", 0) == 0) {
      if (!cur) parse_error(i, "hunk outside any file");
      DiffHunk hunk;
      if (!detail::parse_hunk_header(line, hunk))
        parse_error(i, "malformed hunk header '" + line + "'");
      ++i;
      int old_ln = hunk.old_start, new_ln = hunk.new_start;
      int old_left = hunk.old_count, new_left = hunk.new_count;
      while (old_left > 0 || new_left > 0) {
        if (i >= lines.size()) parse_error(i - 1, "hunk body ends prematurely");
        const std::string& body = lines[i];
        if (body.rfind("\\", 0) == 0) {  // "\ No newline at end of file"
          ++i;
          continue;
        }
        const char tag = body.empty() ? ' ' : body[0];
        if (tag == ' ') {
          if (old_left <= 0 || new_left <= 0)
            parse_error(i, "context line overruns hunk counts");
          ++old_ln;
          ++new_ln;
          --old_left;
          --new_left;
        } else if (tag == '-') {
          if (old_left <= 0) parse_error(i, "removed line overruns hunk counts");
          hunk.removed.push_back({old_ln, body.substr(1)});
          ++old_ln;
          --old_left;
        } else if (tag == '+') {
          if (new_left <= 0) parse_error(i, "added line overruns hunk counts");
          hunk.added.push_back({new_ln, body.substr(1)});
          ++new_ln;
          --new_left;
        } else {
          parse_error(i, "unexpected line inside hunk: '" + body + "'");
        }
        ++i;
      }
      if (hunk.removed.empty() && hunk.added.empty())
        parse_error(i - 1, "hunk with empty body");
      cur->hunks.push_back(std::move(hunk));
      continue;
    }
    ++i;  // index lines, mode lines, commit headers: ignored
  }
  return files;
}

}  // namespace patchnet::corpus
