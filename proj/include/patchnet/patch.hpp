#pragma once

#include <optional>
#include <string>
#include <vector>

#include "patchnet/cscan.hpp"
#include "patchnet/error.hpp"
#include "patchnet/util.hpp"

namespace patchnet::corpus {

using csrc::Annotation;

enum class LineKind { Removed, Added };

struct AnnotatedLine {
  LineKind kind = LineKind::Removed;
  Annotation annotation = Annotation::Normal;
  std::vector<std::string> tokens;  // abstracted code tokens, never empty
  bool operator==(const AnnotatedLine&) const = default;
};

struct Hunk {
  std::vector<AnnotatedLine> removed;
  std::vector<AnnotatedLine> added;
  bool operator==(const Hunk&) const = default;
};

struct FileChange {
  std::string path;
  std::vector<Hunk> hunks;
  bool operator==(const FileChange&) const = default;
};

// One preprocessed commit.
struct Patch {
  std::string id;
  std::optional<int> label;
  std::vector<std::string> message_tokens;
  std::vector<FileChange> files;
  int changed_line_count = 0;  // removed+added lines before expansion
  bool operator==(const Patch&) const = default;
};

inline Annotation annotation_from_name(const std::string& name,
                                       const std::string& where) {
  if (name == "error-checking") return Annotation::ErrorChecking;
  if (name == "error-handling") return Annotation::ErrorHandling;
  if (name == "normal") return Annotation::Normal;
  fail(where + ": unknown annotation '" + name + "'");
}

inline constexpr char kPatchDataHeader[] = "patchnet-data 1";

// Patch data file: line-oriented UTF-8, one header line, then per patch
//
//   commit: <sha>
//   label: <0|1|->
//   lines: <changed line count>
//   msg:[ <space-joined message tokens>]
//   file: <path>          (repeated)
//   hunk:                 (repeated per file)
//   -|<annotation>|<space-joined tokens>
//   +|<annotation>|<space-joined tokens>
//
// The exact grammar is documented in docs/file-formats.md and frozen by
// golden tests.
inline void write_patch_file(const std::vector<Patch>& patches,
                             const std::string& path) {
  std::string out;
  out += kPatchDataHeader;
  out += '\n';
  for (const auto& p : patches) {
    out += "commit: " + p.id + "\n";
    out += "label: ";
    out += p.label ? (*p.label ? "1" : "0") : "-";
    out += "\n";
    out += "lines: " + std::to_string(p.changed_line_count) + "\n";
    out += "msg:";
    if (!p.message_tokens.empty()) out += " " + util::join(p.message_tokens, " ");
    out += "\n";
    for (const auto& file : p.files) {
      out += "file: " + file.path + "\n";
      for (const auto& hunk : file.hunks) {
        out += "hunk:\n";
        for (const auto* side : {&hunk.removed, &hunk.added}) {
          for (const auto& line : *side) {
            out += line.kind == LineKind::Removed ? '-' : '+';
            out += '|';
            out += csrc::annotation_name(line.annotation);
            out += '|';
            out += util::join(line.tokens, " ");
            out += '\n';
          }
        }
      }
    }
  }
  util::write_file(path, out);
}

inline std::vector<Patch> read_patch_file(const std::string& path) {
  const auto lines = util::split_lines(util::read_file(path));
  auto where = [&](std::size_t i) { return path + ":" + std::to_string(i + 1); };
  if (lines.empty() || lines[0] != kPatchDataHeader)
    fail(path + ": missing '" + std::string(kPatchDataHeader) + "' header");

  std::vector<Patch> patches;
  Patch* patch = nullptr;
  FileChange* file = nullptr;
  Hunk* hunk = nullptr;

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (line.rfind("commit: ", 0) == 0) {
      patches.emplace_back();
      patch = &patches.back();
      patch->id = line.substr(8);
      file = nullptr;
      hunk = nullptr;
      continue;
    }
    if (!patch) fail(where(i) + ": record outside any commit");
    if (line.rfind("label: ", 0) == 0) {
      const std::string v = line.substr(7);
      if (v == "1")
        patch->label = 1;
      else if (v == "0")
        patch->label = 0;
      else if (v == "-")
        patch->label.reset();
      else
        fail(where(i) + ": bad label '" + v + "'");
      continue;
    }
    if (line.rfind("lines: ", 0) == 0) {
      patch->changed_line_count = std::stoi(line.substr(7));
      continue;
    }
    if (line.rfind("msg:", 0) == 0) {
      patch->message_tokens =
          util::split_ws(line.size() > 4 ? line.substr(5) : "");
      continue;
    }
    if (line.rfind("file: ", 0) == 0) {
      patch->files.emplace_back();
      file = &patch->files.back();
      file->path = line.substr(6);
      hunk = nullptr;
      continue;
    }
    if (line == "hunk:") {
      if (!file) fail(where(i) + ": hunk outside any file");
      file->hunks.emplace_back();
      hunk = &file->hunks.back();
      continue;
    }
    if (line[0] == '-' || line[0] == '+') {
      if (!hunk) fail(where(i) + ": change line outside any hunk");
      if (line.size() < 2 || line[1] != '|')
        fail(where(i) + ": malformed change line");
      const auto second = line.find('|', 2);
      if (second == std::string::npos)
        fail(where(i) + ": malformed change line");
      AnnotatedLine al;
      al.kind = line[0] == '-' ? LineKind::Removed : LineKind::Added;
      al.annotation =
          annotation_from_name(line.substr(2, second - 2), where(i));
      al.tokens = util::split_ws(line.substr(second + 1));
      if (al.tokens.empty()) fail(where(i) + ": change line without tokens");
      (al.kind == LineKind::Removed ? hunk->removed : hunk->added)
          .push_back(std::move(al));
      continue;
    }
    fail(where(i) + ": unrecognized record '" + line + "'");
  }
  return patches;
}

}  // namespace patchnet::corpus
