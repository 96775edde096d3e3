#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "patchnet/cscan.hpp"
#include "patchnet/dict.hpp"
#include "patchnet/diff.hpp"
#include "patchnet/git.hpp"
#include "patchnet/patch.hpp"
#include "patchnet/rules.hpp"
#include "patchnet/text.hpp"
#include "patchnet/util.hpp"

namespace patchnet::corpus {

struct PreprocessConfig {
  // keep callee names seen at least this often across the corpus
  int callee_min_count = 5;
  // drop patches with more changed lines (pre-expansion); <=0 disables
  std::optional<int> max_changed_lines = 100;
  csrc::AnnotationRules rules;
};

struct CommitListEntry {
  std::string sha;
  std::optional<int> label;
};

// One record per line: `<sha>[ <label>]` with label true|false|1|0.
// `#` starts a comment; blank lines are skipped.
inline std::vector<CommitListEntry> read_commit_list(const std::string& path) {
  std::vector<CommitListEntry> out;
  const auto lines = util::split_lines(util::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    const auto fields = util::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() > 2)
      fail(path + ":" + std::to_string(i + 1) + ": expected '<sha> [label]'");
    CommitListEntry e;
    e.sha = util::to_lower(fields[0]);
    if (!is_full_sha(e.sha))
      fail(path + ":" + std::to_string(i + 1) + ": not a 40-hex sha: " +
           fields[0]);
    if (fields.size() == 2) {
      const std::string v = util::to_lower(fields[1]);
      if (v == "true" || v == "1")
        e.label = 1;
      else if (v == "false" || v == "0")
        e.label = 0;
      else
        fail(path + ":" + std::to_string(i + 1) + ": bad label '" + fields[1] +
             "' (true|false|1|0)");
    }
    out.push_back(std::move(e));
  }
  return out;
}

struct ExtractError {
  std::string sha;
  std::string reason;
};

struct ExtractResult {
  std::vector<RawCommit> commits;
  std::vector<ExtractError> errors;
};

// Reads every listed commit, in list order. A missing commit becomes an
// error record; extraction continues.
inline ExtractResult extract_commits(const GitRepo& repo,
                                     const std::vector<CommitListEntry>& list) {
  ExtractResult out;
  for (const auto& entry : list) {
    try {
      out.commits.push_back(repo.read_commit(entry.sha, entry.label));
    } catch (const CommitError& e) {
      out.errors.push_back({entry.sha, e.what()});
    }
  }
  return out;
}

// --- intermediate (pre-abstraction) form -----------------------------------

struct PreTok {
  std::string text;
  csrc::TokKind kind;
  bool is_call;
};

struct PreLine {
  LineKind kind;
  Annotation annotation;
  std::vector<PreTok> toks;
};

struct PreHunk {
  std::vector<PreLine> removed, added;
};

struct PreFile {
  std::string path;
  std::vector<PreHunk> hunks;
  std::unordered_set<std::string> defined_before, defined_after;
};

struct PrePatch {
  std::string id;
  std::optional<int> label;
  std::vector<std::string> message_tokens;
  std::vector<PreFile> files;
  int changed_line_count = 0;
  std::vector<std::string> warnings;
};

struct ExpandedHunk {
  std::set<int> removed_lines, added_lines;
  bool fallback = false;  // some extent hit an unbalanced region
};

// Expands each changed line to the full extent of every statement or
// conditional/loop header it intersects, iterated to a fixed point so the
// result is closed under further expansion.
inline ExpandedHunk expand_change(const csrc::FileScan& before,
                                  const csrc::FileScan& after,
                                  const DiffHunk& hunk) {
  ExpandedHunk out;
  auto close_over = [](const csrc::FileScan& scan, const std::vector<DiffLine>& seed,
                       std::set<int>& dst, bool& fallback) {
    for (const auto& dl : seed) dst.insert(dl.number);
    std::size_t prev = 0;
    while (dst.size() != prev) {
      prev = dst.size();
      std::set<int> next = dst;
      for (int line : dst) scan.add_extent(line, next, fallback);
      dst.swap(next);
    }
  };
  close_over(before, hunk.removed, out.removed_lines, out.fallback);
  close_over(after, hunk.added, out.added_lines, out.fallback);
  return out;
}

inline bool is_c_source_path(const std::string& path) {
  const std::string p = util::to_lower(path);
  return p.ends_with(".c") || p.ends_with(".h");
}

// Message NLP, diff parsing, change expansion and line annotation for one
// commit. Identifier abstraction needs corpus-wide callee counts and happens
// later in finalize_patch().
inline PrePatch preprocess_commit(const RawCommit& commit,
                                  const PreprocessConfig& config) {
  PrePatch out;
  out.id = commit.id;
  out.label = commit.label;
  out.message_tokens = text::preprocess_message(commit.message);

  const auto diff_files = parse_unified_diff(commit.diff);
  for (const auto& df : diff_files)
    for (const auto& h : df.hunks)
      out.changed_line_count +=
          static_cast<int>(h.removed.size() + h.added.size());

  for (const auto& df : diff_files) {
    if (df.is_binary || !is_c_source_path(df.path)) continue;
    auto contents = commit.file_contents.find(df.path);
    if (contents == commit.file_contents.end()) continue;
    const csrc::FileScan before(contents->second.first, config.rules);
    const csrc::FileScan after(contents->second.second, config.rules);

    PreFile pf;
    pf.path = df.path;
    pf.defined_before = before.defined_functions();
    pf.defined_after = after.defined_functions();

    for (const auto& dh : df.hunks) {
      const ExpandedHunk exp = expand_change(before, after, dh);
      if (exp.fallback)
        out.warnings.push_back(commit.id + ": unbalanced region in " + df.path +
                               ", expansion limited to changed lines");
      PreHunk ph;
      auto emit = [](const csrc::FileScan& scan, const std::set<int>& lines,
                     LineKind kind, const csrc::AnnotationRules& rules,
                     std::vector<PreLine>& dst) {
        for (int line : lines) {
          PreLine pl;
          pl.kind = kind;
          pl.annotation = scan.annotate(line, rules);
          for (const auto& lt : scan.line_tokens(line))
            pl.toks.push_back({lt.tok.text, lt.tok.kind, lt.is_call});
          if (!pl.toks.empty()) dst.push_back(std::move(pl));
        }
      };
      emit(before, exp.removed_lines, LineKind::Removed, config.rules, ph.removed);
      emit(after, exp.added_lines, LineKind::Added, config.rules, ph.added);
      if (!ph.removed.empty() || !ph.added.empty())
        pf.hunks.push_back(std::move(ph));
    }
    if (!pf.hunks.empty()) out.files.push_back(std::move(pf));
  }
  return out;
}

// Called-function occurrences across the corpus that identifier abstraction
// thresholds against.
inline std::map<std::string, long> count_callees(
    const std::vector<PrePatch>& patches) {
  std::map<std::string, long> counts;
  for (const auto& p : patches)
    for (const auto& f : p.files)
      for (const auto& h : f.hunks)
        for (const auto* side : {&h.removed, &h.added})
          for (const auto& line : *side)
            for (const auto& tok : line.toks)
              if (tok.is_call) ++counts[tok.text];
  return counts;
}

// Keeps a called-function name iff it is not defined in the current file and
// occurs at least callee_min_count times across the corpus. Every other
// identifier becomes the generic `identifier` token; literals collapse to
// <num>/<str>/<chr>; keywords and operators pass through.
inline std::vector<std::string> abstract_line_tokens(
    const std::vector<PreTok>& toks, const std::map<std::string, long>& counts,
    const std::unordered_set<std::string>& defined_in_file,
    int callee_min_count) {
  std::vector<std::string> out;
  out.reserve(toks.size());
  for (const auto& t : toks) {
    switch (t.kind) {
      case csrc::TokKind::Number:
        out.emplace_back("<num>");
        break;
      case csrc::TokKind::String:
        out.emplace_back("<str>");
        break;
      case csrc::TokKind::CharLit:
        out.emplace_back("<chr>");
        break;
      case csrc::TokKind::Identifier: {
        bool keep = false;
        if (t.is_call && !defined_in_file.count(t.text)) {
          auto it = counts.find(t.text);
          keep = it != counts.end() && it->second >= callee_min_count;
        }
        out.emplace_back(keep ? t.text : "identifier");
        break;
      }
      default:
        out.push_back(t.text);
        break;
    }
  }
  return out;
}

inline Patch finalize_patch(const PrePatch& pre,
                            const std::map<std::string, long>& callee_counts,
                            const PreprocessConfig& config) {
  Patch out;
  out.id = pre.id;
  out.label = pre.label;
  out.message_tokens = pre.message_tokens;
  out.changed_line_count = pre.changed_line_count;
  for (const auto& pf : pre.files) {
    FileChange fc;
    fc.path = pf.path;
    for (const auto& ph : pf.hunks) {
      Hunk hunk;
      for (const auto* side : {&ph.removed, &ph.added}) {
        for (const auto& line : *side) {
          AnnotatedLine al;
          al.kind = line.kind;
          al.annotation = line.annotation;
          al.tokens = abstract_line_tokens(
              line.toks, callee_counts,
              line.kind == LineKind::Removed ? pf.defined_before
                                             : pf.defined_after,
              config.callee_min_count);
          (line.kind == LineKind::Removed ? hunk.removed : hunk.added)
              .push_back(std::move(al));
        }
      }
      fc.hunks.push_back(std::move(hunk));
    }
    out.files.push_back(std::move(fc));
  }
  return out;
}

struct GetinfoResult {
  std::vector<Patch> patches;
  encode::Dictionary dict;
  std::vector<ExtractError> errors;
  std::vector<std::string> warnings;
};

// The full preprocessing pipeline: extract, preprocess, filter by changed
// line count, threshold callees over the surviving patches, abstract, and
// build the dictionary.
inline GetinfoResult run_getinfo(const std::string& repo_path,
                                 const std::string& commit_list_path,
                                 const PreprocessConfig& config) {
  const GitRepo repo(repo_path);
  const auto list = read_commit_list(commit_list_path);
  auto extracted = extract_commits(repo, list);

  GetinfoResult out;
  out.errors = std::move(extracted.errors);

  std::vector<PrePatch> pre;
  for (const auto& commit : extracted.commits) {
    PrePatch p = preprocess_commit(commit, config);
    for (auto& w : p.warnings) out.warnings.push_back(w);
    if (config.max_changed_lines && *config.max_changed_lines > 0 &&
        p.changed_line_count > *config.max_changed_lines)
      continue;
    pre.push_back(std::move(p));
  }

  const auto callee_counts = count_callees(pre);
  for (const auto& p : pre)
    out.patches.push_back(finalize_patch(p, callee_counts, config));

  if (!out.patches.empty())
    out.dict = encode::build_dictionaries(out.patches);
  return out;
}

// Writes the patch-data / dictionary file pair of a getinfo run.
inline std::pair<std::string, std::string> write_patch_data(
    const std::vector<Patch>& patches, const encode::Dictionary& dict,
    const std::string& output_prefix) {
  const std::string data_path = output_prefix + ".out";
  const std::string dict_path = output_prefix + ".dict";
  write_patch_file(patches, data_path);
  encode::write_dictionary(dict, dict_path);
  return {data_path, dict_path};
}

}  // namespace patchnet::corpus
