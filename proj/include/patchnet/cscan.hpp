#pragma once

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "patchnet/ctok.hpp"
#include "patchnet/rules.hpp"

namespace patchnet::csrc {

enum class Annotation { ErrorChecking, ErrorHandling, Normal };

inline const char* annotation_name(Annotation a) {
  switch (a) {
    case Annotation::ErrorChecking: return "error-checking";
    case Annotation::ErrorHandling: return "error-handling";
    default: return "normal";
  }
}

// Reserved vocabulary token prepended to each encoded line.
inline const char* annotation_token(Annotation a) {
  switch (a) {
    case Annotation::ErrorChecking: return "<err-check>";
    case Annotation::ErrorHandling: return "<err-handle>";
    default: return "<normal>";
  }
}

// Lightweight whole-file scan of one C file version. Statements and
// conditional/loop headers are recovered with a brace/paren/semicolon
// scanner rather than a grammar, which keeps it robust on unpreprocessed
// kernel-style sources. Lines are 1-based.
//
// Provides everything line-level preprocessing needs:
//   - statement/header extents for change expansion,
//   - error-checking / error-handling / normal annotation,
//   - called-function occurrences and locally defined function names.
class FileScan {
public:
  FileScan(const std::string& text, const AnnotationRules& rules) {
    toks_ = tokenize_c(text);
    line_count_ = 1;
    for (char c : text)
      if (c == '\n') ++line_count_;
    if (text.empty()) line_count_ = 0;

    mark_continued_lines(text);
    compute_depths();
    index_lines();
    find_functions();
    segment_units();
    mark_error_branches(rules);
  }

  int line_count() const { return line_count_; }

  struct LineTok {
    CTok tok;
    bool is_call;  // identifier directly followed by '(' inside a block
  };

  std::vector<LineTok> line_tokens(int line) const {
    std::vector<LineTok> out;
    for (std::size_t ti : tokens_on_line(line))
      out.push_back({toks_[ti], is_call_[ti]});
    return out;
  }

  // Adds the full extent of every statement or header intersecting `line`.
  // On an unbalanced region only the line itself is added and the fallback
  // flag is set.
  void add_extent(int line, std::set<int>& out, bool& fallback) const {
    out.insert(line);
    for (std::size_t ti : tokens_on_line(line)) {
      const Unit& u = units_[unit_of_[ti]];
      if (u.unbalanced) {
        fallback = true;
        continue;
      }
      for (int l = u.lo_line; l <= u.hi_line; ++l) out.insert(l);
    }
  }

  Annotation annotate(int line, const AnnotationRules& rules) const {
    const auto& tis = tokens_on_line(line);
    if (tis.empty()) return Annotation::Normal;
    for (std::size_t ti : tis) {
      const Unit& u = units_[unit_of_[ti]];
      if (u.kind == UnitKind::Header && u.failure_test)
        return Annotation::ErrorChecking;
    }
    if (line >= 1 && line <= line_count_ &&
        error_branch_[static_cast<std::size_t>(line)]) {
      std::vector<CTok> raw;
      for (std::size_t ti : tis) raw.push_back(toks_[ti]);
      if (is_cleanup_line(raw, rules)) return Annotation::ErrorHandling;
    }
    return Annotation::Normal;
  }

  const std::unordered_set<std::string>& defined_functions() const {
    return defined_;
  }

  std::vector<std::string> callees_on_line(int line) const {
    std::vector<std::string> out;
    for (std::size_t ti : tokens_on_line(line))
      if (is_call_[ti]) out.push_back(toks_[ti].text);
    return out;
  }

private:
  enum class UnitKind { Statement, Header, Brace };

  struct Unit {
    UnitKind kind = UnitKind::Statement;
    std::size_t lo = 0, hi = 0;  // token range, inclusive
    int lo_line = 0, hi_line = 0;
    bool unbalanced = false;
    bool failure_test = false;       // headers only
    std::size_t cond_lo = 0, cond_hi = 0;  // condition tokens, headers only
  };

  static bool is_header_keyword(const CTok& t) {
    return t.kind == TokKind::Keyword &&
           (t.text == "if" || t.text == "for" || t.text == "while" ||
            t.text == "switch");
  }

  void mark_continued_lines(const std::string& text) {
    line_continued_.assign(static_cast<std::size_t>(line_count_) + 1, false);
    int line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '\n') {
        std::size_t j = i;
        while (j > 0 && text[j - 1] == '\r') --j;
        if (j > 0 && text[j - 1] == '\\')
          line_continued_[static_cast<std::size_t>(line)] = true;
        ++line;
      }
    }
  }

  void compute_depths() {
    brace_depth_.resize(toks_.size());
    int depth = 0;
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      if (toks_[i].text == "}" && depth > 0) --depth;
      brace_depth_[i] = depth;
      if (toks_[i].text == "{") ++depth;
    }
    is_call_.assign(toks_.size(), false);
    for (std::size_t i = 0; i + 1 < toks_.size(); ++i) {
      is_call_[i] = toks_[i].kind == TokKind::Identifier &&
                    toks_[i + 1].text == "(" && brace_depth_[i] >= 1;
    }
  }

  void index_lines() {
    line_toks_.assign(static_cast<std::size_t>(line_count_) + 1, {});
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      const int l = toks_[i].line;
      if (l >= 1 && l <= line_count_)
        line_toks_[static_cast<std::size_t>(l)].push_back(i);
    }
  }

  const std::vector<std::size_t>& tokens_on_line(int line) const {
    static const std::vector<std::size_t> empty;
    if (line < 1 || line > line_count_) return empty;
    return line_toks_[static_cast<std::size_t>(line)];
  }

  // Matching close paren for the open paren at `open`, or npos.
  std::size_t match_paren(std::size_t open) const {
    int depth = 0;
    for (std::size_t i = open; i < toks_.size(); ++i) {
      if (toks_[i].text == "(") ++depth;
      else if (toks_[i].text == ")" && --depth == 0) return i;
    }
    return std::string::npos;
  }

  std::size_t match_brace(std::size_t open) const {
    int depth = 0;
    for (std::size_t i = open; i < toks_.size(); ++i) {
      if (toks_[i].text == "{") ++depth;
      else if (toks_[i].text == "}" && --depth == 0) return i;
    }
    return std::string::npos;
  }

  void find_functions() {
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      if (toks_[i].text != "{" || brace_depth_[i] != 0) continue;
      if (i == 0 || toks_[i - 1].text != ")") continue;
      // body of something with a parameter list: find the ( ... ) and the name
      int pd = 0;
      std::size_t open = std::string::npos;
      for (std::size_t j = i - 1; j + 1 > 0; --j) {
        if (toks_[j].text == ")") ++pd;
        else if (toks_[j].text == "(" && --pd == 0) {
          open = j;
          break;
        }
      }
      if (open == std::string::npos || open == 0) continue;
      const CTok& name = toks_[open - 1];
      if (name.kind == TokKind::Identifier &&
          !is_header_keyword(name))  // skips `while (...) {` etc.
        defined_.insert(name.text);
    }
  }

  void segment_units() {
    const std::size_t n = toks_.size();
    unit_of_.assign(n, 0);
    std::size_t i = 0;
    while (i < n) {
      Unit u;
      u.lo = i;
      const bool first_on_line = i == 0 || toks_[i - 1].line < toks_[i].line;
      if (toks_[i].text == "#" && first_on_line) {
        // preprocessor directive: runs to the end of its (continued) line
        int end_line = toks_[i].line;
        while (end_line <= line_count_ &&
               line_continued_[static_cast<std::size_t>(end_line)])
          ++end_line;
        std::size_t j = i;
        while (j + 1 < n && toks_[j + 1].line <= end_line) ++j;
        u.kind = UnitKind::Statement;
        u.hi = j;
        i = j + 1;
      } else if (is_header_keyword(toks_[i]) && i + 1 < n &&
                 toks_[i + 1].text == "(") {
        u.kind = UnitKind::Header;
        const std::size_t close = match_paren(i + 1);
        if (close == std::string::npos) {
          u.hi = n - 1;
          u.unbalanced = true;
        } else {
          u.hi = close;
          u.cond_lo = i + 2;
          u.cond_hi = close;  // exclusive
        }
        i = u.hi + 1;
      } else if (toks_[i].text == "{" || toks_[i].text == "}") {
        u.kind = UnitKind::Brace;
        u.hi = i;
        ++i;
      } else {
        u.kind = UnitKind::Statement;
        int pdepth = 0;
        std::size_t j = i;
        bool ended = false;
        while (j < n) {
          const CTok& t = toks_[j];
          if (j > i && (t.text == "{" || t.text == "}" || is_header_keyword(t)))
            break;
          if (t.text == "(") ++pdepth;
          if (t.text == ")") {
            if (pdepth == 0) break;  // stray close belongs elsewhere
            --pdepth;
          }
          if (t.text == ";" && pdepth <= 0) {
            ended = true;
            ++j;
            break;
          }
          ++j;
        }
        u.hi = j > i ? j - 1 : i;
        u.unbalanced = pdepth != 0;
        (void)ended;
        i = u.hi + 1;
      }
      u.lo_line = toks_[u.lo].line;
      u.hi_line = toks_[u.hi].line;
      const std::size_t id = units_.size();
      for (std::size_t t = u.lo; t <= u.hi; ++t) unit_of_[t] = id;
      units_.push_back(u);
    }
  }

  void mark_error_branches(const AnnotationRules& rules) {
    error_branch_.assign(static_cast<std::size_t>(line_count_) + 1, false);
    for (auto& u : units_) {
      if (u.kind != UnitKind::Header || u.unbalanced) continue;
      if (toks_[u.lo].text != "if") continue;
      std::vector<CTok> cond(toks_.begin() + static_cast<std::ptrdiff_t>(u.cond_lo),
                             toks_.begin() + static_cast<std::ptrdiff_t>(u.cond_hi));
      u.failure_test = is_failure_test(cond, rules);
      if (!u.failure_test) continue;

      // Then-branch extent: a braced block, or the statement up to the
      // first top-level semicolon. The else branch is deliberately not
      // treated as failure handling.
      std::size_t k = u.hi + 1;
      if (k >= toks_.size()) continue;
      std::size_t lo, hi;
      if (toks_[k].text == "{") {
        const std::size_t close = match_brace(k);
        if (close == std::string::npos || close <= k + 1) continue;
        lo = k + 1;
        hi = close - 1;
      } else {
        lo = k;
        int pdepth = 0;
        std::size_t j = k;
        while (j < toks_.size()) {
          const CTok& t = toks_[j];
          if (t.text == "}") break;
          if (t.text == "(") ++pdepth;
          if (t.text == ")") --pdepth;
          if (t.text == ";" && pdepth <= 0) break;
          ++j;
        }
        hi = j < toks_.size() ? j : toks_.size() - 1;
      }
      for (std::size_t t = lo; t <= hi && t < toks_.size(); ++t) {
        const int l = toks_[t].line;
        if (l >= 1 && l <= line_count_)
          error_branch_[static_cast<std::size_t>(l)] = true;
      }
    }
  }

  std::vector<CTok> toks_;
  std::vector<bool> line_continued_;
  std::vector<int> brace_depth_;
  std::vector<bool> is_call_;
  std::vector<std::vector<std::size_t>> line_toks_;
  std::vector<Unit> units_;
  std::vector<std::size_t> unit_of_;
  std::vector<bool> error_branch_;
  std::unordered_set<std::string> defined_;
  int line_count_ = 0;
};

}  // namespace patchnet::csrc
