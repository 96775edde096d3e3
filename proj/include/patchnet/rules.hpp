#pragma once

#include <regex>
#include <string>
#include <unordered_set>
#include <vector>

#include "patchnet/ctok.hpp"
#include "patchnet/error.hpp"
#include "patchnet/util.hpp"

namespace patchnet::csrc {

// Token sets driving the error-checking / error-handling line annotations.
// The structural rules (what counts as a failure test or a cleanup action)
// are fixed; the vocabularies below can be tuned via a config file.
struct AnnotationRules {
  std::unordered_set<std::string> null_tokens = {"NULL"};
  std::string error_macro_regex = "E[A-Z]+";
  std::unordered_set<std::string> error_test_calls = {
      "IS_ERR", "IS_ERR_OR_NULL", "IS_ERR_VALUE", "PTR_ERR_OR_ZERO"};
  std::unordered_set<std::string> cleanup_keywords = {"return", "goto"};
  std::vector<std::string> cleanup_call_substrings = {"free", "put", "release",
                                                      "unlock", "destroy"};

  const std::regex& macro_pattern() const {
    if (!compiled_) {
      pattern_ = std::regex(error_macro_regex);
      compiled_ = true;
    }
    return pattern_;
  }

private:
  mutable std::regex pattern_;
  mutable bool compiled_ = false;
};

// Config format: `key = value[, value...]` lines, `#` comments. Unknown keys
// are rejected so typos surface immediately.
inline AnnotationRules load_annotation_rules(const std::string& path) {
  AnnotationRules rules;
  const auto lines = util::split_lines(util::read_file(path));
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = util::trim(lines[ln]);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(path + ":" + std::to_string(ln + 1) + ": expected key = value");
    const std::string key = util::trim(line.substr(0, eq));
    std::vector<std::string> values;
    for (auto& v : util::split(line.substr(eq + 1), ','))
      if (auto t = util::trim(v); !t.empty()) values.push_back(t);

    if (key == "null_tokens") {
      rules.null_tokens = {values.begin(), values.end()};
    } else if (key == "error_macro_regex") {
      if (values.size() != 1)
        fail(path + ":" + std::to_string(ln + 1) + ": one regex expected");
      rules.error_macro_regex = values[0];
    } else if (key == "error_test_calls") {
      rules.error_test_calls = {values.begin(), values.end()};
    } else if (key == "cleanup_keywords") {
      rules.cleanup_keywords = {values.begin(), values.end()};
    } else if (key == "cleanup_call_substrings") {
      rules.cleanup_call_substrings = values;
    } else {
      fail(path + ":" + std::to_string(ln + 1) + ": unknown key '" + key + "'");
    }
  }
  return rules;
}

// Failure test over the tokens of an `if` condition. True when the condition
//   - compares something against a null token or a negative literal,
//   - tests `x < 0` / `x <= 0` (or the mirrored `0 > x` / `0 >= x`),
//   - mentions an error macro (e.g. -EINVAL) next to a comparison or unary
//     minus,
//   - calls one of the IS_ERR-style predicates, or
//   - applies unary `!` to an identifier or call.
inline bool is_failure_test(const std::vector<CTok>& cond,
                            const AnnotationRules& rules) {
  static const std::unordered_set<std::string> cmp = {"==", "!=", "<",
                                                      "<=", ">",  ">="};
  for (std::size_t i = 0; i < cond.size(); ++i) {
    const CTok& t = cond[i];
    const CTok* next = i + 1 < cond.size() ? &cond[i + 1] : nullptr;
    const CTok* prev = i > 0 ? &cond[i - 1] : nullptr;

    if (t.kind == TokKind::Identifier && rules.null_tokens.count(t.text)) {
      if ((prev && (prev->text == "==" || prev->text == "!=")) ||
          (next && (next->text == "==" || next->text == "!=")))
        return true;
    }
    if (t.kind == TokKind::Identifier &&
        std::regex_match(t.text, rules.macro_pattern())) {
      if ((prev && (cmp.count(prev->text) || prev->text == "-")) ||
          (next && cmp.count(next->text)))
        return true;
    }
    if (t.kind == TokKind::Identifier && rules.error_test_calls.count(t.text) &&
        next && next->text == "(")
      return true;
    if (t.text == "!" && next &&
        (next->kind == TokKind::Identifier || next->text == "("))
      return true;
    if (cmp.count(t.text) && next) {
      // negative literal on the right: `x == -1`, `x < -EINVAL`
      if (next->text == "-" && i + 2 < cond.size() &&
          (cond[i + 2].kind == TokKind::Number ||
           (cond[i + 2].kind == TokKind::Identifier &&
            std::regex_match(cond[i + 2].text, rules.macro_pattern()))))
        return true;
      // `x < 0`, `x <= 0`
      if ((t.text == "<" || t.text == "<=") && next->kind == TokKind::Number &&
          next->text == "0")
        return true;
      // `0 > x`, `0 >= x`
      if ((t.text == ">" || t.text == ">=") && prev &&
          prev->kind == TokKind::Number && prev->text == "0")
        return true;
      // negative literal on the left: `-1 == x`
      if (prev && prev->kind == TokKind::Number && i >= 2 &&
          cond[i - 2].text == "-")
        return true;
    }
  }
  return false;
}

// Cleanup action over the tokens of one line: a cleanup keyword, or a call
// whose (lowercased) name contains a cleanup substring.
inline bool is_cleanup_line(const std::vector<CTok>& toks,
                            const AnnotationRules& rules) {
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const CTok& t = toks[i];
    if (t.kind == TokKind::Keyword && rules.cleanup_keywords.count(t.text))
      return true;
    if (t.kind == TokKind::Identifier && i + 1 < toks.size() &&
        toks[i + 1].text == "(") {
      const std::string name = util::to_lower(t.text);
      for (const auto& sub : rules.cleanup_call_substrings)
        if (name.find(sub) != std::string::npos) return true;
    }
  }
  return false;
}

}  // namespace patchnet::csrc
