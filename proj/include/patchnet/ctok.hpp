#pragma once

#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace patchnet::csrc {

enum class TokKind { Identifier, Keyword, Number, String, CharLit, Punct };

struct CTok {
  TokKind kind;
  std::string text;  // literal text; literals keep their raw spelling
  int line;          // 1-based line of the token's first character
};

inline const std::unordered_set<std::string>& c_keywords() {
  static const std::unordered_set<std::string> kw = {
      "auto",     "break",    "case",     "char",   "const",    "continue",
      "default",  "do",       "double",   "else",   "enum",     "extern",
      "float",    "for",      "goto",     "if",     "inline",   "int",
      "long",     "register", "restrict", "return", "short",    "signed",
      "sizeof",   "static",   "struct",   "switch", "typedef",  "union",
      "unsigned", "void",     "volatile", "while",  "_Bool"};
  return kw;
}

// Multi-character operators, longest first within each leading character.
inline const std::vector<std::string>& c_operators() {
  static const std::vector<std::string> ops = {
      "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=",
      "==",  "!=",  "&&",  "||", "+=", "-=", "*=", "/=", "%=", "&=",
      "|=",  "^=",  "##"};
  return ops;
}

// Tokenizes C source. Comments vanish; string/char literals become single
// tokens; backslash-newline continuations act as whitespace. Works on
// unpreprocessed code and never fails: unexpected bytes become Punct tokens.
inline std::vector<CTok> tokenize_c(std::string_view src) {
  std::vector<CTok> out;
  int line = 1;
  std::size_t i = 0;
  const std::size_t n = src.size();

  auto peek = [&](std::size_t off) -> char {
    return i + off < n ? src[i + off] : '\0';
  };

  while (i < n) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '\\' && (peek(1) == '\n' || (peek(1) == '\r' && peek(2) == '\n'))) {
      i += peek(1) == '\r' ? 3 : 2;
      ++line;
      continue;
    }
    if (c == '/' && peek(1) == '/') {
      while (i < n && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && peek(1) == '*') {
      i += 2;
      while (i < n && !(src[i] == '*' && peek(1) == '/')) {
        if (src[i] == '\n') ++line;
        ++i;
      }
      i = i + 2 <= n ? i + 2 : n;
      continue;
    }
    if (c == '"' || c == '\'') {
      const char quote = c;
      const int start_line = line;
      std::string text(1, quote);
      ++i;
      while (i < n && src[i] != quote) {
        if (src[i] == '\\' && i + 1 < n) {
          text += src[i];
          text += src[i + 1];
          if (src[i + 1] == '\n') ++line;
          i += 2;
          continue;
        }
        if (src[i] == '\n') ++line;  // unterminated on this line; keep going
        text += src[i];
        ++i;
      }
      if (i < n) {
        text += quote;
        ++i;
      }
      out.push_back({quote == '"' ? TokKind::String : TokKind::CharLit,
                     std::move(text), start_line});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      std::string text;
      // integer/float/hex with suffixes and exponents
      while (i < n) {
        const char d = src[i];
        if (std::isalnum(static_cast<unsigned char>(d)) || d == '.' ||
            ((d == '+' || d == '-') && !text.empty() &&
             (text.back() == 'e' || text.back() == 'E' || text.back() == 'p' ||
              text.back() == 'P'))) {
          text += d;
          ++i;
        } else {
          break;
        }
      }
      out.push_back({TokKind::Number, std::move(text), line});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string text;
      while (i < n && (std::isalnum(static_cast<unsigned char>(src[i])) ||
                       src[i] == '_')) {
        text += src[i];
        ++i;
      }
      const bool kw = c_keywords().count(text) != 0;
      out.push_back({kw ? TokKind::Keyword : TokKind::Identifier,
                     std::move(text), line});
      continue;
    }
    // operators and punctuation, longest match first
    bool matched = false;
    for (const auto& op : c_operators()) {
      if (src.substr(i, op.size()) == op) {
        out.push_back({TokKind::Punct, op, line});
        i += op.size();
        matched = true;
        break;
      }
    }
    if (!matched) {
      out.push_back({TokKind::Punct, std::string(1, c), line});
      ++i;
    }
  }
  return out;
}

// Final spelling of a token in the patch vocabulary: literals collapse so the
// vocabulary stays bounded.
inline std::string collapse_literal(const CTok& tok) {
  switch (tok.kind) {
    case TokKind::Number:
      return "<num>";
    case TokKind::String:
      return "<str>";
    case TokKind::CharLit:
      return "<chr>";
    default:
      return tok.text;
  }
}

}  // namespace patchnet::csrc
