#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/patch.hpp"
#include "patchnet/util.hpp"

namespace patchnet::encode {

inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;

// Token tables for messages and code. The code table is shared by the
// removed and added sides. Index 0 is <pad>, index 1 is <unk>.
struct Dictionary {
  std::vector<std::string> msg_tokens{{"<pad>"}, {"<unk>"}};
  std::vector<std::string> code_tokens{{"<pad>"}, {"<unk>"}};
  std::unordered_map<std::string, int> msg_vocab{{"<pad>", 0}, {"<unk>", 1}};
  std::unordered_map<std::string, int> code_vocab{{"<pad>", 0}, {"<unk>", 1}};

  int msg_index(const std::string& tok) const {
    auto it = msg_vocab.find(tok);
    return it == msg_vocab.end() ? kUnkIndex : it->second;
  }
  int code_index(const std::string& tok) const {
    auto it = code_vocab.find(tok);
    return it == code_vocab.end() ? kUnkIndex : it->second;
  }
  std::size_t msg_size() const { return msg_tokens.size(); }
  std::size_t code_size() const { return code_tokens.size(); }

  bool operator==(const Dictionary& other) const {
    return msg_tokens == other.msg_tokens && code_tokens == other.code_tokens;
  }
};

namespace detail {

inline void append_ranked(std::vector<std::string>& tokens,
                          std::unordered_map<std::string, int>& vocab,
                          const std::map<std::string, long>& counts,
                          int min_count) {
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, count] : ranked) {
    if (count < min_count) continue;
    if (vocab.count(tok)) continue;
    vocab.emplace(tok, static_cast<int>(tokens.size()));
    tokens.push_back(tok);
  }
}

}  // namespace detail

// Builds both vocabularies from a training corpus. Tokens are ranked by
// (frequency desc, token asc). Each code line contributes its annotation
// token followed by its code tokens, matching what the encoder feeds the
// model. Identifier abstraction has already bounded the code vocabulary, so
// min_count defaults to 1.
inline Dictionary build_dictionaries(const std::vector<corpus::Patch>& patches,
                                     int min_count = 1) {
  if (patches.empty()) fail("cannot build a dictionary from an empty corpus");
  std::map<std::string, long> msg_counts, code_counts;
  for (const auto& p : patches) {
    for (const auto& tok : p.message_tokens) ++msg_counts[tok];
    for (const auto& file : p.files) {
      for (const auto& hunk : file.hunks) {
        for (const auto* side : {&hunk.removed, &hunk.added}) {
          for (const auto& line : *side) {
            ++code_counts[csrc::annotation_token(line.annotation)];
            for (const auto& tok : line.tokens) ++code_counts[tok];
          }
        }
      }
    }
  }
  Dictionary dict;
  detail::append_ranked(dict.msg_tokens, dict.msg_vocab, msg_counts, min_count);
  detail::append_ranked(dict.code_tokens, dict.code_vocab, code_counts, min_count);
  return dict;
}

// Dictionary file: a [msg] section then a [code] section, one token per
// line; a token's index is its zero-based offset within its section.
inline void write_dictionary(const Dictionary& dict, const std::string& path) {
  std::string out = "[msg]\n";
  for (const auto& t : dict.msg_tokens) out += t + "\n";
  out += "[code]\n";
  for (const auto& t : dict.code_tokens) out += t + "\n";
  util::write_file(path, out);
}

inline Dictionary read_dictionary(const std::string& path) {
  const auto lines = util::split_lines(util::read_file(path));
  Dictionary dict;
  dict.msg_tokens.clear();
  dict.code_tokens.clear();
  dict.msg_vocab.clear();
  dict.code_vocab.clear();
  std::vector<std::string>* tokens = nullptr;
  std::unordered_map<std::string, int>* vocab = nullptr;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line == "[msg]") {
      tokens = &dict.msg_tokens;
      vocab = &dict.msg_vocab;
      continue;
    }
    if (line == "[code]") {
      tokens = &dict.code_tokens;
      vocab = &dict.code_vocab;
      continue;
    }
    if (!tokens) fail(path + ":" + std::to_string(i + 1) + ": token before section");
    vocab->emplace(line, static_cast<int>(tokens->size()));
    tokens->push_back(line);
  }
  if (dict.msg_tokens.size() < 2 || dict.msg_tokens[0] != "<pad>" ||
      dict.msg_tokens[1] != "<unk>" || dict.code_tokens.size() < 2 ||
      dict.code_tokens[0] != "<pad>" || dict.code_tokens[1] != "<unk>")
    fail(path + ": dictionary must reserve <pad> and <unk> at indices 0 and 1");
  return dict;
}

}  // namespace patchnet::encode
