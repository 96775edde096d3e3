#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "patchnet/stem.hpp"
#include "patchnet/stopwords.hpp"

namespace patchnet::text {

// Lowercased alphanumeric runs; everything else is a separator.
inline std::vector<std::string> tokenize_message(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : raw) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Tokenize, drop stop words, stem. Order preserved; may return an empty
// list (all-stopword messages are legitimate).
inline std::vector<std::string> preprocess_message(const std::string& raw) {
  std::vector<std::string> out;
  for (auto& word : tokenize_message(raw)) {
    if (is_stopword(word)) continue;
    out.push_back(porter_stem(word));
  }
  return out;
}

}  // namespace patchnet::text
