#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "patchnet/dict.hpp"
#include "patchnet/error.hpp"
#include "patchnet/patch.hpp"

namespace patchnet::encode {

// Fixed tensor bounds used for padding/truncation. The flag-facing names:
// max files F, hunks per file H, lines per hunk per polarity N, words per
// line L (the line's annotation token occupies slot 0), message length M.
struct ShapeConfig {
  int max_files = 5;     // F
  int max_hunks = 8;     // H
  int max_lines = 10;    // N
  int max_words = 120;   // L
  int msg_length = 256;  // M

  std::size_t code_size() const {
    return static_cast<std::size_t>(max_files) * 2 * max_hunks * max_lines *
           max_words;
  }
  void validate() const {
    if (max_files < 1 || max_hunks < 1 || max_lines < 1 || max_words < 1 ||
        msg_length < 1)
      fail("all shape bounds must be >= 1");
  }
  bool operator==(const ShapeConfig&) const = default;
};

// Label-free model input; the prediction path only ever sees this type.
struct EncodedInput {
  std::string id;
  std::vector<int> msg;   // length M
  std::vector<int> code;  // flat F x 2 x H x N x L, row-major
};

struct EncodedPatch {
  EncodedInput input;
  std::optional<int> label;
};

inline std::size_t code_offset(const ShapeConfig& s, int file, int polarity,
                               int hunk, int line, int word) {
  return ((((static_cast<std::size_t>(file) * 2 + polarity) * s.max_hunks +
            hunk) *
               s.max_lines +
           line) *
              s.max_words +
          word);
}

// First min(len, M) tokens looked up (unknown -> <unk>), right-padded with
// <pad> to exactly M.
inline std::vector<int> encode_message(const std::vector<std::string>& tokens,
                                       const Dictionary& dict, int msg_length) {
  std::vector<int> out(static_cast<std::size_t>(msg_length), kPadIndex);
  const std::size_t n =
      std::min(tokens.size(), static_cast<std::size_t>(msg_length));
  for (std::size_t i = 0; i < n; ++i) out[i] = dict.msg_index(tokens[i]);
  return out;
}

// Fixed-shape code tensor. The first F files, H hunks per file and N lines
// per hunk per polarity survive; each encoded line is the annotation token
// followed by the first L-1 code tokens. Everything else stays <pad>.
inline std::vector<int> encode_code(const std::vector<corpus::FileChange>& files,
                                    const Dictionary& dict,
                                    const ShapeConfig& shape) {
  std::vector<int> out(shape.code_size(), kPadIndex);
  const int f_max = shape.max_files, h_max = shape.max_hunks,
            n_max = shape.max_lines, l_max = shape.max_words;
  for (int f = 0; f < std::min<int>(f_max, static_cast<int>(files.size())); ++f) {
    const auto& hunks = files[static_cast<std::size_t>(f)].hunks;
    for (int h = 0; h < std::min<int>(h_max, static_cast<int>(hunks.size())); ++h) {
      const auto& hunk = hunks[static_cast<std::size_t>(h)];
      for (int polarity = 0; polarity < 2; ++polarity) {
        const auto& lines = polarity == 0 ? hunk.removed : hunk.added;
        for (int n = 0; n < std::min<int>(n_max, static_cast<int>(lines.size()));
             ++n) {
          const auto& line = lines[static_cast<std::size_t>(n)];
          out[code_offset(shape, f, polarity, h, n, 0)] =
              dict.code_index(csrc::annotation_token(line.annotation));
          const int n_words =
              std::min<int>(l_max - 1, static_cast<int>(line.tokens.size()));
          for (int w = 0; w < n_words; ++w)
            out[code_offset(shape, f, polarity, h, n, w + 1)] =
                dict.code_index(line.tokens[static_cast<std::size_t>(w)]);
        }
      }
    }
  }
  return out;
}

inline EncodedInput encode_input(const corpus::Patch& patch,
                                 const Dictionary& dict,
                                 const ShapeConfig& shape) {
  EncodedInput out;
  out.id = patch.id;
  out.msg = encode_message(patch.message_tokens, dict, shape.msg_length);
  out.code = encode_code(patch.files, dict, shape);
  return out;
}

inline EncodedPatch encode_patch(const corpus::Patch& patch,
                                 const Dictionary& dict,
                                 const ShapeConfig& shape) {
  return {encode_input(patch, dict, shape), patch.label};
}

}  // namespace patchnet::encode
