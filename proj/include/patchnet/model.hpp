#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "patchnet/adam.hpp"
#include "patchnet/autodiff.hpp"
#include "patchnet/dict.hpp"
#include "patchnet/encode.hpp"
#include "patchnet/error.hpp"
#include "patchnet/params.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/util.hpp"

namespace patchnet::model {

struct Hyperparameters {
  std::string data_type = "all";  // msg | code | all
  int embedding_dim = 32;
  std::vector<int> filter_sizes = {1, 2};
  int num_filters = 32;
  int hidden_layers = 16;  // width of the single hidden layer
  double dropout_keep_prob = 0.5;
  double l2_reg_lambda = 1e-5;
  double learning_rate = 1e-4;
  int batch_size = 64;
  int num_epochs = 25;
  encode::ShapeConfig shape;
  int extra_dim = 0;  // optional side-information vector length

  std::size_t feature_width() const {
    return filter_sizes.size() * static_cast<std::size_t>(num_filters);
  }
  std::size_t em_len() const { return feature_width(); }
  std::size_t ef_len() const { return 2 * feature_width(); }
  std::size_t ec_len() const {
    return static_cast<std::size_t>(shape.max_files) * ef_len();
  }
  std::size_t e_len() const {
    return em_len() + ec_len() + static_cast<std::size_t>(extra_dim);
  }

  void validate() const {
    shape.validate();
    if (data_type != "msg" && data_type != "code" && data_type != "all")
      fail("data_type must be msg, code or all");
    if (embedding_dim < 1 || num_filters < 1 || hidden_layers < 1 ||
        batch_size < 1 || num_epochs < 0 || extra_dim < 0)
      fail("model size hyperparameters must be positive");
    if (filter_sizes.empty()) fail("filter_sizes must not be empty");
    int max_k = 0;
    for (int k : filter_sizes) {
      if (k < 1) fail("filter sizes must be positive");
      max_k = std::max(max_k, k);
    }
    if (data_type != "code" && max_k > shape.msg_length)
      fail("largest filter size exceeds the message length");
    if (data_type != "msg" &&
        (max_k > shape.max_words || max_k > shape.max_lines))
      fail("largest filter size exceeds the code line/hunk bounds");
    if (dropout_keep_prob <= 0.0 || dropout_keep_prob > 1.0)
      fail("dropout_keep_prob must be in (0, 1]");
    if (l2_reg_lambda < 0.0 || learning_rate <= 0.0)
      fail("learning_rate must be positive and l2_reg_lambda non-negative");
  }
};

namespace detail {

// Single source of truth for parameter names and shapes; init and
// load-validation both walk this list in order.
inline void for_each_param(
    const Hyperparameters& hp, std::size_t msg_vocab, std::size_t code_vocab,
    const std::function<void(const std::string&, std::vector<std::size_t>)>&
        fn) {
  const auto d = static_cast<std::size_t>(hp.embedding_dim);
  const auto f = static_cast<std::size_t>(hp.num_filters);
  const std::size_t line_dim = hp.feature_width();

  fn("msg/embedding", {msg_vocab, d});
  for (int k : hp.filter_sizes) {
    const std::string base = "msg/conv/k" + std::to_string(k);
    fn(base + "/W", {f, static_cast<std::size_t>(k), d});
    fn(base + "/b", {f});
  }
  fn("code/embedding", {code_vocab, d});
  for (const char* mod : {"removed", "added"}) {
    for (int k : hp.filter_sizes) {
      const std::string base =
          "code/" + std::string(mod) + "/line/k" + std::to_string(k);
      fn(base + "/W", {f, static_cast<std::size_t>(k), d});
      fn(base + "/b", {f});
    }
    for (int k : hp.filter_sizes) {
      const std::string base =
          "code/" + std::string(mod) + "/hunk/k" + std::to_string(k);
      fn(base + "/W", {f, static_cast<std::size_t>(k), line_dim});
      fn(base + "/b", {f});
    }
  }
  fn("fc/W", {hp.e_len(), static_cast<std::size_t>(hp.hidden_layers)});
  fn("fc/b", {static_cast<std::size_t>(hp.hidden_layers)});
  fn("out/W", {static_cast<std::size_t>(hp.hidden_layers), 1});
  fn("out/b", {1});
}

inline bool is_embedding(const std::string& name) {
  return name.ends_with("/embedding");
}

}  // namespace detail

struct ClassifyTrace {
  std::size_t em_len = 0, ef_len = 0, ec_len = 0, e_len = 0;
};

struct ForwardPass {
  nn::Tape tape;
  nn::Tape::NodeId score_node = 0;
  double score = 0.0;
  ClassifyTrace trace;
  nn::Tape::NodeId em_node = 0, ec_node = 0, e_node = 0;
  std::vector<nn::Tape::NodeId> ef_nodes;

  explicit ForwardPass(bool record) : tape(record) {}
};

// All learned state plus the vocabulary it was trained against.
class PatchNetModel {
public:
  Hyperparameters hp;
  encode::Dictionary dict;
  nn::ParamStore params;

  static PatchNetModel init(const Hyperparameters& hp,
                            encode::Dictionary dict, Rng& rng) {
    hp.validate();
    PatchNetModel m;
    m.hp = hp;
    m.dict = std::move(dict);
    detail::for_each_param(
        hp, m.dict.msg_size(), m.dict.code_size(),
        [&](const std::string& name, std::vector<std::size_t> shape) {
          nn::Tensor& t = m.params.add(name, std::move(shape));
          if (detail::is_embedding(name)) {
            for (auto& v : t.values) v = rng.uniform(-0.1, 0.1);
            // pad row starts at zero so all-pad inputs are inert
            for (std::size_t c = 0; c < t.dim(1); ++c) t.values[c] = 0.0;
          } else if (nn::is_weight_matrix(name)) {
            // fan-based uniform init
            std::size_t fan_in = 1, fan_out = t.shape[0];
            for (std::size_t i = 1; i < t.rank(); ++i) fan_in *= t.shape[i];
            if (t.rank() == 2) {
              fan_in = t.shape[0];
              fan_out = t.shape[1];
            }
            const double limit =
                std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (auto& v : t.values) v = rng.uniform(-limit, limit);
          }  // biases stay zero
        });
    return m;
  }

  ForwardPass forward(const encode::EncodedInput& input,
                      const std::vector<double>* extra, bool training,
                      Rng* rng, bool record) {
    if (hp.extra_dim > 0 && !extra)
      fail("model expects an extra information vector of length " +
           std::to_string(hp.extra_dim));
    if (extra && static_cast<int>(extra->size()) != hp.extra_dim)
      fail("extra information vector length " +
           std::to_string(extra->size()) + " does not match the model (" +
           std::to_string(hp.extra_dim) + ")");

    ForwardPass fw(record);
    nn::Tape& tape = fw.tape;
    std::unordered_map<std::string, nn::Tape::NodeId> leaves, cache;
    auto leaf = [&](const std::string& name) {
      auto it = leaves.find(name);
      if (it != leaves.end()) return it->second;
      const auto id = tape.param(params.at(name));
      leaves.emplace(name, id);
      return id;
    };

    // conv over every filter size, max-pool over positions, concat
    auto conv_pool = [&](nn::Tape::NodeId matrix, const std::string& prefix) {
      std::vector<nn::Tape::NodeId> pooled;
      for (int k : hp.filter_sizes) {
        const std::string base = prefix + "/k" + std::to_string(k);
        pooled.push_back(tape.max_over_rows(
            tape.conv1d_relu(matrix, leaf(base + "/W"), leaf(base + "/b"))));
      }
      return tape.concat(pooled);
    };

    // one line -> feature vector; all-pad lines share a cached subgraph
    auto line_vector = [&](const int* words, const std::string& mod) {
      bool all_pad = true;
      for (int w = 0; w < hp.shape.max_words; ++w)
        if (words[w] != 0) {
          all_pad = false;
          break;
        }
      const std::string key = "line0/" + mod;
      if (all_pad) {
        if (auto it = cache.find(key); it != cache.end()) return it->second;
      }
      std::vector<int> idx(words, words + hp.shape.max_words);
      const auto id =
          conv_pool(tape.embed_rows(leaf("code/embedding"), std::move(idx)),
                    "code/" + mod + "/line");
      if (all_pad) cache.emplace(key, id);
      return id;
    };

    auto hunk_vector = [&](const int* lines, const std::string& mod) {
      bool all_pad = true;
      for (int i = 0; i < hp.shape.max_lines * hp.shape.max_words; ++i)
        if (lines[i] != 0) {
          all_pad = false;
          break;
        }
      const std::string key = "hunk0/" + mod;
      if (all_pad) {
        if (auto it = cache.find(key); it != cache.end()) return it->second;
      }
      std::vector<nn::Tape::NodeId> rows;
      for (int n = 0; n < hp.shape.max_lines; ++n)
        rows.push_back(line_vector(lines + n * hp.shape.max_words, mod));
      const auto id =
          conv_pool(tape.stack_rows(rows), "code/" + mod + "/hunk");
      if (all_pad) cache.emplace(key, id);
      return id;
    };

    // hierarchical polarity embedding: line conv -> hunk conv -> max
    auto polarity_embedding = [&](const int* plane, const std::string& mod) {
      std::vector<nn::Tape::NodeId> hunks;
      const int hunk_stride = hp.shape.max_lines * hp.shape.max_words;
      for (int h = 0; h < hp.shape.max_hunks; ++h)
        hunks.push_back(hunk_vector(plane + h * hunk_stride, mod));
      return tape.elemwise_max(hunks);
    };

    const std::size_t width = hp.feature_width();

    if (hp.data_type != "code") {
      fw.em_node = conv_pool(
          tape.embed_rows(leaf("msg/embedding"), input.msg), "msg/conv");
    } else {
      fw.em_node = tape.zeros(width);
    }

    if (hp.data_type != "msg") {
      const int file_stride =
          2 * hp.shape.max_hunks * hp.shape.max_lines * hp.shape.max_words;
      const int pol_stride =
          hp.shape.max_hunks * hp.shape.max_lines * hp.shape.max_words;
      std::vector<nn::Tape::NodeId> file_vecs;
      for (int f = 0; f < hp.shape.max_files; ++f) {
        const int* plane = input.code.data() + f * file_stride;
        const auto e_r = polarity_embedding(plane, "removed");
        const auto e_a = polarity_embedding(plane + pol_stride, "added");
        file_vecs.push_back(tape.concat({e_r, e_a}));
      }
      fw.ef_nodes = file_vecs;
      fw.ec_node = tape.concat(file_vecs);
    } else {
      fw.ec_node =
          tape.zeros(static_cast<std::size_t>(hp.shape.max_files) * 2 * width);
    }

    std::vector<nn::Tape::NodeId> parts = {fw.em_node, fw.ec_node};
    if (extra && hp.extra_dim > 0) {
      nn::Tensor t({extra->size()});
      t.values = *extra;
      parts.push_back(tape.constant(std::move(t)));
    }
    fw.e_node = tape.concat(parts);

    const auto dropped =
        tape.dropout(fw.e_node, hp.dropout_keep_prob, rng, training);
    const auto hidden = tape.affine(dropped, leaf("fc/W"), leaf("fc/b"), true);
    const auto logit = tape.affine(hidden, leaf("out/W"), leaf("out/b"), false);
    fw.score_node = tape.sigmoid(logit);
    fw.score = tape.scalar(fw.score_node);

    fw.trace.em_len = tape.value(fw.em_node).size();
    fw.trace.ef_len = fw.ef_nodes.empty() ? 2 * width
                                          : tape.value(fw.ef_nodes[0]).size();
    fw.trace.ec_len = tape.value(fw.ec_node).size();
    fw.trace.e_len = tape.value(fw.e_node).size();
    return fw;
  }

  // Inference-only probability score; does not touch gradients.
  double classify(const encode::EncodedInput& input,
                  const std::vector<double>* extra = nullptr) const {
    return const_cast<PatchNetModel*>(this)
        ->forward(input, extra, /*training=*/false, nullptr, /*record=*/false)
        .score;
  }

  void save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nn::save_params(params, (fs::path(dir) / "params.bin").string());
    encode::write_dictionary(dict, (fs::path(dir) / "dict.txt").string());
    write_config((fs::path(dir) / "config.txt").string());
  }

  static PatchNetModel load(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string config_path = (fs::path(dir) / "config.txt").string();
    const std::string dict_path = (fs::path(dir) / "dict.txt").string();
    const std::string params_path = (fs::path(dir) / "params.bin").string();
    for (const auto& p : {config_path, dict_path, params_path})
      if (!fs::exists(p)) fail("missing model file: " + p);

    PatchNetModel m;
    m.hp = read_config(config_path);
    m.dict = encode::read_dictionary(dict_path);
    m.params = nn::load_params(params_path);
    m.hp.validate();

    // every expected tensor must exist with the exact shape
    std::size_t expected = 0;
    detail::for_each_param(
        m.hp, m.dict.msg_size(), m.dict.code_size(),
        [&](const std::string& name, std::vector<std::size_t> shape) {
          ++expected;
          if (!m.params.contains(name))
            fail(params_path + ": missing parameter " + name);
          if (m.params.at(name).shape != shape)
            fail(params_path + ": shape mismatch for " + name +
                 " (does not match " + config_path + ")");
        });
    if (expected != m.params.size())
      fail(params_path + ": unexpected extra parameters");
    for (auto& [name, t] : m.params)
      if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
    return m;
  }

private:
  void write_config(const std::string& path) const {
    std::vector<std::string> ks;
    for (int k : hp.filter_sizes) ks.push_back(std::to_string(k));
    std::string out;
    out += "data_type=" + hp.data_type + "\n";
    out += "embedding_dim=" + std::to_string(hp.embedding_dim) + "\n";
    out += "filter_sizes=" + util::join(ks, ",") + "\n";
    out += "num_filters=" + std::to_string(hp.num_filters) + "\n";
    out += "hidden_layers=" + std::to_string(hp.hidden_layers) + "\n";
    out += "dropout_keep_prob=" + util::format_double(hp.dropout_keep_prob) + "\n";
    out += "l2_reg_lambda=" + util::format_double(hp.l2_reg_lambda) + "\n";
    out += "learning_rate=" + util::format_double(hp.learning_rate) + "\n";
    out += "batch_size=" + std::to_string(hp.batch_size) + "\n";
    out += "num_epochs=" + std::to_string(hp.num_epochs) + "\n";
    out += "max_files=" + std::to_string(hp.shape.max_files) + "\n";
    out += "max_hunks=" + std::to_string(hp.shape.max_hunks) + "\n";
    out += "max_lines=" + std::to_string(hp.shape.max_lines) + "\n";
    out += "max_words=" + std::to_string(hp.shape.max_words) + "\n";
    out += "msg_length=" + std::to_string(hp.shape.msg_length) + "\n";
    out += "extra_dim=" + std::to_string(hp.extra_dim) + "\n";
    out += "msg_vocab_size=" + std::to_string(dict.msg_size()) + "\n";
    out += "code_vocab_size=" + std::to_string(dict.code_size()) + "\n";
    util::write_file(path, out);
  }

  static Hyperparameters read_config(const std::string& path) {
    std::map<std::string, std::string> kv;
    for (const auto& line : util::split_lines(util::read_file(path))) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(path + ": expected key=value lines");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto want = [&](const std::string& key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) fail(path + ": missing key " + key);
      return it->second;
    };
    auto to_int = [&](const std::string& key) {
      try {
        return std::stoi(want(key));
      } catch (const std::exception&) {
        fail(path + ": bad integer for " + key);
      }
    };
    auto to_double = [&](const std::string& key) {
      try {
        return std::stod(want(key));
      } catch (const std::exception&) {
        fail(path + ": bad number for " + key);
      }
    };
    Hyperparameters hp;
    hp.data_type = want("data_type");
    hp.embedding_dim = to_int("embedding_dim");
    hp.filter_sizes.clear();
    for (const auto& part : util::split(want("filter_sizes"), ','))
      hp.filter_sizes.push_back(std::stoi(part));
    hp.num_filters = to_int("num_filters");
    hp.hidden_layers = to_int("hidden_layers");
    hp.dropout_keep_prob = to_double("dropout_keep_prob");
    hp.l2_reg_lambda = to_double("l2_reg_lambda");
    hp.learning_rate = to_double("learning_rate");
    hp.batch_size = to_int("batch_size");
    hp.num_epochs = to_int("num_epochs");
    hp.shape.max_files = to_int("max_files");
    hp.shape.max_hunks = to_int("max_hunks");
    hp.shape.max_lines = to_int("max_lines");
    hp.shape.max_words = to_int("max_words");
    hp.shape.msg_length = to_int("msg_length");
    hp.extra_dim = to_int("extra_dim");
    return hp;
  }
};

// Mean binary cross-entropy over a batch plus the L2 penalty; gradients
// accumulate into the parameter store (zero them beforehand).
inline double batch_loss_and_gradients(
    PatchNetModel& m, const std::vector<const encode::EncodedPatch*>& batch,
    bool training, Rng* rng) {
  if (batch.empty()) fail("empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double data_loss = 0.0;
  for (const auto* ex : batch) {
    if (!ex->label) fail("unlabeled example reached the training loss");
    auto fw = m.forward(ex->input, nullptr, training, rng, /*record=*/true);
    const auto loss = fw.tape.bce_loss(fw.score_node, *ex->label);
    data_loss += fw.tape.scalar(loss) * scale;
    fw.tape.backward(loss, scale);
  }
  nn::add_l2_gradients(m.params, m.hp.l2_reg_lambda);
  return data_loss + nn::l2_penalty(m.params, m.hp.l2_reg_lambda);
}

}  // namespace patchnet::model
