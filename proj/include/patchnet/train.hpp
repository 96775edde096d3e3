#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "patchnet/adam.hpp"
#include "patchnet/corpus.hpp"
#include "patchnet/encode.hpp"
#include "patchnet/model.hpp"
#include "patchnet/rng.hpp"

namespace patchnet::train {

struct TrainOptions {
  std::uint64_t seed = 42;
  double valid_ratio = 0.0;  // held-out fraction reported per epoch
  double clip = 0.0;         // global gradient-norm clip; <=0 disables
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> valid_loss;
};

struct TrainResult {
  model::PatchNetModel model;
  std::vector<EpochLog> log;
};

using EpochCallback =
    std::function<void(const model::PatchNetModel&, const EpochLog&)>;

namespace detail {

inline void require_labeled(const std::vector<corpus::Patch>& patches) {
  std::vector<std::string> unlabeled;
  for (const auto& p : patches)
    if (!p.label) unlabeled.push_back(p.id);
  if (!unlabeled.empty())
    fail("training data contains unlabeled patches: " +
         util::join(unlabeled, ", "));
}

}  // namespace detail

// Dictionary building, encoding and the epoch/batch Adam loop. All
// randomness (init, shuffling, dropout) flows from one seeded generator, so
// a seed fixes the whole trajectory.
inline TrainResult train_on_patches(const std::vector<corpus::Patch>& patches,
                                    const model::Hyperparameters& hp,
                                    const TrainOptions& opt,
                                    const EpochCallback& on_epoch = {}) {
  hp.validate();
  if (patches.empty()) fail("no training patches");
  detail::require_labeled(patches);

  const auto dict = encode::build_dictionaries(patches);
  std::vector<encode::EncodedPatch> data;
  data.reserve(patches.size());
  for (const auto& p : patches)
    data.push_back(encode::encode_patch(p, dict, hp.shape));

  Rng rng(opt.seed);
  TrainResult result{model::PatchNetModel::init(hp, dict, rng), {}};
  auto& m = result.model;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t n_valid = 0;
  if (opt.valid_ratio > 0.0) {
    rng.shuffle(order);
    n_valid = std::min<std::size_t>(
        order.size() - 1,
        static_cast<std::size_t>(opt.valid_ratio *
                                 static_cast<double>(order.size())));
  }
  std::vector<std::size_t> train_idx(order.begin(), order.end() - n_valid);
  const std::vector<std::size_t> valid_idx(order.end() - n_valid, order.end());

  nn::AdamState adam(hp.learning_rate);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= hp.num_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t stop = std::min(
          train_idx.size(), start + static_cast<std::size_t>(hp.batch_size));
      std::vector<const encode::EncodedPatch*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&data[train_idx[i]]);

      m.params.zero_grads();
      const double loss =
          model::batch_loss_and_gradients(m, batch, /*training=*/true, &rng);
      ++step;
      if (!std::isfinite(loss))
        fail("non-finite loss at step " + std::to_string(step));
      nn::clip_gradients(m.params, opt.clip);
      adam.step(m.params);
      loss_sum += loss;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!valid_idx.empty()) {
      double v = 0.0;
      for (std::size_t i : valid_idx)
        v += nn::bce_value(m.classify(data[i].input), *data[i].label);
      entry.valid_loss = v / static_cast<double>(valid_idx.size());
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(m, entry);
  }
  return result;
}

inline std::string format_epoch_line(const EpochLog& e) {
  char buf[96];
  if (e.valid_loss)
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f", e.epoch, e.mean_loss,
                  *e.valid_loss);
  else
    std::snprintf(buf, sizeof(buf), "%d\t%.6f", e.epoch, e.mean_loss);
  return buf;
}

// Creates the model folder or empties an existing one.
inline void prepare_model_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (!fs::create_directories(dir) && !fs::is_directory(dir))
    fail("cannot create model directory " + dir);
}

// Full training phase: read, train, checkpoint after every epoch (the model
// directory always holds exactly the three model files; the loss log goes to
// `<model_dir>.train.log` beside it).
inline TrainResult train(const std::string& data_file,
                         const model::Hyperparameters& hp,
                         const std::string& model_dir, const TrainOptions& opt,
                         std::ostream* progress = nullptr) {
  const auto patches = corpus::read_patch_file(data_file);
  prepare_model_dir(model_dir);
  const std::string log_path = model_dir + ".train.log";
  util::write_file(log_path, "");

  std::ofstream log(log_path, std::ios::app);
  auto result = train_on_patches(
      patches, hp, opt,
      [&](const model::PatchNetModel& m, const EpochLog& e) {
        m.save(model_dir);
        const std::string line = format_epoch_line(e);
        log << line << "\n";
        log.flush();
        if (progress) (*progress) << line << "\n";
      });
  if (hp.num_epochs == 0) result.model.save(model_dir);  // init-only model
  return result;
}

inline std::vector<std::pair<std::string, double>> predict_patches(
    const model::PatchNetModel& m, const std::vector<corpus::Patch>& patches) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    const auto input = encode::encode_input(p, m.dict, m.hp.shape);
    out.emplace_back(p.id, m.classify(input));
  }
  return out;
}

// Prediction phase: scores in input order, `<sha>\t<score>` with six
// decimals. Labels in the data file are ignored; the encoder only ever sees
// the label-free view of each patch.
inline void predict(const std::string& data_file, const std::string& model_dir,
                    const std::string& output_file) {
  const auto m = model::PatchNetModel::load(model_dir);
  const auto patches = corpus::read_patch_file(data_file);
  std::string out;
  for (const auto& [sha, score] : predict_patches(m, patches)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    out += sha + "\t" + buf + "\n";
  }
  util::write_file(output_file, out);
}

}  // namespace patchnet::train
