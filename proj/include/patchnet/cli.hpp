#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "patchnet/corpus.hpp"
#include "patchnet/eval.hpp"
#include "patchnet/model.hpp"
#include "patchnet/train.hpp"

namespace patchnet::cli {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  enum class Mode { Getinfo, Train, Predict, Cv };
  Mode mode = Mode::Train;

  // getinfo
  std::string commit_list;
  std::string git_path;
  std::string output_prefix;
  std::string rules_config;
  int max_changed_lines = 100;  // <=0 disables the filter
  int callee_min_count = 5;

  // train / predict / cv
  std::string data;
  std::string model_dir;
  std::string output_file;  // predict scores; stdout when empty
  int cv_k = 5;

  model::Hyperparameters hp;
  train::TrainOptions opt;

  // hyperparameter/shape flags the user set explicitly (for predict-time
  // consistency checks against the trained model)
  std::set<std::string> explicit_flags;
};

namespace detail {

inline std::vector<int> parse_filter_sizes(const std::string& raw) {
  std::vector<int> out;
  for (auto& part : util::split(raw, ',')) {
    const std::string t = util::trim(part);
    if (t.empty()) throw UsageError("empty entry in --filter_sizes");
    try {
      const int v = std::stoi(t);
      if (v < 1) throw UsageError("filter sizes must be positive integers");
      out.push_back(v);
    } catch (const std::invalid_argument&) {
      throw UsageError("--filter_sizes expects comma-separated integers, got '" +
                       raw + "'");
    }
  }
  if (out.empty()) throw UsageError("--filter_sizes must not be empty");
  return out;
}

struct AppState {
  CLI::App app{"PatchNet: hierarchical deep patch classification"};
  CLI::App* getinfo = nullptr;
  bool train_flag = false, predict_flag = false;
  std::string filter_sizes_raw = "1, 2";
  CLI::Option* cv_opt = nullptr;
  std::vector<std::pair<std::string, CLI::Option*>> tracked;
};

inline std::unique_ptr<AppState> build_app(CliConfig& cfg) {
  auto st = std::make_unique<AppState>();
  CLI::App& app = st->app;

  st->getinfo = app.add_subcommand(
      "getinfo", "Preprocess commits into a patch data + dictionary file pair");
  st->getinfo->add_option("--commit_list", cfg.commit_list,
                          "File of '<sha> [label]' records, one per line")
      ->required();
  st->getinfo->add_option("--git", cfg.git_path,
                          "Path of the git tree containing the commits")
      ->required();
  st->getinfo->add_option("-o,--output", cfg.output_prefix,
                          "Prefix for the <prefix>.out / <prefix>.dict pair")
      ->required();
  st->getinfo->add_option("--config", cfg.rules_config,
                          "Annotation rule file overriding the built-in sets");
  st->getinfo->add_option("--max_lines", cfg.max_changed_lines,
                          "Drop patches with more changed lines. Default: 100 "
                          "(0 disables)");
  st->getinfo->add_option("--callee_min_count", cfg.callee_min_count,
                          "Keep called-function names seen at least this "
                          "often. Default: 5");

  app.add_flag("--train", st->train_flag, "Training phase");
  app.add_flag("--predict", st->predict_flag, "Prediction phase");
  st->cv_opt = app.add_option(
      "--cv", cfg.cv_k, "k-fold cross-validation over labeled patch data");

  app.add_option("--data", cfg.data, "Path of a list of patches (.out file)");
  app.add_option("--model", cfg.model_dir,
                 "Folder holding (or receiving) the trained model");
  app.add_option("--output", cfg.output_file,
                 "Write prediction scores here as well as to stdout");

  auto track = [&](const std::string& name, CLI::Option* opt) {
    st->tracked.emplace_back(name, opt);
  };

  track("data_type",
        app.add_option("--data_type", cfg.hp.data_type,
                       "Type of data (commit messages, code change, or both) "
                       "used to construct a model. Default: all")
            ->check(CLI::IsMember({"msg", "code", "all"})));
  track("embedding_dim",
        app.add_option("--embedding_dim", cfg.hp.embedding_dim,
                       "Dimension of embedding vectors. Default: 32"));
  track("filter_sizes",
        app.add_option("--filter_sizes", st->filter_sizes_raw,
                       "Sizes of filters used by the convolutional layers. "
                       "Default: \"1, 2\""));
  track("num_filters",
        app.add_option("--num_filters", cfg.hp.num_filters,
                       "Number of filters. Default: 32"));
  track("hidden_layers",
        app.add_option("--hidden_layers", cfg.hp.hidden_layers,
                       "Number of hidden layers. Default: 16"));
  app.add_option("--dropout_keep_prob", cfg.hp.dropout_keep_prob,
                 "Dropout for training PatchNet. Default: 0.5");
  app.add_option("--l2_reg_lambda", cfg.hp.l2_reg_lambda,
                 "Regularization rate. Default: 1e-5");
  app.add_option("--learning_rate", cfg.hp.learning_rate,
                 "Learning rate. Default: 1e-4");
  app.add_option("--batch_size", cfg.hp.batch_size,
                 "Batch size. Default: 64");
  app.add_option("--num_epochs", cfg.hp.num_epochs,
                 "Number of epochs. Default: 25");

  track("max_files",
        app.add_option("--max_files", cfg.hp.shape.max_files,
                       "Number of changed files per patch. Default: 5"));
  track("max_hunks",
        app.add_option("--max_hunks", cfg.hp.shape.max_hunks,
                       "Number of hunks per file. Default: 8"));
  track("max_lines",
        app.add_option("--max_lines", cfg.hp.shape.max_lines,
                       "Number of removed or added lines per hunk. "
                       "Default: 10"));
  track("max_words",
        app.add_option("--max_words", cfg.hp.shape.max_words,
                       "Number of words per changed line. Default: 120"));
  track("msg_length",
        app.add_option("--msg_length", cfg.hp.shape.msg_length,
                       "Number of words kept from the commit message. "
                       "Default: 256"));

  app.add_option("--seed", cfg.opt.seed,
                 "Seed for initialization, shuffling and dropout. Default: 42");
  app.add_option("--valid_ratio", cfg.opt.valid_ratio,
                 "Held-out fraction reported per epoch. Default: 0");
  app.add_option("--clip", cfg.opt.clip,
                 "Global gradient-norm clip; 0 disables. Default: 0");
  return st;
}

}  // namespace detail

inline std::string help_text() {
  CliConfig cfg;
  auto st = detail::build_app(cfg);
  return st->app.help();
}

// Parses argv (excluding the program name). Throws UsageError for bad usage;
// a help request returns a config with help_requested set.
struct ParseResult {
  CliConfig config;
  bool help_requested = false;
  std::string help;
};

inline ParseResult parse_args(const std::vector<std::string>& args) {
  ParseResult res;
  CliConfig& cfg = res.config;
  auto st = detail::build_app(cfg);

  std::vector<const char*> argv = {"patchnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    st->app.parse(static_cast<int>(argv.size()),
                  const_cast<char**>(argv.data()));
  } catch (const CLI::CallForHelp&) {
    res.help_requested = true;
    res.help = st->app.help();
    return res;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const bool getinfo = st->getinfo->parsed();
  const int modes = int(getinfo) + int(st->train_flag) +
                    int(st->predict_flag) + int(st->cv_opt->count() > 0);
  if (modes != 1)
    throw UsageError(
        "exactly one of getinfo, --train, --predict or --cv is required");

  if (getinfo) cfg.mode = CliConfig::Mode::Getinfo;
  if (st->train_flag) cfg.mode = CliConfig::Mode::Train;
  if (st->predict_flag) cfg.mode = CliConfig::Mode::Predict;
  if (st->cv_opt->count() > 0) {
    cfg.mode = CliConfig::Mode::Cv;
    if (cfg.cv_k < 2) throw UsageError("--cv needs k >= 2");
  }

  if (cfg.mode != CliConfig::Mode::Getinfo) {
    if (cfg.data.empty()) throw UsageError("--data is required");
    if (cfg.mode != CliConfig::Mode::Cv && cfg.model_dir.empty())
      throw UsageError("--model is required");
  }

  cfg.hp.filter_sizes = detail::parse_filter_sizes(st->filter_sizes_raw);
  for (const auto& [name, opt] : st->tracked)
    if (opt->count() > 0) cfg.explicit_flags.insert(name);
  return res;
}

namespace detail {

inline void check_predict_flags(const CliConfig& cfg,
                                const model::Hyperparameters& trained) {
  auto mismatch = [](const std::string& flag, const std::string& got,
                     const std::string& want) {
    fail("--" + flag + " " + got + " does not match the trained model (" +
         want + ")");
  };
  auto check_int = [&](const std::string& flag, int got, int want) {
    if (cfg.explicit_flags.count(flag) && got != want)
      mismatch(flag, std::to_string(got), std::to_string(want));
  };
  check_int("embedding_dim", cfg.hp.embedding_dim, trained.embedding_dim);
  check_int("num_filters", cfg.hp.num_filters, trained.num_filters);
  check_int("hidden_layers", cfg.hp.hidden_layers, trained.hidden_layers);
  check_int("max_files", cfg.hp.shape.max_files, trained.shape.max_files);
  check_int("max_hunks", cfg.hp.shape.max_hunks, trained.shape.max_hunks);
  check_int("max_lines", cfg.hp.shape.max_lines, trained.shape.max_lines);
  check_int("max_words", cfg.hp.shape.max_words, trained.shape.max_words);
  check_int("msg_length", cfg.hp.shape.msg_length, trained.shape.msg_length);
  if (cfg.explicit_flags.count("data_type") &&
      cfg.hp.data_type != trained.data_type)
    mismatch("data_type", cfg.hp.data_type, trained.data_type);
  if (cfg.explicit_flags.count("filter_sizes") &&
      cfg.hp.filter_sizes != trained.filter_sizes)
    fail("--filter_sizes does not match the trained model");
}

inline std::string metric_row(const std::string& head,
                              const eval::Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-6s %8.6f %9.6f %8.6f %8.6f ",
                head.c_str(), m.accuracy, m.precision, m.recall, m.f1);
  std::string out = buf;
  if (m.auc) {
    std::snprintf(buf, sizeof(buf), "%8.6f", *m.auc);
    out += buf;
  } else {
    out += "     n/a";
  }
  return out;
}

inline void emit_kv(std::ostream& os, const std::string& prefix,
                    const eval::Metrics& m) {
  os << prefix << "_accuracy=" << util::format_double(m.accuracy) << "\n";
  os << prefix << "_precision=" << util::format_double(m.precision) << "\n";
  os << prefix << "_recall=" << util::format_double(m.recall) << "\n";
  os << prefix << "_f1=" << util::format_double(m.f1) << "\n";
  os << prefix << "_auc=" << (m.auc ? util::format_double(*m.auc) : "n/a")
     << "\n";
}

}  // namespace detail

inline int run(const CliConfig& cfg) {
  switch (cfg.mode) {
    case CliConfig::Mode::Getinfo: {
      corpus::PreprocessConfig pc;
      pc.callee_min_count = cfg.callee_min_count;
      if (cfg.max_changed_lines > 0)
        pc.max_changed_lines = cfg.max_changed_lines;
      else
        pc.max_changed_lines.reset();
      if (!cfg.rules_config.empty())
        pc.rules = csrc::load_annotation_rules(cfg.rules_config);

      const auto res =
          corpus::run_getinfo(cfg.git_path, cfg.commit_list, pc);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& e : res.errors)
        std::cerr << "error: " << e.sha << ": " << e.reason << "\n";
      const auto [data_path, dict_path] =
          corpus::write_patch_data(res.patches, res.dict, cfg.output_prefix);
      std::cerr << "wrote " << res.patches.size() << " patches to "
                << data_path << " (dictionary: " << dict_path << ", "
                << res.errors.size() << " commit errors)\n";
      return 0;
    }
    case CliConfig::Mode::Train: {
      train::train(cfg.data, cfg.hp, cfg.model_dir, cfg.opt, &std::cout);
      std::cerr << "model saved to " << cfg.model_dir << "\n";
      return 0;
    }
    case CliConfig::Mode::Predict: {
      const auto m = model::PatchNetModel::load(cfg.model_dir);
      detail::check_predict_flags(cfg, m.hp);
      const auto patches = corpus::read_patch_file(cfg.data);
      std::string out;
      for (const auto& [sha, score] : train::predict_patches(m, patches)) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", score);
        out += sha + "\t" + buf + "\n";
      }
      std::cout << out;
      if (!cfg.output_file.empty()) util::write_file(cfg.output_file, out);
      return 0;
    }
    case CliConfig::Mode::Cv: {
      const auto patches = corpus::read_patch_file(cfg.data);
      const auto cv = eval::kfold_cv(patches, cfg.cv_k, cfg.hp, cfg.opt);
      std::cout << "fold   accuracy precision   recall       f1      auc\n";
      for (std::size_t i = 0; i < cv.folds.size(); ++i)
        std::cout << detail::metric_row(std::to_string(i + 1), cv.folds[i])
                  << "\n";
      std::cout << detail::metric_row("mean", cv.mean) << "\n";
      for (std::size_t i = 0; i < cv.folds.size(); ++i)
        detail::emit_kv(std::cout, "fold" + std::to_string(i + 1),
                        cv.folds[i]);
      detail::emit_kv(std::cout, "mean", cv.mean);
      return 0;
    }
  }
  return 1;
}

// 0 success, 1 runtime failure, 2 usage error.
inline int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const auto parsed = parse_args(args);
    if (parsed.help_requested) {
      std::cout << parsed.help;
      return 0;
    }
    return run(parsed.config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << "run with --help for the full flag list\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace patchnet::cli
