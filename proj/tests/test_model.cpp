#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "patchnet/model.hpp"
#include "support/gradcheck.hpp"
#include "support/synth.hpp"

using namespace patchnet;
using model::Hyperparameters;
using model::PatchNetModel;

namespace fs = std::filesystem;

namespace {

encode::Dictionary vocab_of_size(std::size_t msg_n, std::size_t code_n) {
  encode::Dictionary dict;
  for (std::size_t i = 2; i < msg_n; ++i) {
    const std::string tok = "m" + std::to_string(i);
    dict.msg_vocab.emplace(tok, static_cast<int>(dict.msg_tokens.size()));
    dict.msg_tokens.push_back(tok);
  }
  for (std::size_t i = 2; i < code_n; ++i) {
    const std::string tok = "c" + std::to_string(i);
    dict.code_vocab.emplace(tok, static_cast<int>(dict.code_tokens.size()));
    dict.code_tokens.push_back(tok);
  }
  return dict;
}

Hyperparameters tiny_hp() {
  Hyperparameters hp;
  hp.embedding_dim = 4;
  hp.filter_sizes = {1, 2};
  hp.num_filters = 2;
  hp.hidden_layers = 3;
  hp.dropout_keep_prob = 1.0;
  hp.l2_reg_lambda = 1e-2;
  hp.shape = {2, 2, 2, 3, 4};  // F, H, N, L, M
  return hp;
}

encode::EncodedInput zero_input(const Hyperparameters& hp) {
  encode::EncodedInput in;
  in.id = std::string(40, 'e');
  in.msg.assign(static_cast<std::size_t>(hp.shape.msg_length), 0);
  in.code.assign(hp.shape.code_size(), 0);
  return in;
}

}  // namespace

TEST_CASE("message embedding hand trace on a one-dimensional config") {
  Hyperparameters hp;
  hp.data_type = "msg";
  hp.embedding_dim = 1;
  hp.filter_sizes = {1};
  hp.num_filters = 1;
  hp.hidden_layers = 1;
  hp.dropout_keep_prob = 1.0;
  hp.shape = {1, 1, 1, 1, 4};
  Rng rng(1);
  auto m = PatchNetModel::init(hp, vocab_of_size(2, 2), rng);
  // table rows [0; 1], filter weight 1, bias 0
  m.params.at("msg/embedding").values = {0.0, 1.0};
  m.params.at("msg/conv/k1/W").values = {1.0};
  m.params.at("msg/conv/k1/b").values = {0.0};

  auto in = zero_input(hp);
  in.msg = {1, 1, 0, 0};
  auto fw = m.forward(in, nullptr, false, nullptr, false);
  REQUIRE(fw.tape.value(fw.em_node).values == std::vector<double>{1.0});
}

TEST_CASE("all-pad message yields a zero message embedding at init") {
  auto hp = tiny_hp();
  Rng rng(7);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  auto fw = m.forward(zero_input(hp), nullptr, false, nullptr, false);
  for (double v : fw.tape.value(fw.em_node).values) REQUIRE(v == 0.0);
  // and the code side too: pad embedding row and biases start at zero
  for (double v : fw.tape.value(fw.ec_node).values) REQUIRE(v == 0.0);
}

TEST_CASE("shape laws hold across random configurations") {
  Rng rng(42);
  for (int rep = 0; rep < 30; ++rep) {
    Hyperparameters hp;
    hp.embedding_dim = 1 + static_cast<int>(rng.index(4));
    hp.num_filters = 1 + static_cast<int>(rng.index(3));
    hp.filter_sizes.clear();
    const std::size_t n_sizes = 1 + rng.index(2);
    for (std::size_t i = 0; i < n_sizes; ++i)
      hp.filter_sizes.push_back(1 + static_cast<int>(i));
    hp.hidden_layers = 1 + static_cast<int>(rng.index(4));
    hp.dropout_keep_prob = 1.0;
    hp.extra_dim = static_cast<int>(rng.index(3));
    const int max_k = static_cast<int>(n_sizes);
    hp.shape = {1 + static_cast<int>(rng.index(3)),
                1 + static_cast<int>(rng.index(3)),
                max_k + static_cast<int>(rng.index(2)),
                max_k + static_cast<int>(rng.index(3)),
                max_k + static_cast<int>(rng.index(4))};
    Rng init_rng(rep);
    auto m = PatchNetModel::init(hp, vocab_of_size(5, 5), init_rng);
    auto ex = testsupport::random_encoded(hp, 5, 5, init_rng);
    std::vector<double> extra(static_cast<std::size_t>(hp.extra_dim), 0.25);
    auto fw = m.forward(ex.input, hp.extra_dim ? &extra : nullptr, false,
                        nullptr, false);
    const std::size_t width = hp.filter_sizes.size() *
                              static_cast<std::size_t>(hp.num_filters);
    REQUIRE(fw.trace.em_len == width);
    REQUIRE(fw.trace.ef_len == 2 * width);
    REQUIRE(fw.trace.ec_len ==
            static_cast<std::size_t>(hp.shape.max_files) * 2 * width);
    REQUIRE(fw.trace.e_len == fw.trace.em_len + fw.trace.ec_len +
                                  static_cast<std::size_t>(hp.extra_dim));
  }
}

TEST_CASE("degenerate hierarchy reduces to the message path") {
  // H=N=L=1 with identity hunk stage: polarity embedding == message
  // embedding of the same single token under shared weights
  Hyperparameters hp;
  hp.embedding_dim = 3;
  hp.filter_sizes = {1};
  hp.num_filters = 2;
  hp.hidden_layers = 2;
  hp.dropout_keep_prob = 1.0;
  hp.shape = {1, 1, 1, 1, 1};
  Rng rng(17);
  auto m = PatchNetModel::init(hp, vocab_of_size(5, 5), rng);
  // share embeddings and line filters with the message module
  m.params.at("code/embedding").values = m.params.at("msg/embedding").values;
  m.params.at("code/removed/line/k1/W").values =
      m.params.at("msg/conv/k1/W").values;
  m.params.at("code/removed/line/k1/b").values =
      m.params.at("msg/conv/k1/b").values;
  // identity hunk stage: one 1x1 filter per output with weight 1, bias 0
  auto& hw = m.params.at("code/removed/hunk/k1/W");  // {2, 1, 2}
  hw.values = {1, 0, 0, 1};
  m.params.at("code/removed/hunk/k1/b").values = {0, 0};

  auto in = zero_input(hp);
  in.msg = {3};
  in.code[encode::code_offset(hp.shape, 0, 0, 0, 0, 0)] = 3;
  auto fw = m.forward(in, nullptr, false, nullptr, false);
  const auto& em = fw.tape.value(fw.em_node).values;
  const auto& ef = fw.tape.value(fw.ef_nodes[0]).values;
  // e_f = concat(e_r, e_a): the removed half must equal e_m
  REQUIRE(ef.size() == 2 * em.size());
  for (std::size_t i = 0; i < em.size(); ++i)
    REQUIRE_THAT(ef[i], Catch::Matchers::WithinAbs(em[i], 1e-12));
}

TEST_CASE("hunk order is irrelevant but line order matters") {
  auto hp = tiny_hp();
  Rng rng(23);
  auto m = PatchNetModel::init(hp, vocab_of_size(8, 8), rng);

  auto in = zero_input(hp);
  // two distinct hunks on file 0, removed polarity
  for (int w = 0; w < 3; ++w) {
    in.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)] = 2 + w;
    in.code[encode::code_offset(hp.shape, 0, 0, 1, 0, w)] = 5 + w;
    in.code[encode::code_offset(hp.shape, 0, 0, 0, 1, w)] = 4;
    in.code[encode::code_offset(hp.shape, 0, 0, 1, 1, w)] = 6;
  }
  auto swapped = in;
  for (int n = 0; n < hp.shape.max_lines; ++n)
    for (int w = 0; w < hp.shape.max_words; ++w)
      std::swap(swapped.code[encode::code_offset(hp.shape, 0, 0, 0, n, w)],
                swapped.code[encode::code_offset(hp.shape, 0, 0, 1, n, w)]);
  REQUIRE_THAT(m.classify(swapped),
               Catch::Matchers::WithinAbs(m.classify(in), 1e-12));

  // swapping the two lines inside hunk 0 changes the hunk-level convolution
  auto lines_swapped = in;
  for (int w = 0; w < hp.shape.max_words; ++w)
    std::swap(
        lines_swapped.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)],
        lines_swapped.code[encode::code_offset(hp.shape, 0, 0, 0, 1, w)]);
  REQUIRE(m.classify(lines_swapped) != m.classify(in));
}

TEST_CASE("file embeddings are independent per polarity and ordered by file") {
  auto hp = tiny_hp();
  Rng rng(29);
  auto m = PatchNetModel::init(hp, vocab_of_size(8, 8), rng);

  auto removed_only = zero_input(hp);
  auto added_only = zero_input(hp);
  auto both = zero_input(hp);
  for (int w = 0; w < 3; ++w) {
    removed_only.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)] = 2 + w;
    both.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)] = 2 + w;
    added_only.code[encode::code_offset(hp.shape, 0, 1, 0, 0, w)] = 5 + w;
    both.code[encode::code_offset(hp.shape, 0, 1, 0, 0, w)] = 5 + w;
  }
  auto fw_r = m.forward(removed_only.id.empty() ? removed_only : removed_only,
                        nullptr, false, nullptr, false);
  auto fw_a = m.forward(added_only, nullptr, false, nullptr, false);
  auto fw_b = m.forward(both, nullptr, false, nullptr, false);
  const auto& efr = fw_r.tape.value(fw_r.ef_nodes[0]).values;
  const auto& efa = fw_a.tape.value(fw_a.ef_nodes[0]).values;
  const auto& efb = fw_b.tape.value(fw_b.ef_nodes[0]).values;
  const std::size_t half = efb.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    REQUIRE(efb[i] == efr[i]);                // removed half from removed plane
    REQUIRE(efb[half + i] == efa[half + i]);  // added half from added plane
  }

  // swapping two files swaps the e_c blocks
  auto two_files = zero_input(hp);
  for (int w = 0; w < 3; ++w) {
    two_files.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)] = 2 + w;
    two_files.code[encode::code_offset(hp.shape, 1, 1, 0, 0, w)] = 5 + w;
  }
  auto swapped = zero_input(hp);
  for (int w = 0; w < 3; ++w) {
    swapped.code[encode::code_offset(hp.shape, 1, 0, 0, 0, w)] = 2 + w;
    swapped.code[encode::code_offset(hp.shape, 0, 1, 0, 0, w)] = 5 + w;
  }
  auto fw1 = m.forward(two_files, nullptr, false, nullptr, false);
  auto fw2 = m.forward(swapped, nullptr, false, nullptr, false);
  const auto& ec1 = fw1.tape.value(fw1.ec_node).values;
  const auto& ec2 = fw2.tape.value(fw2.ec_node).values;
  const std::size_t block = ec1.size() / 2;
  for (std::size_t i = 0; i < block; ++i) {
    REQUIRE(ec1[i] == ec2[block + i]);
    REQUIRE(ec1[block + i] == ec2[i]);
  }
}

TEST_CASE("zero output weights give a score of exactly one half") {
  auto hp = tiny_hp();
  Rng rng(31);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  for (auto& v : m.params.at("out/W").values) v = 0.0;
  m.params.at("out/b").values = {0.0};
  auto ex = testsupport::random_encoded(hp, 6, 6, rng);
  REQUIRE(m.classify(ex.input) == 0.5);
}

TEST_CASE("scores are strictly inside the unit interval") {
  auto hp = tiny_hp();
  Rng rng(37);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto ex = testsupport::random_encoded(hp, 6, 6, rng);
    const double s = m.classify(ex.input);
    REQUIRE(s > 0.0);
    REQUIRE(s < 1.0);
  }
}

TEST_CASE("ablation gating is exact") {
  auto hp = tiny_hp();
  hp.data_type = "msg";
  Rng rng(41);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  auto ex = testsupport::random_encoded(hp, 6, 6, rng);
  const double base = m.classify(ex.input);
  for (int rep = 0; rep < 10; ++rep) {
    auto perturbed = ex.input;
    for (auto& v : perturbed.code) v = static_cast<int>(rng.index(6));
    REQUIRE(m.classify(perturbed) == base);
  }

  hp.data_type = "code";
  Rng rng2(41);
  auto mc = PatchNetModel::init(hp, vocab_of_size(6, 6), rng2);
  const double base_c = mc.classify(ex.input);
  for (int rep = 0; rep < 10; ++rep) {
    auto perturbed = ex.input;
    for (auto& v : perturbed.msg) v = static_cast<int>(rng.index(6));
    REQUIRE(mc.classify(perturbed) == base_c);
  }
}

TEST_CASE("pad neutrality: extra all-pad content changes nothing at init") {
  // pad embedding rows and biases are zero at init, so an extra pad line,
  // hunk or file slot contributes nothing
  auto hp = tiny_hp();
  Rng rng(43);
  auto m = PatchNetModel::init(hp, vocab_of_size(8, 8), rng);

  auto sparse = zero_input(hp);
  for (int w = 0; w < 3; ++w)
    sparse.code[encode::code_offset(hp.shape, 0, 0, 0, 0, w)] = 2 + w;
  auto fw = m.forward(sparse, nullptr, false, nullptr, false);

  // same content under larger bounds: previously valid positions unchanged
  auto hp_big = hp;
  hp_big.shape.max_files = 3;
  hp_big.shape.max_hunks = 3;
  hp_big.shape.max_lines = 4;
  Rng rng_big(43);
  auto m_big = PatchNetModel::init(hp_big, vocab_of_size(8, 8), rng_big);
  // copy the shared parameters (same init order gives identical values for
  // matching names except fc/W whose shape depends on F)
  for (auto& [name, t] : m.params)
    if (name != "fc/W" && name != "fc/b" && name != "out/W" && name != "out/b")
      m_big.params.at(name).values = t.values;

  auto sparse_big = zero_input(hp_big);
  for (int w = 0; w < 3; ++w)
    sparse_big.code[encode::code_offset(hp_big.shape, 0, 0, 0, 0, w)] = 2 + w;
  auto fw_big = m_big.forward(sparse_big, nullptr, false, nullptr, false);

  const auto& em = fw.tape.value(fw.em_node).values;
  const auto& em_big = fw_big.tape.value(fw_big.em_node).values;
  REQUIRE(em == em_big);
  const auto& ef = fw.tape.value(fw.ef_nodes[0]).values;
  const auto& ef_big = fw_big.tape.value(fw_big.ef_nodes[0]).values;
  REQUIRE(ef == ef_big);
}

TEST_CASE("extra information vector is concatenated and validated") {
  auto hp = tiny_hp();
  hp.extra_dim = 3;
  Rng rng(47);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  auto ex = testsupport::random_encoded(hp, 6, 6, rng);
  std::vector<double> extra = {0.1, -0.2, 0.3};
  const double s = m.classify(ex.input, &extra);
  REQUIRE(s > 0.0);
  REQUIRE(s < 1.0);

  std::vector<double> wrong = {0.1};
  REQUIRE_THROWS_AS(m.classify(ex.input, &wrong), Error);
  REQUIRE_THROWS_AS(m.classify(ex.input, nullptr), Error);

  // a model without the hook rejects any extra vector
  auto hp0 = tiny_hp();
  Rng rng0(47);
  auto m0 = PatchNetModel::init(hp0, vocab_of_size(6, 6), rng0);
  REQUIRE_THROWS_AS(m0.classify(ex.input, &extra), Error);
}

TEST_CASE("smoke gradient check on a small configuration") {
  Hyperparameters hp;
  hp.embedding_dim = 2;
  hp.filter_sizes = {1, 2};
  hp.num_filters = 1;
  hp.hidden_layers = 2;
  hp.dropout_keep_prob = 1.0;
  hp.l2_reg_lambda = 1e-2;
  hp.shape = {2, 2, 2, 3, 3};
  Rng rng(53);
  auto m = PatchNetModel::init(hp, vocab_of_size(5, 5), rng);
  testsupport::randomize_params(m, rng);
  auto ex = testsupport::random_encoded(hp, 5, 5, rng);
  const auto res = testsupport::gradient_check(m, ex);
  INFO("worst: " << res.worst_param << " err " << res.worst_abs_err);
  REQUIRE(res.checked > 50);
  REQUIRE(res.failures == 0);
}

TEST_CASE("save and load reproduce scores bit for bit") {
  auto hp = tiny_hp();
  Rng rng(59);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  const auto dir = (fs::temp_directory_path() / "pn_model_dir").string();
  fs::remove_all(dir);
  m.save(dir);

  // exactly the three model files
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    (void)e;
    ++count;
  }
  REQUIRE(count == 3);

  auto loaded = PatchNetModel::load(dir);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ex = testsupport::random_encoded(hp, 6, 6, rng);
    REQUIRE(loaded.classify(ex.input) == m.classify(ex.input));
  }
  fs::remove_all(dir);
}

TEST_CASE("corrupt model directories are rejected with the file named") {
  auto hp = tiny_hp();
  Rng rng(61);
  auto m = PatchNetModel::init(hp, vocab_of_size(6, 6), rng);
  const auto dir = (fs::temp_directory_path() / "pn_model_bad").string();

  // truncated params.bin
  fs::remove_all(dir);
  m.save(dir);
  const auto params_path = (fs::path(dir) / "params.bin").string();
  auto data = util::read_file(params_path);
  util::write_file(params_path, data.substr(0, data.size() / 3));
  try {
    PatchNetModel::load(dir);
    FAIL("expected load error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("params.bin") != std::string::npos);
  }

  // config disagreeing with the stored tensor shapes
  fs::remove_all(dir);
  m.save(dir);
  const auto config_path = (fs::path(dir) / "config.txt").string();
  auto config = util::read_file(config_path);
  const auto pos = config.find("embedding_dim=4");
  REQUIRE(pos != std::string::npos);
  config.replace(pos, 15, "embedding_dim=8");
  util::write_file(config_path, config);
  try {
    PatchNetModel::load(dir);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }

  // missing file
  fs::remove((fs::path(dir) / "dict.txt").string());
  try {
    PatchNetModel::load(dir);
    FAIL("expected missing file error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("dict.txt") != std::string::npos);
  }
  fs::remove_all(dir);
}
