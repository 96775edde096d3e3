#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "patchnet/adam.hpp"
#include "patchnet/autodiff.hpp"
#include "patchnet/params.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/util.hpp"

using namespace patchnet;
using nn::Tape;
using nn::Tensor;

namespace {

Tensor make_tensor(std::vector<std::size_t> shape, std::vector<double> vals,
                   bool trainable = false) {
  Tensor t(std::move(shape), trainable);
  REQUIRE(t.size() == vals.size());
  t.values = std::move(vals);
  return t;
}

}  // namespace

TEST_CASE("embed_rows gathers table rows") {
  Tape tape;
  // identity table: one-hot rows
  Tensor table = make_tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, true);
  auto tab = tape.param(table);
  auto out = tape.embed_rows(tab, {2});
  REQUIRE(tape.value(out).values == std::vector<double>{0, 0, 1});
}

TEST_CASE("embed_rows accumulates gradients on repeated indices") {
  Tape tape;
  Tensor table = make_tensor({2, 1}, {0.5, -0.25}, true);
  auto tab = tape.param(table);
  auto rows = tape.embed_rows(tab, {1, 1});
  // sum the two looked-up scalars so each gets unit gradient
  auto w = tape.constant(make_tensor({2, 1}, {1, 1}));
  auto b = tape.constant(Tensor({1}));
  auto s = tape.affine(rows, w, b, false);
  // rows is {2,1}; affine expects a flat vector of length 2 -- sizes align
  tape.backward(s);
  REQUIRE(table.grad[1] == 2.0);
  REQUIRE(table.grad[0] == 0.0);
}

TEST_CASE("embed_rows rejects out-of-range indices") {
  Tape tape;
  Tensor table = make_tensor({2, 1}, {0, 0}, true);
  auto tab = tape.param(table);
  REQUIRE_THROWS_AS(tape.embed_rows(tab, {2}), Error);
}

TEST_CASE("conv1d_relu zero input zero bias gives zero output") {
  Tape tape;
  auto in = tape.constant(Tensor({4, 2}));
  auto w = tape.constant(make_tensor({1, 2, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor({1}));
  auto out = tape.conv1d_relu(in, w, b);
  for (double v : tape.value(out).values) REQUIRE(v == 0.0);
}

TEST_CASE("conv1d_relu hand-computed 1x1 case") {
  // T=2, d=1, k=1, f=1, filter=2, bias=0, input [1,-3] -> ReLU([2,-6]) = [2,0]
  Tape tape;
  auto in = tape.constant(make_tensor({2, 1}, {1, -3}));
  auto w = tape.constant(make_tensor({1, 1, 1}, {2}));
  auto b = tape.constant(Tensor({1}));
  auto out = tape.conv1d_relu(in, w, b);
  REQUIRE(tape.value(out).values == std::vector<double>{2, 0});
}

TEST_CASE("conv1d_relu dead unit under dominating negative bias") {
  // inputs bounded in [0,1], weight 1, bias -5: every pre-activation <= -4
  Tape tape;
  Rng rng(7);
  std::vector<double> vals(6);
  for (auto& v : vals) v = rng.uniform();
  auto in = tape.constant(make_tensor({6, 1}, vals));
  auto w = tape.constant(make_tensor({1, 1, 1}, {1}));
  auto b = tape.constant(make_tensor({1}, {-5}));
  auto out = tape.conv1d_relu(in, w, b);
  for (double v : tape.value(out).values) REQUIRE(v == 0.0);
}

TEST_CASE("max_over_rows basic and tie gradient") {
  Tape tape;
  auto in = tape.constant(make_tensor({3, 1}, {1, 3, 2}));
  auto out = tape.max_over_rows(in);
  REQUIRE(tape.value(out).values == std::vector<double>{3});

  Tensor tied = make_tensor({2, 1}, {2, 2}, true);
  Tape t2;
  auto p = t2.param(tied);
  auto m = t2.max_over_rows(p);
  t2.backward(m);
  REQUIRE(tied.grad == std::vector<double>{1, 0});
}

TEST_CASE("max_over_rows equals brute-force column max") {
  Rng rng(123);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> vals(5 * 3);
    for (auto& v : vals) v = rng.uniform(-2, 2);
    Tape tape;
    auto in = tape.constant(make_tensor({5, 3}, vals));
    auto out = tape.max_over_rows(in);
    for (std::size_t j = 0; j < 3; ++j) {
      double best = vals[j];
      for (std::size_t t = 1; t < 5; ++t) best = std::max(best, vals[t * 3 + j]);
      REQUIRE(tape.value(out).values[j] == best);
    }
  }
}

TEST_CASE("conv1d_relu output is non-negative elementwise") {
  Rng rng(202);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t tlen = 2 + rng.index(6), d = 1 + rng.index(3);
    const std::size_t f = 1 + rng.index(3), k = 1 + rng.index(tlen);
    auto fill = [&](std::size_t n) {
      std::vector<double> v(n);
      for (auto& x : v) x = rng.uniform(-2, 2);
      return v;
    };
    Tape tape;
    auto in = tape.constant(make_tensor({tlen, d}, fill(tlen * d)));
    auto w = tape.constant(make_tensor({f, k, d}, fill(f * k * d)));
    auto b = tape.constant(make_tensor({f}, fill(f)));
    auto out = tape.conv1d_relu(in, w, b);
    for (double v : tape.value(out).values) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("affine identity and hand matvec") {
  {
    Tape tape;
    auto x = tape.constant(make_tensor({2}, {3, -4}));
    auto w = tape.constant(make_tensor({2, 2}, {1, 0, 0, 1}));
    auto b = tape.constant(Tensor({2}));
    auto out = tape.affine(x, w, b, false);
    REQUIRE(tape.value(out).values == std::vector<double>{3, -4});
  }
  {
    Tape tape;
    auto x = tape.constant(make_tensor({2}, {1, 2}));
    auto w = tape.constant(make_tensor({2, 1}, {1, 1}));
    auto b = tape.constant(make_tensor({1}, {0.5}));
    auto out = tape.affine(x, w, b, false);
    REQUIRE(tape.value(out).values == std::vector<double>{3.5});
  }
}

TEST_CASE("affine weight gradient matches finite differences") {
  Rng rng(99);
  Tensor w({3, 4}, true);
  for (auto& v : w.values) v = rng.uniform(-1, 1);
  std::vector<double> xv(3), gv(4);
  for (auto& v : xv) v = rng.uniform(-1, 1);
  for (auto& v : gv) v = rng.uniform(-1, 1);

  // scalar objective: dot(out, gv)
  auto objective = [&]() {
    Tape tape;
    auto x = tape.constant(make_tensor({3}, xv));
    auto wp = tape.param(w);
    auto b = tape.constant(Tensor({4}));
    auto out = tape.affine(x, wp, b, false);
    auto gw = tape.constant(make_tensor({4, 1}, gv));
    auto bb = tape.constant(Tensor({1}));
    auto s = tape.affine(out, gw, bb, false);
    return std::pair{tape, s};
  };

  {
    auto [tape, s] = objective();
    w.zero_grad();
    tape.backward(s);
  }
  const auto analytic = w.grad;

  const double h = 1e-6;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double keep = w.values[i];
    w.values[i] = keep + h;
    auto [tp, sp] = objective();
    const double fp = tp.scalar(sp);
    w.values[i] = keep - h;
    auto [tm, sm] = objective();
    const double fm = tm.scalar(sm);
    w.values[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    REQUIRE_THAT(analytic[i], Catch::Matchers::WithinRel(fd, 1e-6) ||
                                  Catch::Matchers::WithinAbs(fd, 1e-9));
  }
}

TEST_CASE("dropout identity cases") {
  Tape tape;
  Rng rng(5);
  auto x = tape.constant(make_tensor({4}, {1, 2, 3, 4}));
  REQUIRE(tape.dropout(x, 1.0, &rng, true) == x);
  REQUIRE(tape.dropout(x, 0.5, &rng, false) == x);
}

TEST_CASE("dropout empirical keep rate near keep_prob") {
  const std::size_t n = 100000;
  Tape tape;
  Rng rng(2024);
  auto x = tape.constant(make_tensor({n}, std::vector<double>(n, 1.0)));
  auto out = tape.dropout(x, 0.5, &rng, true);
  std::size_t kept = 0;
  for (double v : tape.value(out).values) {
    if (v != 0.0) {
      REQUIRE(v == 2.0);  // inverted scaling
      ++kept;
    }
  }
  const double rate = static_cast<double>(kept) / n;
  REQUIRE(rate > 0.49);
  REQUIRE(rate < 0.51);
}

TEST_CASE("bce loss values") {
  REQUIRE_THAT(nn::bce_value(0.5, 1), Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  // clamp boundary: p=1 clamps to 1-1e-7
  REQUIRE_THAT(nn::bce_value(1.0, 1), Catch::Matchers::WithinAbs(0.0, 1e-6));
  REQUIRE(nn::bce_value(0.0, 1) > 10.0);
}

TEST_CASE("l2 penalty over weight matrices only") {
  nn::ParamStore params;
  params.add("fc/W", {1, 1}).values = {2.0};
  params.add("fc/b", {1}).values = {3.0};
  params.add("msg/embedding", {1, 1}).values = {5.0};
  REQUIRE(nn::l2_penalty(params, 1.0) == 4.0);
  REQUIRE(nn::l2_penalty(params, 0.5) == 2.0);

  params.zero_grads();
  nn::add_l2_gradients(params, 0.5);
  REQUIRE(params.at("fc/W").grad[0] == 2.0);  // 2*lambda*w
  REQUIRE(params.at("fc/b").grad[0] == 0.0);
  REQUIRE(params.at("msg/embedding").grad[0] == 0.0);
}

TEST_CASE("backward through composite relu chain") {
  // f(x) = relu(x) * 2 at x=3 -> df/dx = 2
  Tensor x({1}, true);
  x.values = {3.0};
  Tape tape;
  auto xp = tape.param(x);
  auto w1 = tape.constant(make_tensor({1, 1}, {1}));
  auto b1 = tape.constant(Tensor({1}));
  auto r = tape.affine(xp, w1, b1, true);
  auto w2 = tape.constant(make_tensor({1, 1}, {2}));
  auto s = tape.affine(r, w2, b1, false);
  tape.backward(s);
  REQUIRE(x.grad[0] == 2.0);
  REQUIRE(tape.scalar(s) == 6.0);
}

TEST_CASE("disconnected parameter receives zero gradient") {
  Tensor used({1}, true), unused({1}, true);
  used.values = {1.0};
  unused.values = {1.0};
  Tape tape;
  auto up = tape.param(used);
  (void)tape.param(unused);
  auto w = tape.constant(make_tensor({1, 1}, {3}));
  auto b = tape.constant(Tensor({1}));
  auto s = tape.affine(up, w, b, false);
  tape.backward(s);
  REQUIRE(used.grad[0] == 3.0);
  REQUIRE(unused.grad[0] == 0.0);
}

TEST_CASE("sigmoid of zero is one half") {
  Tape tape;
  auto x = tape.constant(Tensor({1}));
  auto s = tape.sigmoid(x);
  REQUIRE(tape.scalar(s) == 0.5);
}

TEST_CASE("adam leaves parameters unchanged with zero gradients") {
  nn::ParamStore params;
  auto& p = params.add("fc/W", {2});
  p.values = {1.5, -2.5};
  params.zero_grads();
  nn::AdamState adam(1e-4);
  adam.step(params);
  REQUIRE(p.values == std::vector<double>{1.5, -2.5});
}

TEST_CASE("adam first step with unit gradient") {
  nn::ParamStore params;
  auto& p = params.add("fc/W", {1});
  p.values = {0.0};
  p.grad = {1.0};
  nn::AdamState adam(1e-4);
  adam.step(params);
  // mhat = vhat = 1 on the first step: delta = -alpha / (1 + eps)
  const double expected = -1e-4 / (1.0 + 1e-8);
  REQUIRE_THAT(p.values[0], Catch::Matchers::WithinAbs(expected, 1e-18));
}

TEST_CASE("adam two steps match a scalar hand-rolled implementation") {
  const double alpha = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.7;
  nn::ParamStore params;
  auto& p = params.add("x", {1});
  p.values = {0.3};
  nn::AdamState adam(alpha, b1, b2, eps);

  double theta = 0.3, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    p.grad[0] = g;
    adam.step(params);

    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= alpha * mhat / (std::sqrt(vhat) + eps);
    REQUIRE_THAT(p.values[0], Catch::Matchers::WithinAbs(theta, 1e-12));
  }
}

TEST_CASE("gradient clipping rescales to the requested norm") {
  nn::ParamStore params;
  auto& p = params.add("x", {2});
  p.values = {0, 0};
  p.grad = {3.0, 4.0};  // norm 5
  nn::clip_gradients(params, 1.0);
  REQUIRE_THAT(p.grad[0], Catch::Matchers::WithinAbs(0.6, 1e-12));
  REQUIRE_THAT(p.grad[1], Catch::Matchers::WithinAbs(0.8, 1e-12));
  // below the bound: untouched
  nn::clip_gradients(params, 10.0);
  REQUIRE_THAT(p.grad[1], Catch::Matchers::WithinAbs(0.8, 1e-12));
}

TEST_CASE("parameter serialization round-trips") {
  namespace fs = std::filesystem;
  nn::ParamStore params;
  Rng rng(31);
  auto& a = params.add("code/embedding", {4, 3});
  for (auto& v : a.values) v = rng.uniform(-1, 1);
  auto& b = params.add("fc/W", {3, 2});
  for (auto& v : b.values) v = rng.uniform(-1, 1);
  params.add("fc/b", {2}).values = {1e-300, -0.0};

  const auto path = (fs::temp_directory_path() / "pn_params_test.bin").string();
  nn::save_params(params, path);
  auto loaded = nn::load_params(path);
  REQUIRE(loaded.size() == 3);
  REQUIRE(loaded.at("code/embedding").shape == std::vector<std::size_t>{4, 3});
  REQUIRE(loaded.at("code/embedding").values == a.values);
  REQUIRE(loaded.at("fc/W").values == b.values);
  REQUIRE(loaded.at("fc/b").values == params.at("fc/b").values);

  // truncated file is rejected with the file named
  auto data = util::read_file(path);
  util::write_file(path, data.substr(0, data.size() / 2));
  try {
    nn::load_params(path);
    FAIL("expected error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find(path) != std::string::npos);
  }
  fs::remove(path);
}
