#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/tensor.hpp"

namespace patchnet::nn {

// Reverse-mode tape over the operator set the model needs. Nodes are created
// in topological order; backward() visits them in reverse. A node may feed
// several consumers; their gradients accumulate.
//
// Construct with record=false for inference: values are computed but no
// gradient buffers or backward closures are kept.
class Tape {
public:
  using NodeId = std::uint32_t;

  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::vector<double>& grad(NodeId id) { return nodes_[id].grad; }

  double scalar(NodeId id) const {
    const Tensor& t = nodes_[id].value;
    if (t.size() != 1) fail("scalar() on non-scalar node");
    return t.values[0];
  }

  NodeId constant(Tensor t) { return push(std::move(t), {}); }

  NodeId zeros(std::size_t n) { return constant(Tensor({n})); }

  // Leaf bound to an external trainable tensor; backward adds into p.grad.
  NodeId param(Tensor& p) {
    if (!p.trainable()) fail("param leaf on non-trainable tensor");
    Tensor copy;
    copy.shape = p.shape;
    copy.values = p.values;
    Tensor* bound = &p;
    NodeId id = push(std::move(copy), [bound](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < g.size(); ++i) bound->grad[i] += g[i];
    });
    return id;
  }

  // Gather rows of a {V, d} table; output is {indices.size(), d}.
  NodeId embed_rows(NodeId table, std::vector<int> indices) {
    const Tensor& tab = nodes_[table].value;
    if (tab.rank() != 2) fail("embed_rows: table must be rank 2");
    const std::size_t v = tab.dim(0), d = tab.dim(1);
    Tensor out({indices.size(), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const int idx = indices[i];
      if (idx < 0 || static_cast<std::size_t>(idx) >= v)
        fail("embedding index " + std::to_string(idx) + " out of range (vocab " +
             std::to_string(v) + ")");
      const double* src = tab.values.data() + static_cast<std::size_t>(idx) * d;
      std::copy(src, src + d, out.values.begin() + i * d);
    }
    auto idx = std::move(indices);
    return push(std::move(out), [table, idx, d](Tape& t, NodeId self) {
      auto& tg = t.nodes_[table].grad;
      const auto& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* dst = tg.data() + static_cast<std::size_t>(idx[i]) * d;
        const double* src = g.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }

  // Valid 1-D convolution over the row axis with full-width filters and ReLU.
  // input {T, d}, filters {f, k, d}, bias {f} -> {T-k+1, f}
  NodeId conv1d_relu(NodeId input, NodeId filters, NodeId bias) {
    const Tensor& in = nodes_[input].value;
    const Tensor& w = nodes_[filters].value;
    const Tensor& b = nodes_[bias].value;
    if (in.rank() != 2 || w.rank() != 3) fail("conv1d_relu: bad ranks");
    const std::size_t tlen = in.dim(0), d = in.dim(1);
    const std::size_t f = w.dim(0), k = w.dim(1);
    if (w.dim(2) != d) fail("conv1d_relu: filter width mismatch");
    if (b.size() != f) fail("conv1d_relu: bias size mismatch");
    if (tlen < k) fail("conv1d_relu: sequence shorter than filter");
    const std::size_t tout = tlen - k + 1;
    Tensor out({tout, f});
    const double* iv = in.values.data();
    const double* wv = w.values.data();
    for (std::size_t t = 0; t < tout; ++t) {
      for (std::size_t j = 0; j < f; ++j) {
        double acc = b.values[j];
        const double* wj = wv + j * k * d;
        const double* it = iv + t * d;
        for (std::size_t a = 0; a < k * d; ++a) acc += it[a] * wj[a];
        out.values[t * f + j] = acc > 0.0 ? acc : 0.0;
      }
    }
    return push(std::move(out),
                [input, filters, bias, tout, f, k, d](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      const auto& ov = t.nodes_[self].value.values;
      const auto& iv = t.nodes_[input].value.values;
      const auto& wv = t.nodes_[filters].value.values;
      auto& ig = t.nodes_[input].grad;
      auto& wg = t.nodes_[filters].grad;
      auto& bg = t.nodes_[bias].grad;
      for (std::size_t tt = 0; tt < tout; ++tt) {
        for (std::size_t j = 0; j < f; ++j) {
          if (ov[tt * f + j] <= 0.0) continue;
          const double go = g[tt * f + j];
          if (go == 0.0) continue;
          bg[j] += go;
          const double* wj = wv.data() + j * k * d;
          const double* it = iv.data() + tt * d;
          double* wgj = wg.data() + j * k * d;
          double* igt = ig.data() + tt * d;
          for (std::size_t a = 0; a < k * d; ++a) {
            wgj[a] += go * it[a];
            igt[a] += go * wj[a];
          }
        }
      }
    });
  }

  // Column-wise max over rows; ties route gradient to the first occurrence.
  // input {T, f} -> {f}
  NodeId max_over_rows(NodeId input) {
    const Tensor& in = nodes_[input].value;
    if (in.rank() != 2) fail("max_over_rows: rank 2 input required");
    const std::size_t tlen = in.dim(0), f = in.dim(1);
    if (tlen == 0) fail("max_over_rows: empty input");
    Tensor out({f});
    std::vector<std::size_t> arg(f, 0);
    for (std::size_t j = 0; j < f; ++j) {
      double best = in.values[j];
      std::size_t bi = 0;
      for (std::size_t t = 1; t < tlen; ++t) {
        const double v = in.values[t * f + j];
        if (v > best) {
          best = v;
          bi = t;
        }
      }
      out.values[j] = best;
      arg[j] = bi;
    }
    return push(std::move(out), [input, arg, f](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      auto& ig = t.nodes_[input].grad;
      for (std::size_t j = 0; j < f; ++j) ig[arg[j] * f + j] += g[j];
    });
  }

  // Stack equal-length vectors as the rows of a matrix.
  NodeId stack_rows(const std::vector<NodeId>& rows) {
    if (rows.empty()) fail("stack_rows: no rows");
    const std::size_t m = nodes_[rows[0]].value.size();
    Tensor out({rows.size(), m});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor& t = nodes_[rows[r]].value;
      if (t.size() != m) fail("stack_rows: ragged rows");
      std::copy(t.values.begin(), t.values.end(), out.values.begin() + r * m);
    }
    auto parts = rows;
    return push(std::move(out), [parts, m](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      for (std::size_t r = 0; r < parts.size(); ++r) {
        auto& pg = t.nodes_[parts[r]].grad;
        const double* src = g.data() + r * m;
        for (std::size_t c = 0; c < m; ++c) pg[c] += src[c];
      }
    });
  }

  NodeId concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) fail("concat: no parts");
    std::size_t total = 0;
    for (NodeId p : parts) total += nodes_[p].value.size();
    Tensor out({total});
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& t = nodes_[p].value;
      std::copy(t.values.begin(), t.values.end(), out.values.begin() + off);
      off += t.size();
    }
    auto copy = parts;
    return push(std::move(out), [copy](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (NodeId p : copy) {
        auto& pg = t.nodes_[p].grad;
        for (std::size_t c = 0; c < pg.size(); ++c) pg[c] += g[off + c];
        off += pg.size();
      }
    });
  }

  // Elementwise max across equal-length vectors; first argmax wins ties.
  NodeId elemwise_max(const std::vector<NodeId>& parts) {
    if (parts.empty()) fail("elemwise_max: no parts");
    const std::size_t m = nodes_[parts[0]].value.size();
    Tensor out({m});
    std::vector<std::uint32_t> arg(m, 0);
    for (std::size_t c = 0; c < m; ++c) out.values[c] = nodes_[parts[0]].value.values[c];
    for (std::size_t p = 1; p < parts.size(); ++p) {
      const Tensor& t = nodes_[parts[p]].value;
      if (t.size() != m) fail("elemwise_max: ragged parts");
      for (std::size_t c = 0; c < m; ++c) {
        if (t.values[c] > out.values[c]) {
          out.values[c] = t.values[c];
          arg[c] = static_cast<std::uint32_t>(p);
        }
      }
    }
    auto copy = parts;
    return push(std::move(out), [copy, arg, m](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      for (std::size_t c = 0; c < m; ++c)
        t.nodes_[copy[arg[c]]].grad[c] += g[c];
    });
  }

  // x {n}, w {n, h}, b {h} -> {h}, optional ReLU
  NodeId affine(NodeId x, NodeId w, NodeId b, bool relu) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    const Tensor& bv = nodes_[b].value;
    if (wv.rank() != 2) fail("affine: weight must be rank 2");
    const std::size_t n = wv.dim(0), h = wv.dim(1);
    if (xv.size() != n) fail("affine: input size " + std::to_string(xv.size()) +
                             " != " + std::to_string(n));
    if (bv.size() != h) fail("affine: bias size mismatch");
    Tensor out({h});
    for (std::size_t j = 0; j < h; ++j) out.values[j] = bv.values[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = xv.values[i];
      if (xi == 0.0) continue;
      const double* wr = wv.values.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) out.values[j] += xi * wr[j];
    }
    if (relu)
      for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [x, w, b, n, h, relu](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      const auto& ov = t.nodes_[self].value.values;
      const auto& xv = t.nodes_[x].value.values;
      const auto& wv = t.nodes_[w].value.values;
      auto& xg = t.nodes_[x].grad;
      auto& wg = t.nodes_[w].grad;
      auto& bg = t.nodes_[b].grad;
      for (std::size_t j = 0; j < h; ++j) {
        if (relu && ov[j] <= 0.0) continue;
        const double go = g[j];
        if (go == 0.0) continue;
        bg[j] += go;
        for (std::size_t i = 0; i < n; ++i) {
          wg[i * h + j] += go * xv[i];
          xg[i] += go * wv[i * h + j];
        }
      }
    });
  }

  // Inverted dropout: keep with probability keep_prob and scale by
  // 1/keep_prob during training; identity otherwise.
  NodeId dropout(NodeId x, double keep_prob, Rng* rng, bool training) {
    if (!training || keep_prob >= 1.0) return x;
    if (keep_prob <= 0.0) fail("dropout: keep_prob must be in (0, 1]");
    const Tensor& xv = nodes_[x].value;
    std::vector<double> mask(xv.size());
    const double scale = 1.0 / keep_prob;
    for (auto& m : mask) m = rng->bernoulli(keep_prob) ? scale : 0.0;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= mask[i];
    return push(std::move(out), [x, mask](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      auto& xg = t.nodes_[x].grad;
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g[i] * mask[i];
    });
  }

  NodeId sigmoid(NodeId x) {
    Tensor out = nodes_[x].value;
    for (double& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(out), [x](Tape& t, NodeId self) {
      const auto& g = t.nodes_[self].grad;
      const auto& s = t.nodes_[self].value.values;
      auto& xg = t.nodes_[x].grad;
      for (std::size_t i = 0; i < xg.size(); ++i)
        xg[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  }

  static constexpr double kProbClamp = 1e-7;

  // Binary cross-entropy of a scalar probability against a 0/1 label.
  // The probability is clamped to [1e-7, 1-1e-7]; the clamp is flat, i.e.
  // no gradient flows when it binds.
  NodeId bce_loss(NodeId score, int label) {
    const Tensor& s = nodes_[score].value;
    if (s.size() != 1) fail("bce_loss: scalar score required");
    const double raw = s.values[0];
    const double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, raw));
    const double y = static_cast<double>(label);
    Tensor out({1});
    out.values[0] = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    const bool clamped = (raw != p);
    return push(std::move(out), [score, p, y, clamped](Tape& t, NodeId self) {
      if (clamped) return;
      const double g = t.nodes_[self].grad[0];
      t.nodes_[score].grad[0] += g * (-(y / p) + (1.0 - y) / (1.0 - p));
    });
  }

  // Seeds the (scalar) root and accumulates gradients down the tape,
  // flushing parameter-leaf gradients into their bound tensors.
  void backward(NodeId root, double seed = 1.0) {
    if (!record_) fail("backward() on a non-recording tape");
    if (nodes_[root].value.size() != 1) fail("backward: scalar root required");
    nodes_[root].grad[0] = seed;
    for (std::uint32_t i = root + 1; i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Tensor value, std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.value = std::move(value);
    if (record_) {
      n.grad.assign(n.value.size(), 0.0);
      n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  bool record_;
  std::vector<Node> nodes_;
};

inline double bce_value(double score, int label) {
  const double p = std::min(1.0 - Tape::kProbClamp,
                            std::max(Tape::kProbClamp, score));
  const double y = static_cast<double>(label);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace patchnet::nn
