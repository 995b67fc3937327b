#include "headkd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "headkd/error.hpp"

namespace headkd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

std::size_t last_dim(const Var& x) { return x.shape().back(); }

Shape leading_shape(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() < 2 || b.value().rank() != 2 || a.shape().back() != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t k = b.shape()[0];
  const std::size_t n = b.shape()[1];
  const std::size_t m = a.value().numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MatMap(out.data().data(), m, n).noalias() =
      ConstMatMap(a.value().data().data(), m, k) * ConstMatMap(b.value().data().data(), k, n);
  return Var::make(std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMatMap g(self.grad.data().data(), m, n);
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      MatMap(pa.grad_buffer().data().data(), m, k).noalias() +=
          g * ConstMatMap(pb.value.data().data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MatMap(pb.grad_buffer().data().data(), k, n).noalias() +=
          ConstMatMap(pa.value.data().data(), m, k).transpose() * g;
    }
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  if (a.value().rank() < 2 || b.value().rank() != 2 || a.shape().back() != b.shape()[1]) {
    throw DimensionError("matmul_bt: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t k = b.shape()[1];
  const std::size_t n = b.shape()[0];
  const std::size_t m = a.value().numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MatMap(out.data().data(), m, n).noalias() =
      ConstMatMap(a.value().data().data(), m, k) * ConstMatMap(b.value().data().data(), n, k).transpose();
  return Var::make(std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMatMap g(self.grad.data().data(), m, n);
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      MatMap(pa.grad_buffer().data().data(), m, k).noalias() += g * ConstMatMap(pb.value.data().data(), n, k);
    }
    if (pb.requires_grad) {
      MatMap(pb.grad_buffer().data().data(), n, k).noalias() +=
          g.transpose() * ConstMatMap(pa.value.data().data(), m, k);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& n = parent(self, p);
      if (!n.requires_grad) continue;
      auto& g = n.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return Var::make(std::move(out), {x}, [factor](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * factor;
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t n = last_dim(x);
  if (bias.value().rank() != 1 || bias.shape()[0] != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.numel() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.value()[j];
  return Var::make(std::move(out), {x, bias}, [rows, n](Node& self) {
    Node& px = parent(self, 0);
    Node& pb = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return Var::make(std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (px.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Var::make(Tensor::scalar(s), {x}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    const double up = self.grad[0];
    for (auto& v : g.data()) v += up;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var weighted_sum(const Var& x, const Tensor& weights) {
  if (weights.shape() != x.shape()) {
    throw DimensionError("weighted_sum: weights " + shape_str(weights.shape()) + " vs " + shape_str(x.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.numel(); ++i) s += x.value()[i] * weights[i];
  return Var::make(Tensor::scalar(s), {x}, [weights](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * weights[i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::make(std::move(out), {x}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor out(s);
  const auto& in = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < inner; ++c) {
      const std::size_t base = o * len * inner + c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, in[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(in[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return Var::make(std::move(out), {x}, [outer, inner, len](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t c = 0; c < inner; ++c) {
        const std::size_t base = o * len * inner + c;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = base + j * inner;
          g[i] += y[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const std::size_t n = last_dim(x);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.value().numel() / n;
  Tensor out(x.shape());
  // Saved per-row normalized input and inverse std for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.value().numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& in = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[r * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = in[r * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[r * n + j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gain.value()[j] + bias.value()[j];
    }
  }
  return Var::make(std::move(out), {x, gain, bias}, [rows, n, xhat, inv_std](Node& self) {
    Node& px = parent(self, 0);
    Node& pg = parent(self, 1);
    Node& pb = parent(self, 2);
    const auto& gy = self.grad;
    if (pg.requires_grad) {
      auto& g = pg.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += gy[r * n + j] * (*xhat)[r * n + j];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += gy[r * n + j];
    }
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = gy[r * n + j] * pg.value[j];
          mean_d += d;
          mean_dx += d * (*xhat)[r * n + j];
        }
        mean_d *= inv_n;
        mean_dx *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = gy[r * n + j] * pg.value[j];
          g[r * n + j] += (*inv_std)[r] * (d - mean_d - (*xhat)[r * n + j] * mean_dx);
        }
      }
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids, const Shape& leading) {
  if (table.value().rank() != 2) throw DimensionError("embedding: table must be 2-D");
  if (shape_numel(leading) != ids.size()) throw DimensionError("embedding: id count does not match layout");
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  Shape out_shape = leading;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(table.value().data().begin() + ids[i] * d, d, out.data().begin() + i * d);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return Var::make(std::move(out), {table}, [saved = std::move(saved), d](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < saved.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[saved[i] * d + j] += self.grad[i * d + j];
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const Shape lead = leading_shape(parts[0].shape());
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (leading_shape(p.shape()) != lead) {
      throw DimensionError("concat_last: leading dims differ " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.shape().back());
    total += widths.back();
  }
  const std::size_t rows = shape_numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().begin() + r * widths[k], widths[k], out.data().begin() + r * total + offset);
    offset += widths[k];
  }
  return Var::make(std::move(out), parts, [widths, rows, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var attention_probs(const Var& q, const Var& k, std::size_t heads, std::span<const std::uint8_t> key_valid,
                    bool causal) {
  if (q.value().rank() != 3 || k.value().rank() != 3 || q.shape()[0] != k.shape()[0] ||
      q.shape()[2] != k.shape()[2] || heads == 0 || q.shape()[2] % heads != 0) {
    throw DimensionError("attention_probs: incompatible q " + shape_str(q.shape()) + " and k " +
                         shape_str(k.shape()) + " for " + std::to_string(heads) + " heads");
  }
  const std::size_t B = q.shape()[0], Tq = q.shape()[1], Tk = k.shape()[1], W = q.shape()[2];
  const std::size_t dk = W / heads;
  if (key_valid.size() != B * Tk) throw DimensionError("attention_probs: key mask size mismatch");
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor out({B, heads, Tq, Tk});
  RowMat scores(Tq, Tk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStridedMap qm(q.value().data().data() + b * Tq * W + h * dk, Tq, dk, Eigen::OuterStride<>(W));
      ConstStridedMap km(k.value().data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
      scores.noalias() = qm * km.transpose();
      double* p = out.data().data() + ((b * heads + h) * Tq) * Tk;
      for (std::size_t i = 0; i < Tq; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < Tk; ++j) {
          if (key_valid[b * Tk + j] && !(causal && j > i)) {
            mx = any ? std::max(mx, scores(i, j) * sc) : scores(i, j) * sc;
            any = true;
          }
        }
        if (!any) {
          throw ContractError("attention_probs: every key is masked for query " + std::to_string(i) +
                              " of batch row " + std::to_string(b));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < Tk; ++j) {
          double e = 0.0;
          if (key_valid[b * Tk + j] && !(causal && j > i)) e = std::exp(scores(i, j) * sc - mx);
          p[i * Tk + j] = e;
          z += e;
        }
        for (std::size_t j = 0; j < Tk; ++j) p[i * Tk + j] /= z;
      }
    }
  }
  return Var::make(std::move(out), {q, k}, [B, Tq, Tk, W, dk, heads, sc](Node& self) {
    Node& pq = parent(self, 0);
    Node& pk = parent(self, 1);
    RowMat ds(Tq, Tk);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = ((b * heads + h) * Tq) * Tk;
        const double* p = self.value.data().data() + off;
        const double* gp = self.grad.data().data() + off;
        for (std::size_t i = 0; i < Tq; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < Tk; ++j) dot += gp[i * Tk + j] * p[i * Tk + j];
          for (std::size_t j = 0; j < Tk; ++j) ds(i, j) = p[i * Tk + j] * (gp[i * Tk + j] - dot) * sc;
        }
        if (pq.requires_grad) {
          StridedMap gq(pq.grad_buffer().data().data() + b * Tq * W + h * dk, Tq, dk, Eigen::OuterStride<>(W));
          ConstStridedMap km(pk.value.data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
          gq.noalias() += ds * km;
        }
        if (pk.requires_grad) {
          StridedMap gk(pk.grad_buffer().data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
          ConstStridedMap qm(pq.value.data().data() + b * Tq * W + h * dk, Tq, dk, Eigen::OuterStride<>(W));
          gk.noalias() += ds.transpose() * qm;
        }
      }
    }
  });
}

Var attention_apply(const Var& probs, const Var& v) {
  if (probs.value().rank() != 4 || v.value().rank() != 3 || probs.shape()[0] != v.shape()[0] ||
      probs.shape()[3] != v.shape()[1] || v.shape()[2] % probs.shape()[1] != 0) {
    throw DimensionError("attention_apply: incompatible probs " + shape_str(probs.shape()) + " and v " +
                         shape_str(v.shape()));
  }
  const std::size_t B = probs.shape()[0], H = probs.shape()[1], Tq = probs.shape()[2], Tk = probs.shape()[3];
  const std::size_t W = v.shape()[2], dk = W / H;
  Tensor out({B, Tq, W});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      ConstMatMap pm(probs.value().data().data() + ((b * H + h) * Tq) * Tk, Tq, Tk);
      ConstStridedMap vm(v.value().data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
      StridedMap om(out.data().data() + b * Tq * W + h * dk, Tq, dk, Eigen::OuterStride<>(W));
      om.noalias() = pm * vm;
    }
  }
  return Var::make(std::move(out), {probs, v}, [B, H, Tq, Tk, W, dk](Node& self) {
    Node& pp = parent(self, 0);
    Node& pv = parent(self, 1);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        ConstStridedMap go(self.grad.data().data() + b * Tq * W + h * dk, Tq, dk, Eigen::OuterStride<>(W));
        if (pp.requires_grad) {
          MatMap gp(pp.grad_buffer().data().data() + ((b * H + h) * Tq) * Tk, Tq, Tk);
          ConstStridedMap vm(pv.value.data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
          gp.noalias() += go * vm.transpose();
        }
        if (pv.requires_grad) {
          StridedMap gv(pv.grad_buffer().data().data() + b * Tk * W + h * dk, Tk, dk, Eigen::OuterStride<>(W));
          ConstMatMap pm(pp.value.data().data() + ((b * H + h) * Tq) * Tk, Tq, Tk);
          gv.noalias() += pm.transpose() * go;
        }
      }
    }
  });
}

Var scale_head_blocks(const Var& x, std::span<const double> gates) {
  const std::size_t W = last_dim(x);
  if (gates.empty() || W % gates.size() != 0) {
    throw DimensionError("scale_head_blocks: width " + std::to_string(W) + " not divisible into " +
                         std::to_string(gates.size()) + " heads");
  }
  const std::size_t dk = W / gates.size();
  std::vector<double> g(gates.begin(), gates.end());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= g[(i % W) / dk];
  return Var::make(std::move(out), {x}, [g = std::move(g), W, dk](Node& self) {
    auto& gx = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i] * g[(i % W) / dk];
  });
}

Var mean_heads(const Var& probs) {
  if (probs.value().rank() != 4) throw DimensionError("mean_heads: expected [B,H,Tq,Tk], got " + shape_str(probs.shape()));
  const std::size_t B = probs.shape()[0], H = probs.shape()[1], T = probs.shape()[2] * probs.shape()[3];
  Tensor out({probs.shape()[0], probs.shape()[2], probs.shape()[3]});
  const double inv = 1.0 / static_cast<double>(H);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < T; ++i) out[b * T + i] += probs.value()[(b * H + h) * T + i] * inv;
  return Var::make(std::move(out), {probs}, [B, H, T, inv](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t i = 0; i < T; ++i) g[(b * H + h) * T + i] += self.grad[b * T + i] * inv;
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets, int pad_id) {
  const std::size_t V = last_dim(logits);
  const std::size_t rows = logits.value().numel() / V;
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                         " rows");
  }
  std::vector<double> probs(rows * V);
  double total = 0.0;
  std::size_t count = 0;
  const auto& x = logits.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < V; ++j) mx = std::max(mx, x[r * V + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) z += std::exp(x[r * V + j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < V; ++j) probs[r * V + j] = std::exp(x[r * V + j] - log_z);
    total += log_z - x[r * V + t];
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  std::vector<int> saved(targets.begin(), targets.end());
  return Var::make(Tensor::scalar(total / denom), {logits},
                   [probs = std::move(probs), saved = std::move(saved), rows, V, denom, pad_id](Node& self) {
                     auto& g = parent(self, 0).grad_buffer();
                     const double up = self.grad[0] / denom;
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (saved[r] == pad_id) continue;
                       for (std::size_t j = 0; j < V; ++j) g[r * V + j] += up * probs[r * V + j];
                       g[r * V + saved[r]] -= up;
                     }
                   });
}

Var kl_rows(const Var& p, const Var& q) {
  require_same_shape("kl_divergence", p, q);
  const std::size_t n = last_dim(p);
  const std::size_t rows = p.value().numel() / n;
  Shape out_shape = leading_shape(p.shape());
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const auto& pv = p.value();
  const auto& qv = q.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double pj = pv[r * n + j];
      if (pj > 0.0) s += pj * (std::log(pj) - std::log(std::max(qv[r * n + j], kProbEpsilon)));
    }
    out[r] = s;
  }
  return Var::make(std::move(out), {p, q}, [rows, n](Node& self) {
    Node& pp = parent(self, 0);
    Node& pq = parent(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double up = self.grad[r];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = r * n + j;
        const double pj = pp.value[i];
        const double qj = pq.value[i];
        if (pp.requires_grad) {
          pp.grad_buffer()[i] +=
              up * (std::log(std::max(pj, kProbEpsilon)) + 1.0 - std::log(std::max(qj, kProbEpsilon)));
        }
        if (pq.requires_grad && qj > kProbEpsilon) pq.grad_buffer()[i] -= up * pj / qj;
      }
    }
  });
}

Var kl_divergence(const Var& p, const Var& q) { return sum(kl_rows(p, q)); }

Var mse(const Var& a, const Var& b) {
  require_same_shape("mse", a, b);
  const std::size_t n = a.value().numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return Var::make(Tensor::scalar(s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const double up = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pa.value[i] - pb.value[i];
      if (pa.requires_grad) pa.grad_buffer()[i] += up * d;
      if (pb.requires_grad) pb.grad_buffer()[i] -= up * d;
    }
  });
}

}  // namespace headkd
