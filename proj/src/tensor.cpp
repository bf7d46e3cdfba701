#include "phtr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace phtr {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void validate_shape(const Shape& s) {
  for (int64_t d : s) {
    check_shape(d > 0, "tensor dimensions must be positive, got " +
                           shape_str(s));
  }
}

// Records `fn` if a tape is active and any input requires grad; propagates
// the requires_grad flag either way so downstream ops keep recording.
template <class Fn>
void finish_op(Tensor& out, std::initializer_list<const Tensor*> inputs,
               Fn&& fn) {
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || t->requires_grad();
  out.set_requires_grad(rg);
  if (rg && g_active_tape != nullptr) {
    g_active_tape->record(out.node(), std::forward<Fn>(fn));
  }
}

struct AxisSplit {
  int64_t outer;
  int64_t len;
  int64_t inner;
};

AxisSplit split_at_axis(const Shape& s, int axis) {
  AxisSplit r{1, s[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) {
    r.inner *= s[i];
  }
  return r;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_derivative(double x) {
  const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * phi;
}

}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

TapeSuspend::TapeSuspend() : prev_(g_active_tape) { g_active_tape = nullptr; }
TapeSuspend::~TapeSuspend() { g_active_tape = prev_; }

void Tape::backward(const Tensor& loss) {
  GradStore grads = backward_grads(loss);
  for (const auto& [node, buf] : grads) {
    // GradStore keys are nodes this tape touched; they outlive the walk
    // because records hold shared ownership of their outputs and closures
    // hold their inputs.
    auto* n = const_cast<TensorNode*>(node);
    if (!n->requires_grad) continue;
    if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
    for (size_t i = 0; i < buf.size(); ++i) n->grad[i] += buf[i];
  }
}

GradStore Tape::backward_grads(const Tensor& loss) const {
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(loss.shape()));
  }
  if (!produced(loss.node().get())) {
    throw std::invalid_argument("backward: loss was not produced on this tape");
  }
  GradStore grads;
  grads.buffer(loss.node())[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->fn(grads);
  }
  return grads;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape);
  auto n = std::make_shared<TensorNode>();
  n->values.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->values.begin(), t.node()->values.end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  validate_shape(shape);
  check_shape(shape_numel(shape) == static_cast<int64_t>(data.size()),
              "from_data: " + shape_str(shape) + " does not match " +
                  std::to_string(data.size()) + " values");
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.node()->values) v = rng.gaussian() * stddev;
  return t;
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) {
    throw std::logic_error("tensor has no gradient; run backward first");
  }
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  return node_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  check_shape(g.size() == node_->values.size(),
              "accumulate_grad: length mismatch");
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a scalar tensor, got " +
                     shape_str(shape()));
  }
  return node_->values[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  check_shape(idx.size() == node_->shape.size(), "at(): rank mismatch");
  int64_t off = 0;
  size_t k = 0;
  for (int64_t i : idx) {
    check_shape(i >= 0 && i < node_->shape[k], "at(): index out of range");
    off = off * node_->shape[k] + i;
    ++k;
  }
  return node_->values[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
  for (double v : node_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_shape(a.rank() == 2 && b.rank() == 2,
              "matmul expects rank-2 tensors, got " + shape_str(a.shape()) +
                  " and " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  check_shape(k == k2, "matmul inner dimensions disagree: " +
                           shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  Tensor c = Tensor::zeros({m, n});
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.mutable_data().data();
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t p = 0; p < k; ++p) {
        const double av = pa[i * k + p];
        if (av == 0.0) continue;
        const double* brow = pb + p * n;
        double* crow = pc + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  finish_op(c, {&a, &b},
            [an = a.node(), bn = b.node(), cn = c.node(), m, k, n](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc) return;
              const double* pgc = gc->data();
              if (an->requires_grad) {
                auto& ga = g.buffer(an);
                const double* pb = bn->values.data();
                // dA = dC * B^T
                for (int64_t i = 0; i < m; ++i) {
                  for (int64_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* gcrow = pgc + i * n;
                    const double* brow = pb + p * n;
                    for (int64_t j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
                    ga[static_cast<size_t>(i * k + p)] += acc;
                  }
                }
              }
              if (bn->requires_grad) {
                auto& gb = g.buffer(bn);
                const double* pa = an->values.data();
                // dB = A^T * dC
                for (int64_t i = 0; i < m; ++i) {
                  const double* arow = pa + i * k;
                  const double* gcrow = pgc + i * n;
                  for (int64_t p = 0; p < k; ++p) {
                    const double av = arow[p];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + p * n;
                    for (int64_t j = 0; j < n; ++j) gbrow[j] += av * gcrow[j];
                  }
                }
              }
            });
  return c;
}

namespace {

enum class AddMode { kElementwise, kRowBroadcast };

AddMode add_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return AddMode::kElementwise;
  if (a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1)) {
    return AddMode::kRowBroadcast;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

Tensor add_impl(const Tensor& a, const Tensor& b, double sign, const char* op) {
  const AddMode mode = add_mode(a, b, op);
  Tensor c = Tensor::zeros(a.shape());
  const auto va = a.data();
  const auto vb = b.data();
  auto vc = c.mutable_data();
  if (mode == AddMode::kElementwise) {
    for (size_t i = 0; i < vc.size(); ++i) vc[i] = va[i] + sign * vb[i];
  } else {
    const int64_t rows = a.dim(0), cols = a.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < cols; ++j) {
        vc[static_cast<size_t>(i * cols + j)] =
            va[static_cast<size_t>(i * cols + j)] +
            sign * vb[static_cast<size_t>(j)];
      }
    }
  }
  finish_op(c, {&a, &b},
            [an = a.node(), bn = b.node(), cn = c.node(), mode, sign](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc) return;
              if (an->requires_grad) {
                auto& ga = g.buffer(an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*gc)[i];
              }
              if (bn->requires_grad) {
                auto& gb = g.buffer(bn);
                if (mode == AddMode::kElementwise) {
                  for (size_t i = 0; i < gb.size(); ++i) {
                    gb[i] += sign * (*gc)[i];
                  }
                } else {
                  const size_t cols = gb.size();
                  const size_t rows = gc->size() / cols;
                  for (size_t i = 0; i < rows; ++i) {
                    for (size_t j = 0; j < cols; ++j) {
                      gb[j] += sign * (*gc)[i * cols + j];
                    }
                  }
                }
              }
            });
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check_shape(a.shape() == b.shape(), "mul: shape mismatch " +
                                          shape_str(a.shape()) + " vs " +
                                          shape_str(b.shape()));
  Tensor c = Tensor::zeros(a.shape());
  const auto va = a.data();
  const auto vb = b.data();
  auto vc = c.mutable_data();
  for (size_t i = 0; i < vc.size(); ++i) vc[i] = va[i] * vb[i];
  finish_op(c, {&a, &b},
            [an = a.node(), bn = b.node(), cn = c.node()](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc) return;
              if (an->requires_grad) {
                auto& ga = g.buffer(an);
                for (size_t i = 0; i < ga.size(); ++i) {
                  ga[i] += (*gc)[i] * bn->values[i];
                }
              }
              if (bn->requires_grad) {
                auto& gb = g.buffer(bn);
                for (size_t i = 0; i < gb.size(); ++i) {
                  gb[i] += (*gc)[i] * an->values[i];
                }
              }
            });
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = Tensor::zeros(a.shape());
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (size_t i = 0; i < vc.size(); ++i) vc[i] = va[i] * s;
  finish_op(c, {&a}, [an = a.node(), cn = c.node(), s](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += s * (*gc)[i];
  });
  return c;
}

Tensor transpose(const Tensor& a) {
  check_shape(a.rank() == 2, "transpose expects rank-2, got " +
                                 shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor c = Tensor::zeros({n, m});
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      vc[static_cast<size_t>(j * m + i)] = va[static_cast<size_t>(i * n + j)];
    }
  }
  finish_op(c, {&a}, [an = a.node(), cn = c.node(), m, n](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        ga[static_cast<size_t>(i * n + j)] += (*gc)[static_cast<size_t>(j * m + i)];
      }
    }
  });
  return c;
}

Tensor reshape(const Tensor& a, Shape shape) {
  validate_shape(shape);
  check_shape(shape_numel(shape) == a.numel(),
              "reshape: cannot view " + shape_str(a.shape()) + " as " +
                  shape_str(shape));
  Tensor c = Tensor::from_data(std::move(shape),
                               std::vector<double>(a.data().begin(),
                                                   a.data().end()));
  finish_op(c, {&a}, [an = a.node(), cn = c.node()](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*gc)[i];
  });
  return c;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check_shape(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  check_shape(axis >= 0 && axis < parts[0].rank(), "concat: bad axis");
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (const Tensor& p : parts) {
    check_shape(p.rank() == parts[0].rank(), "concat: rank mismatch");
    for (int d = 0; d < p.rank(); ++d) {
      if (d == axis) continue;
      check_shape(p.dim(d) == s0[static_cast<size_t>(d)],
                  "concat: shape mismatch at non-concat axis");
    }
    axis_total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;
  Tensor c = Tensor::zeros(out_shape);
  const AxisSplit os = split_at_axis(out_shape, axis);
  auto vc = c.mutable_data();
  std::vector<int64_t> offsets;
  int64_t run = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(run);
    const AxisSplit ps = split_at_axis(p.shape(), axis);
    const auto vp = p.data();
    for (int64_t o = 0; o < ps.outer; ++o) {
      for (int64_t a2 = 0; a2 < ps.len; ++a2) {
        const double* src = vp.data() + (o * ps.len + a2) * ps.inner;
        double* dst = vc.data() + (o * os.len + run + a2) * os.inner;
        std::copy(src, src + ps.inner, dst);
      }
    }
    run += p.dim(axis);
  }
  bool any_rg = false;
  for (const Tensor& p : parts) any_rg = any_rg || p.requires_grad();
  Tensor& out = c;
  out.set_requires_grad(any_rg);
  if (any_rg && active_tape() != nullptr) {
    std::vector<std::shared_ptr<TensorNode>> in_nodes;
    for (const Tensor& p : parts) in_nodes.push_back(p.node());
    active_tape()->record(
        c.node(), [in_nodes, offsets, cn = c.node(), os, axis](GradStore& g) {
          const auto* gc = g.find(cn.get());
          if (!gc) return;
          for (size_t pi = 0; pi < in_nodes.size(); ++pi) {
            const auto& n = in_nodes[pi];
            if (!n->requires_grad) continue;
            auto& gp = g.buffer(n);
            const AxisSplit ps = split_at_axis(n->shape, axis);
            for (int64_t o = 0; o < ps.outer; ++o) {
              for (int64_t a2 = 0; a2 < ps.len; ++a2) {
                const double* src =
                    gc->data() + (o * os.len + offsets[pi] + a2) * os.inner;
                double* dst = gp.data() + (o * ps.len + a2) * ps.inner;
                for (int64_t i = 0; i < ps.inner; ++i) dst[i] += src[i];
              }
            }
          }
        });
  }
  return c;
}

Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end) {
  check_shape(axis >= 0 && axis < a.rank(), "slice: bad axis");
  check_shape(begin >= 0 && begin < end && end <= a.dim(axis),
              "slice: bad range [" + std::to_string(begin) + ", " +
                  std::to_string(end) + ") for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = end - begin;
  Tensor c = Tensor::zeros(out_shape);
  const AxisSplit as = split_at_axis(a.shape(), axis);
  const AxisSplit cs = split_at_axis(out_shape, axis);
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (int64_t o = 0; o < cs.outer; ++o) {
    for (int64_t a2 = 0; a2 < cs.len; ++a2) {
      const double* src = va.data() + (o * as.len + begin + a2) * as.inner;
      double* dst = vc.data() + (o * cs.len + a2) * cs.inner;
      std::copy(src, src + cs.inner, dst);
    }
  }
  finish_op(c, {&a},
            [an = a.node(), cn = c.node(), as, cs, begin](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc || !an->requires_grad) return;
              auto& ga = g.buffer(an);
              for (int64_t o = 0; o < cs.outer; ++o) {
                for (int64_t a2 = 0; a2 < cs.len; ++a2) {
                  const double* src = gc->data() + (o * cs.len + a2) * cs.inner;
                  double* dst = ga.data() + (o * as.len + begin + a2) * as.inner;
                  for (int64_t i = 0; i < cs.inner; ++i) dst[i] += src[i];
                }
              }
            });
  return c;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  check_shape(table.rank() == 2, "embedding_lookup: table must be rank-2");
  const int64_t vocab = table.dim(0), width = table.dim(1);
  for (int id : ids) {
    check_shape(id >= 0 && id < vocab,
                "embedding_lookup: id " + std::to_string(id) +
                    " outside vocab of " + std::to_string(vocab));
  }
  Tensor c = Tensor::zeros({static_cast<int64_t>(ids.size()), width});
  const auto vt = table.data();
  auto vc = c.mutable_data();
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* src = vt.data() + static_cast<int64_t>(ids[i]) * width;
    std::copy(src, src + width, vc.data() + static_cast<int64_t>(i) * width);
  }
  std::vector<int> ids_copy(ids.begin(), ids.end());
  finish_op(c, {&table},
            [tn = table.node(), cn = c.node(), ids_copy, width](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc || !tn->requires_grad) return;
              auto& gt = g.buffer(tn);
              for (size_t i = 0; i < ids_copy.size(); ++i) {
                const double* src = gc->data() + static_cast<int64_t>(i) * width;
                double* dst =
                    gt.data() + static_cast<int64_t>(ids_copy[i]) * width;
                for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
              }
            });
  return c;
}

Tensor dropout(const Tensor& a, double p, bool train_mode, uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " +
                                std::to_string(p));
  }
  if (!train_mode || p == 0.0) {
    // Identity pass-through, still differentiable.
    return scale(a, 1.0);
  }
  const double keep_scale = 1.0 / (1.0 - p);
  Rng rng(seed);
  auto mask = std::make_shared<std::vector<uint8_t>>(a.numel());
  Tensor c = Tensor::zeros(a.shape());
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (size_t i = 0; i < vc.size(); ++i) {
    const bool keep = rng.uniform() >= p;
    (*mask)[i] = keep ? 1 : 0;
    vc[i] = keep ? va[i] * keep_scale : 0.0;
  }
  finish_op(c, {&a},
            [an = a.node(), cn = c.node(), mask, keep_scale](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc || !an->requires_grad) return;
              auto& ga = g.buffer(an);
              for (size_t i = 0; i < ga.size(); ++i) {
                if ((*mask)[i]) ga[i] += (*gc)[i] * keep_scale;
              }
            });
  return c;
}

Tensor softmax(const Tensor& a, int axis) {
  check_shape(axis >= 0 && axis < a.rank(),
              "softmax: axis " + std::to_string(axis) + " invalid for " +
                  shape_str(a.shape()));
  Tensor c = Tensor::zeros(a.shape());
  const AxisSplit s = split_at_axis(a.shape(), axis);
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.len * s.inner + i;
      double mx = -HUGE_VAL;
      for (int64_t k = 0; k < s.len; ++k) {
        mx = std::max(mx, va[static_cast<size_t>(base + k * s.inner)]);
      }
      double denom = 0.0;
      for (int64_t k = 0; k < s.len; ++k) {
        const double e =
            std::exp(va[static_cast<size_t>(base + k * s.inner)] - mx);
        vc[static_cast<size_t>(base + k * s.inner)] = e;
        denom += e;
      }
      for (int64_t k = 0; k < s.len; ++k) {
        vc[static_cast<size_t>(base + k * s.inner)] /= denom;
      }
    }
  }
  finish_op(c, {&a}, [an = a.node(), cn = c.node(), s](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    const auto& y = cn->values;
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t i = 0; i < s.inner; ++i) {
        const int64_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (int64_t k = 0; k < s.len; ++k) {
          const size_t idx = static_cast<size_t>(base + k * s.inner);
          dot += (*gc)[idx] * y[idx];
        }
        for (int64_t k = 0; k < s.len; ++k) {
          const size_t idx = static_cast<size_t>(base + k * s.inner);
          ga[idx] += y[idx] * ((*gc)[idx] - dot);
        }
      }
    }
  });
  return c;
}

Tensor gelu(const Tensor& a) {
  Tensor c = Tensor::zeros(a.shape());
  const auto va = a.data();
  auto vc = c.mutable_data();
  for (size_t i = 0; i < vc.size(); ++i) vc[i] = gelu_scalar(va[i]);
  finish_op(c, {&a}, [an = a.node(), cn = c.node()](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    for (size_t i = 0; i < ga.size(); ++i) {
      ga[i] += (*gc)[i] * gelu_derivative(an->values[i]);
    }
  });
  return c;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_shape(x.rank() >= 1, "layer_norm: rank must be >= 1");
  const int64_t width = x.dim(x.rank() - 1);
  check_shape(gamma.rank() == 1 && gamma.dim(0) == width,
              "layer_norm: gamma must match last dimension " +
                  std::to_string(width));
  check_shape(beta.rank() == 1 && beta.dim(0) == width,
              "layer_norm: beta must match last dimension " +
                  std::to_string(width));
  const int64_t rows = x.numel() / width;
  Tensor c = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto vx = x.data();
  const auto vg = gamma.data();
  const auto vb = beta.data();
  auto vc = c.mutable_data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = vx.data() + r * width;
    double mean = 0.0;
    for (int64_t j = 0; j < width; ++j) mean += row[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (int64_t j = 0; j < width; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(width);
    const double r_std = 1.0 / std::sqrt(var + eps);
    (*rstd)[static_cast<size_t>(r)] = r_std;
    for (int64_t j = 0; j < width; ++j) {
      const double h = (row[j] - mean) * r_std;
      (*xhat)[static_cast<size_t>(r * width + j)] = h;
      vc[static_cast<size_t>(r * width + j)] = vg[static_cast<size_t>(j)] * h +
                                               vb[static_cast<size_t>(j)];
    }
  }
  finish_op(
      c, {&x, &gamma, &beta},
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), cn = c.node(), xhat,
       rstd, rows, width](GradStore& g) {
        const auto* gc = g.find(cn.get());
        if (!gc) return;
        if (gn->requires_grad) {
          auto& gg = g.buffer(gn);
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t j = 0; j < width; ++j) {
              const size_t idx = static_cast<size_t>(r * width + j);
              gg[static_cast<size_t>(j)] += (*gc)[idx] * (*xhat)[idx];
            }
          }
        }
        if (bn->requires_grad) {
          auto& gb = g.buffer(bn);
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t j = 0; j < width; ++j) {
              gb[static_cast<size_t>(j)] += (*gc)[static_cast<size_t>(r * width + j)];
            }
          }
        }
        if (xn->requires_grad) {
          auto& gx = g.buffer(xn);
          const double inv_w = 1.0 / static_cast<double>(width);
          for (int64_t r = 0; r < rows; ++r) {
            // dxhat = dy * gamma; dx = rstd * (dxhat - mean(dxhat)
            //                                   - xhat * mean(dxhat * xhat))
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (int64_t j = 0; j < width; ++j) {
              const size_t idx = static_cast<size_t>(r * width + j);
              const double dh = (*gc)[idx] * gn->values[static_cast<size_t>(j)];
              mean_dh += dh;
              mean_dh_h += dh * (*xhat)[idx];
            }
            mean_dh *= inv_w;
            mean_dh_h *= inv_w;
            const double r_std = (*rstd)[static_cast<size_t>(r)];
            for (int64_t j = 0; j < width; ++j) {
              const size_t idx = static_cast<size_t>(r * width + j);
              const double dh = (*gc)[idx] * gn->values[static_cast<size_t>(j)];
              gx[idx] += r_std * (dh - mean_dh - (*xhat)[idx] * mean_dh_h);
            }
          }
        }
      });
  return c;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     int ignore_id) {
  check_shape(logits.rank() == 2, "cross_entropy: logits must be rank-2");
  const int64_t positions = logits.dim(0), vocab = logits.dim(1);
  check_shape(static_cast<int64_t>(targets.size()) == positions,
              "cross_entropy: " + std::to_string(targets.size()) +
                  " targets for " + std::to_string(positions) + " positions");
  int64_t n_valid = 0;
  for (int t : targets) {
    if (t == ignore_id) continue;
    check_shape(t >= 0 && t < vocab, "cross_entropy: target " +
                                         std::to_string(t) +
                                         " outside vocab of " +
                                         std::to_string(vocab));
    ++n_valid;
  }
  if (n_valid == 0) {
    throw std::invalid_argument(
        "cross_entropy: every position is ignored; loss undefined");
  }
  // Save softmax probabilities of valid rows for the backward rule.
  auto probs = std::make_shared<std::vector<double>>(logits.numel(), 0.0);
  const auto vl = logits.data();
  double total = 0.0;
  for (int64_t r = 0; r < positions; ++r) {
    if (targets[static_cast<size_t>(r)] == ignore_id) continue;
    const double* row = vl.data() + r * vocab;
    double mx = -HUGE_VAL;
    for (int64_t j = 0; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < vocab; ++j) denom += std::exp(row[j] - mx);
    const double log_denom = std::log(denom);
    for (int64_t j = 0; j < vocab; ++j) {
      (*probs)[static_cast<size_t>(r * vocab + j)] =
          std::exp(row[j] - mx) / denom;
    }
    const double target_logit =
        row[targets[static_cast<size_t>(r)]] - mx;
    total += log_denom - target_logit;
  }
  Tensor c = Tensor::scalar(total / static_cast<double>(n_valid));
  std::vector<int> tcopy(targets.begin(), targets.end());
  finish_op(c, {&logits},
            [ln = logits.node(), cn = c.node(), probs, tcopy, ignore_id,
             n_valid, vocab](GradStore& g) {
              const auto* gc = g.find(cn.get());
              if (!gc || !ln->requires_grad) return;
              const double upstream = (*gc)[0] / static_cast<double>(n_valid);
              auto& gl = g.buffer(ln);
              for (size_t r = 0; r < tcopy.size(); ++r) {
                if (tcopy[r] == ignore_id) continue;
                double* grow = gl.data() + static_cast<int64_t>(r) * vocab;
                const double* prow =
                    probs->data() + static_cast<int64_t>(r) * vocab;
                for (int64_t j = 0; j < vocab; ++j) {
                  grow[j] += upstream * prow[j];
                }
                grow[tcopy[r]] -= upstream;
              }
            });
  return c;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor c = Tensor::scalar(total);
  finish_op(c, {&a}, [an = a.node(), cn = c.node()](GradStore& g) {
    const auto* gc = g.find(cn.get());
    if (!gc || !an->requires_grad) return;
    auto& ga = g.buffer(an);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*gc)[0];
  });
  return c;
}

Tensor mean_all(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ---- optimizer --------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             AdamConfig cfg)
    : cfg_(cfg) {
  for (auto& [name, p] : params) {
    slots_.push_back({name, p, Tensor::zeros(p.shape()), Tensor::zeros(p.shape())});
  }
}

void AdamOptimizer::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (auto& slot : slots_) {
    auto vals = slot.param.mutable_data();
    const std::span<const double> grad =
        slot.param.has_grad() ? slot.param.grad() : std::span<const double>{};
    auto m = slot.m.mutable_data();
    auto v = slot.v.mutable_data();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double gi = grad.empty() ? 0.0 : grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      vals[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamOptimizer::zero_grads() {
  for (auto& slot : slots_) slot.param.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamOptimizer::state_tensors() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("step", Tensor::scalar(static_cast<double>(step_count_)));
  for (auto& slot : slots_) {
    out.emplace_back("m." + slot.name, slot.m);
    out.emplace_back("v." + slot.name, slot.v);
  }
  return out;
}

// ---- gradient checking ------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol) {
  Tensor probe = Tensor::from_data(
      x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);

  Tape tape;
  std::vector<double> analytic;
  {
    TapeScope scope(tape);
    Tensor y = f(probe);
    if (y.numel() != 1) {
      throw ShapeError("grad_check: f must return a scalar");
    }
    GradStore grads = tape.backward_grads(y);
    const auto* gx = grads.find(probe.node().get());
    analytic.assign(static_cast<size_t>(probe.numel()), 0.0);
    if (gx != nullptr) analytic = *gx;
  }

  GradCheckReport report;
  TapeSuspend no_tape;
  auto vals = probe.mutable_data();
  for (int64_t i = 0; i < probe.numel(); ++i) {
    const double orig = vals[static_cast<size_t>(i)];
    vals[static_cast<size_t>(i)] = orig + step;
    const double up = f(probe).item();
    vals[static_cast<size_t>(i)] = orig - step;
    const double down = f(probe).item();
    vals[static_cast<size_t>(i)] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[static_cast<size_t>(i)];
    const double rel =
        std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_rel_err < tol;
  return report;
}

}  // namespace phtr
