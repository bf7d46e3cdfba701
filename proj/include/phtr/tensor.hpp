#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "phtr/errors.hpp"
#include "phtr/rng.hpp"

namespace phtr {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Shared storage behind Tensor handles. `grad` stays empty until a backward
// pass (or accumulate_grad) touches it; when present it matches values in
// length.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
};

// Scratch gradient buffers for one backward walk, keyed by node. Keeps the
// walk free of writes to shared TensorNode state so independent tapes can
// run on different threads.
class GradStore {
 public:
  std::vector<double>& buffer(const std::shared_ptr<TensorNode>& n) {
    auto& buf = bufs_[n.get()];
    if (buf.empty()) buf.assign(n->values.size(), 0.0);
    return buf;
  }
  const std::vector<double>* find(const TensorNode* n) const {
    auto it = bufs_.find(n);
    return it == bufs_.end() ? nullptr : &it->second;
  }
  auto begin() const { return bufs_.begin(); }
  auto end() const { return bufs_.end(); }

 private:
  std::unordered_map<const TensorNode*, std::vector<double>> bufs_;
};

class Tensor;

// Ordered record of executed operations. Execution order is topological by
// construction; backward() visits each record exactly once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Accumulates d loss / d node into node->grad for every requires_grad
  // tensor reachable from `loss`. Repeated calls accumulate; zero_grad
  // resets. Throws ShapeError if loss is not scalar, std::invalid_argument
  // if loss was not produced on this tape.
  void backward(const Tensor& loss);

  // Same walk, but grads are returned instead of applied. Used for
  // data-parallel batch members whose gradients are summed in index order
  // by the caller.
  GradStore backward_grads(const Tensor& loss) const;

  size_t size() const { return records_.size(); }

  void record(std::shared_ptr<TensorNode> out,
              std::function<void(GradStore&)> fn) {
    produced_.insert(out.get());
    records_.push_back({std::move(out), std::move(fn)});
  }
  bool produced(const TensorNode* n) const { return produced_.count(n) > 0; }

 private:
  struct Record {
    std::shared_ptr<TensorNode> out;
    std::function<void(GradStore&)> fn;
  };
  std::vector<Record> records_;
  std::unordered_set<const TensorNode*> produced_;
};

// Thread-local active tape. Forward math never depends on whether a tape is
// recording; recording only adds backward rules.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Temporarily disables recording (generation loops, finite differencing).
class TapeSuspend {
 public:
  TapeSuspend();
  ~TapeSuspend();
  TapeSuspend(const TapeSuspend&) = delete;
  TapeSuspend& operator=(const TapeSuspend&) = delete;

 private:
  Tape* prev_;
};

// Dense row-major tensor handle with value semantics over shared storage.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode>()) {}
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  // i.i.d. N(0, stddev^2) entries.
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->values.size()); }

  std::span<const double> data() const { return node_->values; }
  // Direct mutation is for initialization and optimizer updates only; it is
  // invisible to any tape that recorded earlier reads.
  std::span<double> mutable_data() { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }
  void accumulate_grad(std::span<const double> g);

  double item() const;  // scalar tensors only
  double at(std::initializer_list<int64_t> idx) const;

  bool all_finite() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- primitive operations -------------------------------------------------
// Forward results are identical with or without an active tape. Backward
// rules are recorded when a tape is active and any input requires grad.

// Standard matrix product; a is m x k, b is k x n.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise addition. Also accepts rank-2 a with rank-1 b of length
// a.dim(1), broadcasting b across rows (bias add).
Tensor add(const Tensor& a, const Tensor& b);

// Elementwise product, same shapes.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);

// a - b, same broadcast rules as add.
Tensor sub(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);  // rank-2

Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(const std::vector<Tensor>& parts, int axis);

// Half-open [begin, end) along `axis`.
Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end);

// Rows of `table` (rank-2, vocab x width) gathered by id.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

// Inverted dropout: keeps with probability 1-p and rescales by 1/(1-p).
// Identity when train_mode is false or p == 0. Mask is a pure function of
// seed. Requires 0 <= p < 1.
Tensor dropout(const Tensor& a, double p, bool train_mode, uint64_t seed);

// Exp-normalization along `axis` with max subtraction.
Tensor softmax(const Tensor& a, int axis);

// Exact form: 0.5 * x * (1 + erf(x / sqrt(2))).
Tensor gelu(const Tensor& a);

// Normalizes the last axis to zero mean / unit variance (population
// variance, eps inside the sqrt), then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

// Mean negative log-softmax of targets over positions whose target is not
// ignore_id. logits is positions x vocab. Throws ShapeError on out-of-range
// targets and std::invalid_argument when every position is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     int ignore_id);

Tensor sum(const Tensor& a);       // scalar
Tensor mean_all(const Tensor& a);  // scalar

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are addressable by parameter
// name for checkpointing.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                AdamConfig cfg);

  // Applies one update from the current grads (missing grads are treated as
  // zero) and advances the step counter.
  void step();
  void zero_grads();

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t s) { step_count_ = s; }

  // Moment buffers exposed as "m.<name>" / "v.<name>" pairs plus "step".
  std::vector<std::pair<std::string, Tensor>> state_tensors();

  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    Tensor m;
    Tensor v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  int64_t step_count_ = 0;
};

// ---- gradient checking ------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = false;
};

// Compares the tape gradient of scalar-valued f at x against central finite
// differences with the given step. Relative error is
// |a - n| / max(|a| + |n|, 1e-6).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol);

}  // namespace phtr
