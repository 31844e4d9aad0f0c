#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bgmhan/errors.hpp"
#include "bgmhan/prng.hpp"

namespace bgmhan {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles with an optional gradient buffer.
// Tensor is a cheap shared handle; operations return new tensors and, when a
// Tape is active, record how to replay and differentiate themselves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t ndim() const { return d_->shape.size(); }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  double* data() { return d_->values.data(); }
  const double* data() const { return d_->values.data(); }

  double& at(std::size_t i) { return d_->values[i]; }
  double at(std::size_t i) const { return d_->values[i]; }
  // Scalar accessor; throws unless size() == 1.
  double item() const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  // Allocates a zero gradient buffer if absent.
  std::vector<double>& grad();
  // Read-only view; zero-filled buffer is allocated on demand.
  const std::vector<double>& grad() const;
  void zero_grad();
  void drop_grad() { d_->grad.clear(); }

  const std::string& name() const { return d_->name; }
  Tensor& set_name(std::string n) {
    d_->name = std::move(n);
    return *this;
  }

  bool all_finite() const;

  // Identity of the underlying buffer (true when two handles alias).
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty, or values.size() entries
    bool requires_grad = false;
    std::string name;
  };
  std::shared_ptr<Data> d_;

  explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
};

// One recorded primitive: enough to re-run the forward (bit-identical) and to
// push gradients from the output back to the inputs.
struct OpRecord {
  std::string op;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void()> replay;
  std::function<void()> backprop;
};

// Ordered list of applied primitives for one forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(OpRecord rec) { records_.push_back(std::move(rec)); }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }
  const std::vector<OpRecord>& records() const { return records_; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients in reverse order.
  // Gradients of every tensor touched by the tape are populated; tensors the
  // loss does not reach end up with zeros.
  void backward(const Tensor& loss);

  // Re-runs every recorded forward in order, writing into the original
  // output buffers. Outputs are bit-identical to the first pass.
  void replay() const;

  // Line-oriented description, one record per line, for inspection.
  std::string dump() const;

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<OpRecord> records_;
};

// RAII activation: while alive, primitives record onto the given tape.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

enum class GeluKind { exact, tanh_approx };

// --- primitive operations -------------------------------------------------
// All of these compute eagerly and record onto the active tape when one is
// in scope. Last axis is the feature axis for row-wise ops.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x: [r x d], bias: [d]; adds bias to every row.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
// x: [r x d], gate: [d]; multiplies every row elementwise.
Tensor mul_rowwise(const Tensor& x, const Tensor& gate);
Tensor scale(const Tensor& a, double c);

// Softmax along the last axis, max-subtracted for stability.
Tensor softmax(const Tensor& x);
// Same, but positions with mask==0 get probability exactly 0 and take no
// part in the normalisation. At least one key must be unmasked.
Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& key_mask);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x, GeluKind kind = GeluKind::exact);
Tensor sigmoid(const Tensor& x);

// [n x d] -> [d], arithmetic mean over rows.
Tensor mean_pool(const Tensor& x);
// Mean over rows with mask==1 only; throws if every row is masked.
Tensor masked_mean_pool(const Tensor& x, const std::vector<std::uint8_t>& row_mask);

Tensor sum(const Tensor& x);          // -> scalar
Tensor sum_squares(const Tensor& x);  // -> scalar
Tensor dot(const Tensor& a, const Tensor& b);  // vectors -> scalar

// k vectors of length d -> [k x d].
Tensor stack_rows(const std::vector<Tensor>& rows);
// Matrices with equal row counts concatenated along columns.
Tensor concat_cols(const std::vector<Tensor>& parts);
// x: [d0 x d1 x ...] -> plane i along axis 0, shape [d1 x ...].
Tensor slice_plane(const Tensor& x, std::size_t i);
// First `count` rows of [n x d].
Tensor slice_rows(const Tensor& x, std::size_t count);

// Inverted dropout: survivors scaled by 1/(1-rate). rate == 0 is identity.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h per
// coordinate. Restores x on exit. Test oracle; independent of the tape.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        Tensor& x, double h = 1e-5);

}  // namespace bgmhan
