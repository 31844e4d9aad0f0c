#include "bgmhan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace bgmhan {

namespace {

// Lambdas capture `const Tensor&` parameters as const copies; copying the
// shared handle again gives mutable access to the same gradient buffer.
std::vector<double>& grad_of(const Tensor& t) {
  Tensor handle = t;
  return handle.grad();
}

}  // namespace

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_shape_valid(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor axes must be positive, got " + shape_str(shape));
  }
}

void maybe_record(std::string op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> replay, std::function<void()> backprop) {
  if (Tape* tape = Tape::active()) {
    tape->record(OpRecord{std::move(op), std::move(inputs), std::move(output),
                          std::move(replay), std::move(backprop)});
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + " expects a 2-d tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  check_shape_valid(shape);
  auto d = std::make_shared<Data>();
  d->values.assign(shape_product(shape), 0.0);
  d->shape = std::move(shape);
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  check_shape_valid(shape);
  if (shape_product(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(shape));
  }
  auto d = std::make_shared<Data>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() called on non-scalar tensor " + shape_str(shape()));
  }
  return d_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : d_->values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// --- Tape ------------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  for (auto& rec : records_) {
    for (auto& in : rec.inputs) const_cast<Tensor&>(in).grad();
    const_cast<Tensor&>(rec.output).grad();
  }
  const_cast<Tensor&>(loss).grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->backprop();
  }
}

void Tape::replay() const {
  for (const auto& rec : records_) rec.replay();
}

std::string Tape::dump() const {
  std::ostringstream os;
  for (const auto& rec : records_) {
    os << rec.op;
    for (const auto& in : rec.inputs) os << ' ' << shape_str(in.shape());
    os << " -> " << shape_str(rec.output.shape()) << '\n';
  }
  return os.str();
}

// --- kernels and ops -------------------------------------------------------

namespace {

void matmul_kernel(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
  std::fill(C, C + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions of " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not match");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  matmul_kernel(a, b, out);
  maybe_record(
      "matmul", {a, b}, out, [a, b, out]() mutable { matmul_kernel(a, b, out); },
      [a, b, out, m, k, n]() mutable {
        const double* G = grad_of(out).data();
        const double* A = a.data();
        const double* B = b.data();
        double* GA = grad_of(a).data();
        double* GB = grad_of(b).data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = G + i * n;
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            GA[i * k + p] += s;
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = G + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            double* gbrow = GB + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  auto kernel = [](const Tensor& x, Tensor& y) {
    const std::size_t r = x.dim(0), c = x.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) y.at(j * r + i) = x.at(i * c + j);
  };
  kernel(a, out);
  maybe_record(
      "transpose", {a}, out, [a, out, kernel]() mutable { kernel(a, out); },
      [a, out, m, n]() mutable {
        const double* G = grad_of(out).data();
        double* GA = grad_of(a).data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) GA[i * n + j] += G[j * m + i];
      });
  return out;
}

namespace {

Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(double, double, double, double&, double&)) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  auto kernel = [fwd](const Tensor& x, const Tensor& y, Tensor& z) {
    for (std::size_t i = 0; i < x.size(); ++i) z.at(i) = fwd(x.at(i), y.at(i));
  };
  kernel(a, b, out);
  maybe_record(
      name, {a, b}, out, [a, b, out, kernel]() mutable { kernel(a, b, out); },
      [a, b, out, bwd]() mutable {
        const auto& g = out.grad();
        auto& ga = grad_of(a);
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < a.size(); ++i) {
          bwd(a.at(i), b.at(i), g[i], ga[i], gb[i]);
        }
      });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

namespace {

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

void require_rowwise_match(const Tensor& x, const Tensor& v, const char* op) {
  if (v.ndim() != 1 || last_dim(x) != v.dim(0)) {
    throw ShapeError(std::string(op) + ": vector " + shape_str(v.shape()) +
                     " does not match rows of " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_rowwise_match(x, bias, "add_rowwise");
  const std::size_t d = last_dim(x), rows = x.size() / d;
  Tensor out = Tensor::zeros(x.shape());
  auto kernel = [rows, d](const Tensor& a, const Tensor& b, Tensor& z) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) z.at(r * d + j) = a.at(r * d + j) + b.at(j);
  };
  kernel(x, bias, out);
  maybe_record(
      "add_rowwise", {x, bias}, out,
      [x, bias, out, kernel]() mutable { kernel(x, bias, out); },
      [x, bias, out, rows, d]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        auto& gb = grad_of(bias);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += g[r * d + j];
            gb[j] += g[r * d + j];
          }
        }
      });
  return out;
}

Tensor mul_rowwise(const Tensor& x, const Tensor& gate) {
  require_rowwise_match(x, gate, "mul_rowwise");
  const std::size_t d = last_dim(x), rows = x.size() / d;
  Tensor out = Tensor::zeros(x.shape());
  auto kernel = [rows, d](const Tensor& a, const Tensor& v, Tensor& z) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) z.at(r * d + j) = a.at(r * d + j) * v.at(j);
  };
  kernel(x, gate, out);
  maybe_record(
      "mul_rowwise", {x, gate}, out,
      [x, gate, out, kernel]() mutable { kernel(x, gate, out); },
      [x, gate, out, rows, d]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        auto& gv = grad_of(gate);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += g[r * d + j] * gate.at(j);
            gv[j] += g[r * d + j] * x.at(r * d + j);
          }
        }
      });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto kernel = [c](const Tensor& x, Tensor& z) {
    for (std::size_t i = 0; i < x.size(); ++i) z.at(i) = x.at(i) * c;
  };
  kernel(a, out);
  maybe_record(
      "scale", {a}, out, [a, out, kernel]() mutable { kernel(a, out); },
      [a, out, c]() mutable {
        const auto& g = out.grad();
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += c * g[i];
      });
  return out;
}

namespace {

// Shared forward for softmax; mask == nullptr means all positions live.
void softmax_kernel(const Tensor& x, const std::vector<std::uint8_t>* mask, Tensor& out) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * n;
    double* y = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask || (*mask)[j]) mx = std::max(mx, in[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask || (*mask)[j]) {
        y[j] = std::exp(in[j] - mx);
        z += y[j];
      } else {
        y[j] = 0.0;
      }
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
}

void softmax_backprop(const Tensor& x, const Tensor& out,
                      const std::vector<std::uint8_t>* mask) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const auto& g = out.grad();
  auto& gx = const_cast<Tensor&>(x).grad();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* y = out.data() + r * n;
    const double* go = g.data() + r * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += y[j] * go[j];
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[j]) continue;
      gx[r * n + j] += y[j] * (go[j] - acc);
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  softmax_kernel(x, nullptr, out);
  maybe_record(
      "softmax", {x}, out, [x, out]() mutable { softmax_kernel(x, nullptr, out); },
      [x, out]() { softmax_backprop(x, out, nullptr); });
  return out;
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>& key_mask) {
  const std::size_t n = x.shape().back();
  if (key_mask.size() != n) {
    throw ShapeError("masked_softmax: mask length " + std::to_string(key_mask.size()) +
                     " vs last axis " + std::to_string(n));
  }
  if (std::find(key_mask.begin(), key_mask.end(), std::uint8_t{1}) == key_mask.end()) {
    throw ContractError("masked_softmax: every key position is masked");
  }
  auto mask = std::make_shared<std::vector<std::uint8_t>>(key_mask);
  Tensor out = Tensor::zeros(x.shape());
  softmax_kernel(x, mask.get(), out);
  maybe_record(
      "masked_softmax", {x}, out,
      [x, out, mask]() mutable { softmax_kernel(x, mask.get(), out); },
      [x, out, mask]() { softmax_backprop(x, out, mask.get()); });
  return out;
}

namespace {

void layer_norm_kernel(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps, Tensor& out) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * d;
    double* y = out.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = in[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = gain.at(j) * ((in[j] - mean) * inv) + bias.at(j);
    }
  }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rowwise_match(x, gain, "layer_norm");
  require_rowwise_match(x, bias, "layer_norm");
  if (eps <= 0.0) throw ConfigError("layer_norm eps must be positive");
  Tensor out = Tensor::zeros(x.shape());
  layer_norm_kernel(x, gain, bias, eps, out);
  maybe_record(
      "layer_norm", {x, gain, bias}, out,
      [x, gain, bias, eps, out]() mutable { layer_norm_kernel(x, gain, bias, eps, out); },
      [x, gain, bias, eps, out]() mutable {
        const std::size_t d = x.shape().back();
        const std::size_t rows = x.size() / d;
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        auto& ggain = grad_of(gain);
        auto& gbias = grad_of(bias);
        std::vector<double> xhat(d), h(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = x.data() + r * d;
          const double* go = g.data() + r * d;
          double mean = 0.0;
          for (std::size_t j = 0; j < d; ++j) mean += in[j];
          mean /= static_cast<double>(d);
          double var = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double c = in[j] - mean;
            var += c * c;
          }
          var /= static_cast<double>(d);
          const double inv = 1.0 / std::sqrt(var + eps);
          double h_mean = 0.0, hx_mean = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (in[j] - mean) * inv;
            h[j] = gain.at(j) * go[j];
            h_mean += h[j];
            hx_mean += h[j] * xhat[j];
          }
          h_mean /= static_cast<double>(d);
          hx_mean /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            ggain[j] += go[j] * xhat[j];
            gbias[j] += go[j];
            gx[r * d + j] += inv * (h[j] - h_mean - xhat[j] * hx_mean);
          }
        }
      });
  return out;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kSqrt2OverPi = 0.7978845608028653559;

double gelu_forward(double v, GeluKind kind) {
  if (kind == GeluKind::exact) {
    return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  const double u = kSqrt2OverPi * (v + 0.044715 * v * v * v);
  return 0.5 * v * (1.0 + std::tanh(u));
}

double gelu_derivative(double v, GeluKind kind) {
  if (kind == GeluKind::exact) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  }
  const double u = kSqrt2OverPi * (v + 0.044715 * v * v * v);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * v * v);
  return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
}

}  // namespace

Tensor gelu(const Tensor& x, GeluKind kind) {
  Tensor out = Tensor::zeros(x.shape());
  auto kernel = [kind](const Tensor& a, Tensor& z) {
    for (std::size_t i = 0; i < a.size(); ++i) z.at(i) = gelu_forward(a.at(i), kind);
  };
  kernel(x, out);
  maybe_record(
      "gelu", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, kind]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < x.size(); ++i) {
          gx[i] += g[i] * gelu_derivative(x.at(i), kind);
        }
      });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto kernel = [](const Tensor& a, Tensor& z) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double v = a.at(i);
      if (v >= 0.0) {
        z.at(i) = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        z.at(i) = e / (1.0 + e);
      }
    }
  };
  kernel(x, out);
  maybe_record(
      "sigmoid", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double y = out.at(i);
          gx[i] += g[i] * y * (1.0 - y);
        }
      });
  return out;
}

Tensor mean_pool(const Tensor& x) {
  require_2d(x, "mean_pool");
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({d});
  auto kernel = [n, d](const Tensor& a, Tensor& z) {
    for (std::size_t j = 0; j < d; ++j) z.at(j) = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) z.at(j) += a.at(i * d + j);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) z.at(j) *= inv;
  };
  kernel(x, out);
  maybe_record(
      "mean_pool", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, n, d]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * inv;
      });
  return out;
}

Tensor masked_mean_pool(const Tensor& x, const std::vector<std::uint8_t>& row_mask) {
  require_2d(x, "masked_mean_pool");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (row_mask.size() != n) {
    throw ShapeError("masked_mean_pool: mask length " + std::to_string(row_mask.size()) +
                     " vs rows " + std::to_string(n));
  }
  const std::size_t live = static_cast<std::size_t>(
      std::count(row_mask.begin(), row_mask.end(), std::uint8_t{1}));
  if (live == 0) throw ContractError("masked_mean_pool: empty pool, all rows masked");
  auto mask = std::make_shared<std::vector<std::uint8_t>>(row_mask);
  Tensor out = Tensor::zeros({d});
  auto kernel = [n, d, live, mask](const Tensor& a, Tensor& z) {
    for (std::size_t j = 0; j < d; ++j) z.at(j) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(*mask)[i]) continue;
      for (std::size_t j = 0; j < d; ++j) z.at(j) += a.at(i * d + j);
    }
    const double inv = 1.0 / static_cast<double>(live);
    for (std::size_t j = 0; j < d; ++j) z.at(j) *= inv;
  };
  kernel(x, out);
  maybe_record(
      "masked_mean_pool", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, n, d, live, mask]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        const double inv = 1.0 / static_cast<double>(live);
        for (std::size_t i = 0; i < n; ++i) {
          if (!(*mask)[i]) continue;
          for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[j] * inv;
        }
      });
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  auto kernel = [](const Tensor& a, Tensor& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
    z.at(0) = s;
  };
  kernel(x, out);
  maybe_record(
      "sum", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out]() mutable {
        const double g = out.grad()[0];
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
      });
  return out;
}

Tensor sum_squares(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  auto kernel = [](const Tensor& a, Tensor& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i) * a.at(i);
    z.at(0) = s;
  };
  kernel(x, out);
  maybe_record(
      "sum_squares", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out]() mutable {
        const double g = out.grad()[0];
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * x.at(i) * g;
      });
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.dim(0) != b.dim(0)) {
    throw ShapeError("dot: expects equal-length vectors, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({1});
  auto kernel = [](const Tensor& x, const Tensor& y, Tensor& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i) * y.at(i);
    z.at(0) = s;
  };
  kernel(a, b, out);
  maybe_record(
      "dot", {a, b}, out, [a, b, out, kernel]() mutable { kernel(a, b, out); },
      [a, b, out]() mutable {
        const double g = out.grad()[0];
        auto& ga = grad_of(a);
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < a.size(); ++i) {
          ga[i] += g * b.at(i);
          gb[i] += g * a.at(i);
        }
      });
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows given");
  const std::size_t d = rows[0].size();
  for (const auto& r : rows) {
    if (r.ndim() != 1 || r.dim(0) != d) {
      throw ShapeError("stack_rows: rows must all be vectors of length " + std::to_string(d));
    }
  }
  const std::size_t k = rows.size();
  Tensor out = Tensor::zeros({k, d});
  auto kernel = [k, d](const std::vector<Tensor>& rs, Tensor& z) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) z.at(i * d + j) = rs[i].at(j);
  };
  kernel(rows, out);
  maybe_record(
      "stack_rows", rows, out, [rows, out, kernel]() mutable { kernel(rows, out); },
      [rows, out, k, d]() mutable {
        const auto& g = out.grad();
        for (std::size_t i = 0; i < k; ++i) {
          auto& gr = const_cast<Tensor&>(rows[i]).grad();
          for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
        }
      });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts given");
  const std::size_t rows = parts[0].ndim() == 2 ? parts[0].dim(0) : 0;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows) {
      throw ShapeError("concat_cols: parts must be 2-d with equal row counts");
    }
    total += p.dim(1);
  }
  Tensor out = Tensor::zeros({rows, total});
  auto kernel = [rows, total](const std::vector<Tensor>& ps, Tensor& z) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      const std::size_t c = p.dim(1);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < c; ++j) z.at(i * total + off + j) = p.at(i * c + j);
      off += c;
    }
  };
  kernel(parts, out);
  maybe_record(
      "concat_cols", parts, out, [parts, out, kernel]() mutable { kernel(parts, out); },
      [parts, out, rows, total]() mutable {
        const auto& g = out.grad();
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t c = p.dim(1);
          auto& gp = const_cast<Tensor&>(p).grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
          off += c;
        }
      });
  return out;
}

Tensor slice_plane(const Tensor& x, std::size_t i) {
  if (x.ndim() < 2) throw ShapeError("slice_plane: needs at least 2 axes");
  if (i >= x.dim(0)) {
    throw ShapeError("slice_plane: index " + std::to_string(i) + " out of range for " +
                     shape_str(x.shape()));
  }
  Shape sub(x.shape().begin() + 1, x.shape().end());
  const std::size_t plane = x.size() / x.dim(0);
  Tensor out = Tensor::zeros(sub);
  auto kernel = [i, plane](const Tensor& a, Tensor& z) {
    const double* src = a.data() + i * plane;
    std::copy(src, src + plane, z.data());
  };
  kernel(x, out);
  maybe_record(
      "slice_plane", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, i, plane]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] += g[j];
      });
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t count) {
  require_2d(x, "slice_rows");
  if (count == 0 || count > x.dim(0)) {
    throw ShapeError("slice_rows: count " + std::to_string(count) + " out of range for " +
                     shape_str(x.shape()));
  }
  const std::size_t d = x.dim(1);
  Tensor out = Tensor::zeros({count, d});
  auto kernel = [count, d](const Tensor& a, Tensor& z) {
    std::copy(a.data(), a.data() + count * d, z.data());
  };
  kernel(x, out);
  maybe_record(
      "slice_rows", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, count, d]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        for (std::size_t j = 0; j < count * d; ++j) gx[j] += g[j];
      });
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  }
  Tensor out = Tensor::zeros(x.shape());
  auto kernel = [mask](const Tensor& a, Tensor& z) {
    for (std::size_t i = 0; i < a.size(); ++i) z.at(i) = a.at(i) * (*mask)[i];
  };
  kernel(x, out);
  maybe_record(
      "dropout", {x}, out, [x, out, kernel]() mutable { kernel(x, out); },
      [x, out, mask]() mutable {
        const auto& g = out.grad();
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * (*mask)[i];
      });
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor& x,
                        double h) {
  Tensor g = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.at(i);
    x.at(i) = saved + h;
    const double up = f(x);
    x.at(i) = saved - h;
    const double down = f(x);
    x.at(i) = saved;
    g.at(i) = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace bgmhan
