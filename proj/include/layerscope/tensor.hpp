#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace layerscope {

// 64-byte aligned storage: vectorized reductions peel a scalar head that
// depends on the address, so unaligned buffers would make sums vary from
// run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

// Dense row-major array of doubles. Rank-1 and rank-2 are what the rest of
// the library uses; higher ranks are accepted and treated as
// rows() x cols() with cols() being the last axis.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t cols() const;
  std::size_t rows() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double, AlignedAllocator<double>> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Seeded generator passed explicitly to everything that draws random numbers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  std::size_t index(std::size_t n);        // uniform in [0, n)
  std::uint64_t next_u64() { return engine_(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  // Derives an independent stream, e.g. one per grid cell or worker.
  Rng split(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

Tensor randn(std::vector<std::size_t> shape, double stddev, Rng& rng);

// ---- matrix products (rank-2 views; a rank-N tensor is rows() x cols()) ----
Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
// acc += a^T * b, used for weight gradients.
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& acc);

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
// Adds a length-cols vector to every row.
void add_row_vector(Tensor& a, const Tensor& bias);
// acc[c] += sum over rows of a[r, c]
void sum_rows_acc(const Tensor& a, Tensor& acc);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// ---- activations and normalization ----

// Row-wise softmax with max subtraction. `valid` (optional, length cols)
// marks admissible columns; excluded columns receive exactly 0.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> valid);
// Given y = softmax(x) and dL/dy, returns dL/dx row-wise.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

struct LayerNormCache {
  Tensor normalized;          // x-hat
  std::vector<double> inv_std;  // one per row
};

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5,
                  LayerNormCache* cache = nullptr);
// Returns dL/dx and accumulates dL/dgain, dL/dbias.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormCache& cache,
                           Tensor& dgain, Tensor& dbias);

Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// Inverted dropout. Returns the mask already scaled by 1/(1-rate); rate 0
// yields an empty mask and leaves x untouched.
Tensor dropout(const Tensor& x, double rate, Rng& rng, Tensor* mask_out);

// -ln(max(probs[gold], 1e-12)).
double cross_entropy(std::span<const double> probs, std::size_t gold);
// Gradient of cross_entropy(softmax(logits), gold) wrt the logits.
std::vector<double> softmax_cross_entropy_grad(std::span<const double> probs, std::size_t gold);

// ---- finite-difference gradient checking ----

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise this many sampled coordinates per
  // parameter block.
  std::size_t max_coords_per_block = 0;
  std::uint64_t seed = 0;
};

// Function-on-vector form: compares `gradient(point)` with central
// differences of `f` around `point`. Returns the max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& gradient,
                  std::span<const double> point, const GradCheckOptions& options = {});

// In-place form for models: each block in `params` is perturbed directly and
// `loss` re-evaluated. `analytic` must be aligned with `params`.
double grad_check(const std::function<double()>& loss, const std::vector<std::span<double>>& params,
                  const std::vector<std::span<const double>>& analytic,
                  const GradCheckOptions& options = {});

}  // namespace layerscope
