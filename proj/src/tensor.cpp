#include "layerscope/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "layerscope/error.hpp"

namespace layerscope {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

MapC view(const Tensor& t) {
  return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Map view(Tensor& t) {
  return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  for (auto s : shape_) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + layerscope::shape_string(shape_));
  }
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto s : shape_) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + layerscope::shape_string(shape_));
  }
  if (data_.size() != product(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         layerscope::shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return data_.size() / shape_.back();
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return layerscope::shape_string(shape_); }

// ---------------------------------------------------------------- Rng

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

Rng Rng::split(std::uint64_t stream) {
  // splitmix64 finalizer over (next draw, stream) so sibling streams differ.
  std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

Tensor randn(std::vector<std::size_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, stddev);
  return t;
}

// ---------------------------------------------------------------- products

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows() || a.empty() || b.empty()) {
    throw DimensionError("matmul: inner dimensions disagree for " + a.shape_string() + " and " +
                         b.shape_string());
  }
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols() || a.empty() || b.empty()) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " + a.shape_string() + " and " +
                         b.shape_string());
  }
  Tensor out({a.rows(), b.rows()});
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.empty() || b.empty()) {
    throw DimensionError("matmul_tn: inner dimensions disagree for " + a.shape_string() + " and " +
                         b.shape_string());
  }
  Tensor out({a.cols(), b.cols()});
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& acc) {
  if (a.rows() != b.rows() || acc.rows() != a.cols() || acc.cols() != b.cols()) {
    throw DimensionError("matmul_tn_acc: shapes " + a.shape_string() + ", " + b.shape_string() +
                         " -> " + acc.shape_string());
  }
  view(acc).noalias() += view(a).transpose() * view(b);
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  view(out) = view(a).transpose();
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("add_inplace: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (x.size() != y.size()) {
    throw DimensionError("axpy: shape mismatch " + x.shape_string() + " vs " + y.shape_string());
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void add_row_vector(Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols()) {
    throw DimensionError("add_row_vector: bias " + bias.shape_string() + " vs " + a.shape_string());
  }
  view(a).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
}

void sum_rows_acc(const Tensor& a, Tensor& acc) {
  if (acc.size() != a.cols()) {
    throw DimensionError("sum_rows_acc: " + a.shape_string() + " into " + acc.shape_string());
  }
  Map(acc.data(), 1, static_cast<Eigen::Index>(acc.size())) += view(a).colwise().sum();
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- softmax

Tensor softmax_rows(const Tensor& x) { return softmax_rows(x, {}); }

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> valid) {
  if (!valid.empty() && valid.size() != x.cols()) {
    throw DimensionError("softmax_rows: mask length " + std::to_string(valid.size()) +
                         " vs columns " + std::to_string(x.cols()));
  }
  Tensor out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (valid.empty() || valid[c]) mx = std::max(mx, in[c]);
    }
    if (!std::isfinite(mx)) continue;  // no admissible column: leave zeros
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (valid.empty() || valid[c]) {
        o[c] = std::exp(in[c] - mx);
        sum += o[c];
      }
    }
    for (std::size_t c = 0; c < n; ++c) o[c] /= sum;
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Tensor dx(y.shape());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto dyr = dy.row(r);
    const double s = dot(yr, dyr);
    auto out = dx.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (dyr[c] - s);
  }
  return dx;
}

// ---------------------------------------------------------------- layer norm

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias " + gain.shape_string() + "/" + bias.shape_string() +
                         " vs input " + x.shape_string());
  }
  Tensor out(x.shape());
  Tensor normalized(x.shape());
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    auto nr = normalized.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      nr[c] = (in[c] - mean) * is;
      o[c] = gain[c] * nr[c] + bias[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gain, const LayerNormCache& cache,
                           Tensor& dgain, Tensor& dbias) {
  const std::size_t d = dy.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor dx(dy.shape());
  std::vector<double> g(d);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto dyr = dy.row(r);
    auto xh = cache.normalized.row(r);
    double mean_g = 0.0;
    double mean_gx = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dgain[c] += dyr[c] * xh[c];
      dbias[c] += dyr[c];
      g[c] = dyr[c] * gain[c];
      mean_g += g[c];
      mean_gx += g[c] * xh[c];
    }
    mean_g *= inv_d;
    mean_gx *= inv_d;
    auto out = dx.row(r);
    for (std::size_t c = 0; c < d; ++c) out[c] = cache.inv_std[r] * (g[c] - mean_g - xh[c] * mean_gx);
  }
  return dx;
}

// ---------------------------------------------------------------- activations

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  return out;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, Tensor* mask_out) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout rate must be in [0,1)");
  if (rate == 0.0) {
    if (mask_out) *mask_out = Tensor();
    return x;
  }
  Tensor mask(x.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t gold) {
  if (gold >= probs.size()) {
    throw IndexError("cross_entropy: gold class " + std::to_string(gold) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[gold], 1e-12));
}

std::vector<double> softmax_cross_entropy_grad(std::span<const double> probs, std::size_t gold) {
  if (gold >= probs.size()) {
    throw IndexError("softmax_cross_entropy_grad: gold class out of range");
  }
  std::vector<double> g(probs.begin(), probs.end());
  g[gold] -= 1.0;
  return g;
}

// ---------------------------------------------------------------- grad check

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

std::vector<std::size_t> coordinates(std::size_t n, const GradCheckOptions& options, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (options.max_coords_per_block != 0 && n > options.max_coords_per_block) {
    rng.shuffle(idx);
    idx.resize(options.max_coords_per_block);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& gradient,
                  std::span<const double> point, const GradCheckOptions& options) {
  std::vector<double> x(point.begin(), point.end());
  const std::vector<double> analytic = gradient(x);
  if (analytic.size() != x.size()) throw DimensionError("grad_check: gradient length mismatch");
  Rng rng(options.seed);
  double worst = 0.0;
  for (std::size_t i : coordinates(x.size(), options, rng)) {
    const double orig = x[i];
    x[i] = orig + options.step;
    const double fp = f(x);
    x[i] = orig - options.step;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * options.step);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

double grad_check(const std::function<double()>& loss, const std::vector<std::span<double>>& params,
                  const std::vector<std::span<const double>>& analytic,
                  const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw DimensionError("grad_check: block count mismatch");
  Rng rng(options.seed);
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto block = params[b];
    if (block.size() != analytic[b].size()) throw DimensionError("grad_check: block size mismatch");
    for (std::size_t i : coordinates(block.size(), options, rng)) {
      const double orig = block[i];
      block[i] = orig + options.step;
      const double fp = loss();
      block[i] = orig - options.step;
      const double fm = loss();
      block[i] = orig;
      const double numeric = (fp - fm) / (2.0 * options.step);
      worst = std::max(worst, relative_error(analytic[b][i], numeric));
    }
  }
  return worst;
}

}  // namespace layerscope
