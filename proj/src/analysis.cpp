#include "layerscope/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "layerscope/error.hpp"

namespace layerscope {

// ---------------------------------------------------------------- eigen

SymmetricEigen jacobi_eigen(const Tensor& symmetric, double tol, std::size_t max_sweeps) {
  const std::size_t n = symmetric.rows();
  if (symmetric.rank() != 2 || symmetric.cols() != n) {
    throw DimensionError("jacobi_eigen: expected a square matrix, got " + symmetric.shape_string());
  }
  Tensor a = symmetric;
  Tensor v = Tensor::identity(n);
  const double scale = std::max(frobenius_norm(a), std::numeric_limits<double>::min());
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.vectors = Tensor({n, n});
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values.push_back(a(src, src));
    std::size_t arg = 0;
    for (std::size_t r = 1; r < n; ++r) {
      if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
    }
    const double sign = v(arg, src) < 0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

// ---------------------------------------------------------------- PCA

namespace {

Tensor centered(const Tensor& x, std::vector<double>& mean) {
  const std::size_t n = x.rows(), d = x.cols();
  mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x(r, c);
  for (auto& m : mean) m /= static_cast<double>(n);
  Tensor out = x;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) -= mean[c];
  return out;
}

}  // namespace

PcaResult pca(const Tensor& x, std::size_t out_dims) {
  const std::size_t n = x.rows(), d = x.cols();
  if (x.rank() != 2 || n < 2) throw ParameterError("pca: need at least 2 vectors");
  if (out_dims < 1 || out_dims > std::min(n, d)) {
    throw ParameterError("pca: out_dims " + std::to_string(out_dims) + " exceeds min(n, d) = " +
                         std::to_string(std::min(n, d)));
  }
  PcaResult r;
  const Tensor xc = centered(x, r.mean);
  Tensor cov = matmul_tn(xc, xc);
  cov = scale(cov, 1.0 / static_cast<double>(n - 1));
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) total += cov(i, i);
  if (!(total > 1e-300)) throw DegenerateDataError("pca: all vectors are identical (zero variance)");
  auto eig = jacobi_eigen(cov);
  r.eigenvalues = eig.values;
  r.components = Tensor({out_dims, d});
  for (std::size_t k = 0; k < out_dims; ++k) {
    for (std::size_t c = 0; c < d; ++c) r.components(k, c) = eig.vectors(c, k);
    r.explained_ratio.push_back(std::max(0.0, eig.values[k]) / total);
  }
  r.coords = matmul_nt(xc, r.components);
  return r;
}

// ---------------------------------------------------------------- ICA

namespace {

// (W W^T)^{-1/2} W
Tensor symmetric_decorrelation(const Tensor& w) {
  const auto eig = jacobi_eigen(matmul_nt(w, w));
  const std::size_t k = w.rows();
  Tensor inv_sqrt({k, k});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t m = 0; m < k; ++m) {
        s += eig.vectors(i, m) * eig.vectors(j, m) / std::sqrt(std::max(eig.values[m], 1e-300));
      }
      inv_sqrt(i, j) = s;
    }
  }
  return matmul(inv_sqrt, w);
}

}  // namespace

IcaResult fastica(const Tensor& x, std::size_t out_dims, std::uint64_t seed, double tol, std::size_t max_iter) {
  const std::size_t n = x.rows(), d = x.cols();
  const auto p = pca(x, out_dims);
  const std::size_t k = out_dims;
  IcaResult r;
  r.whitening = Tensor({d, k});
  for (std::size_t j = 0; j < k; ++j) {
    const double ev = p.eigenvalues[j];
    if (!(ev > 1e-12)) throw DegenerateDataError("fastica: fewer than out_dims directions with variance");
    for (std::size_t c = 0; c < d; ++c) r.whitening(c, j) = p.components(j, c) / std::sqrt(ev);
  }
  std::vector<double> mean;
  const Tensor z = matmul(centered(x, mean), r.whitening);  // n x k

  Rng rng(seed);
  Tensor w = symmetric_decorrelation(randn({k, k}, 1.0, rng));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const Tensor proj = matmul_nt(z, w);  // n x k, column j = w_j . z
    Tensor next({k, k});
    for (std::size_t j = 0; j < k; ++j) {
      double mean_dg = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = std::tanh(proj(i, j));
        mean_dg += 1.0 - g * g;
        for (std::size_t c = 0; c < k; ++c) next(j, c) += z(i, c) * g;
      }
      mean_dg *= inv_n;
      for (std::size_t c = 0; c < k; ++c) next(j, c) = next(j, c) * inv_n - mean_dg * w(j, c);
    }
    next = symmetric_decorrelation(next);
    double change = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double dotp = 0.0;
      for (std::size_t c = 0; c < k; ++c) dotp += next(j, c) * w(j, c);
      change = std::max(change, 1.0 - std::abs(dotp));
    }
    w = next;
    r.iterations = it;
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged) {
    r.warning = "fastica did not converge after " + std::to_string(r.iterations) + " iterations (tol " +
                std::to_string(tol) + "); returning the last iterate";
  }
  r.unmixing = w;
  r.coords = matmul_nt(z, w);
  return r;
}

// ---------------------------------------------------------------- t-SNE

namespace {

Tensor squared_distances(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double t = x(i, c) - x(j, c);
        s += t * t;
      }
      out(i, j) = out(j, i) = s;
    }
  }
  return out;
}

}  // namespace

Tensor tsne_conditional_affinities(const Tensor& x, double perplexity, std::vector<double>* entropies) {
  const std::size_t n = x.rows();
  if (n < 4) throw ParameterError("tsne: need at least 4 points");
  if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
    throw ParameterError("tsne: perplexity " + std::to_string(perplexity) + " must be in (0, n=" +
                         std::to_string(n) + ")");
  }
  const Tensor d2 = squared_distances(x);
  const double target = std::log2(perplexity);
  Tensor p({n, n});
  if (entropies) entropies->assign(n, 0.0);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = 0.0;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int step = 0; step < 200; ++step) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
        sum += row[j];
        weighted += row[j] * (d2(i, j) - dmin);
      }
      // Shannon entropy in nats: log(sum) + beta * E[d], converted to bits.
      h = (std::log(sum) + beta * weighted / sum) / std::log(2.0);
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    for (std::size_t j = 0; j < n; ++j) p(i, j) = row[j];
    if (entropies) (*entropies)[i] = h;
  }
  return p;
}

namespace {

// Student-t kernel (1 + |yi - yj|^2)^-1 into `num`; returns its total.
double student_kernel(const Tensor& y, Tensor& num) {
  const std::size_t n = y.rows();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      const double v = 1.0 / (1.0 + dx * dx + dy * dy);
      num(i, j) = num(j, i) = v;
      z += 2.0 * v;
    }
  }
  return z;
}

double kl_divergence(const Tensor& p, const Tensor& num, double z) {
  const std::size_t n = p.rows();
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      kl += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / z, 1e-12));
    }
  }
  return kl;
}

void center(Tensor& y) {
  const std::size_t n = y.rows();
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += y(i, 0);
    m1 += y(i, 1);
  }
  m0 /= static_cast<double>(n);
  m1 /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    y(i, 0) -= m0;
    y(i, 1) -= m1;
  }
}

}  // namespace

TsneResult tsne(const Tensor& x, const TsneOptions& options) {
  const std::size_t n = x.rows();
  TsneResult out;
  const Tensor cond = tsne_conditional_affinities(x, options.perplexity, &out.entropies);
  Tensor p({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p(i, j) = std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), 1e-12);

  Rng rng(options.seed);
  Tensor y = randn({n, 2}, 1e-4, rng);
  Tensor velocity({n, 2});
  Tensor gains({n, 2}, 1.0);
  Tensor num({n, n});
  double z = student_kernel(y, num);
  double kl = kl_divergence(p, num, z);
  double step_scale = 1.0;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const bool exaggerate = it < options.exaggeration_iters;
    const double ex = exaggerate ? options.early_exaggeration : 1.0;
    const double momentum = exaggerate ? 0.5 : 0.8;
    const Tensor prev_y = y, prev_gains = gains;
    for (std::size_t i = 0; i < n; ++i) {
      double g0 = 0.0, g1 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(num(i, j) / z, 1e-12);
        const double m = (ex * p(i, j) - q) * num(i, j);
        g0 += m * (y(i, 0) - y(j, 0));
        g1 += m * (y(i, 1) - y(j, 1));
      }
      const double grad[2] = {4.0 * g0, 4.0 * g1};
      for (std::size_t c = 0; c < 2; ++c) {
        double& gain = gains(i, c);
        double& vel = velocity(i, c);
        gain = (grad[c] > 0) != (vel > 0) ? gain + 0.2 : std::max(gain * 0.8, 0.01);
        vel = momentum * vel - step_scale * options.learning_rate * gain * grad[c];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      y(i, 0) += velocity(i, 0);
      y(i, 1) += velocity(i, 1);
    }
    center(y);
    const double z_new = student_kernel(y, num);
    const double kl_new = kl_divergence(p, num, z_new);
    if (!exaggerate && kl_new > kl) {
      // Restart: reject the step, drop momentum and shrink the step size.
      y = prev_y;
      velocity = Tensor({n, 2});
      gains = prev_gains;
      step_scale *= 0.5;
      z = student_kernel(y, num);
    } else {
      z = z_new;
      kl = kl_new;
      step_scale = std::min(1.0, step_scale * 1.1);
    }
    out.kl.push_back(kl);
  }
  out.coords = y;
  return out;
}

// ---------------------------------------------------------------- k-means

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Nearest centroid, ties to the lowest index.
std::pair<std::size_t, double> nearest(std::span<const double> point, const Tensor& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sq_dist(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

}  // namespace

ClusterAssignment kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  const std::size_t n = x.rows(), d = x.cols();
  if (k < 1 || k > n) {
    throw ParameterError("kmeans: k=" + std::to_string(k) + " must be in [1, n=" + std::to_string(n) + "]");
  }
  Rng rng(seed);
  ClusterAssignment out;
  out.centroids = Tensor({k, d});
  std::vector<std::size_t> chosen;
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  chosen.push_back(rng.index(n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], sq_dist(x.row(i), x.row(chosen.back())));
      total += dist[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= 0.0) continue;
        pick = i;
        u -= dist[i];
        if (u < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) pick = i;
      }
    }
    chosen.push_back(pick);
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto src = x.row(chosen[c]);
    std::copy(src.begin(), src.end(), out.centroids.row(c).begin());
  }

  out.labels.assign(n, 0);
  std::vector<double> point_dist(n, 0.0);
  bool first = true;
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [c, dd] = nearest(x.row(i), out.centroids);
      if (first || c != out.labels[i]) changed = true;
      out.labels[i] = c;
      point_dist[i] = dd;
    }
    first = false;
    out.inertia = std::accumulate(point_dist.begin(), point_dist.end(), 0.0);
    out.iterations = it + 1;
    if (!changed) break;
    out.inertia_history.push_back(out.inertia);

    Tensor sums({k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      auto dst = sums.row(out.labels[i]);
      for (std::size_t c = 0; c < d; ++c) dst[c] += row[c];
      ++counts[out.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed an empty cluster at the point farthest from its centroid.
        const auto far = static_cast<std::size_t>(std::max_element(point_dist.begin(), point_dist.end()) -
                                                  point_dist.begin());
        auto src = x.row(far);
        std::copy(src.begin(), src.end(), out.centroids.row(c).begin());
        point_dist[far] = 0.0;
        continue;
      }
      auto dst = out.centroids.row(c);
      auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  out.inertia_history.push_back(out.inertia);
  return out;
}

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("adjusted_rand_index: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                         " points");
  }
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  const std::size_t ka = *std::max_element(a.begin(), a.end()) + 1;
  const std::size_t kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<double> table(ka * kb, 0.0), rows(ka, 0.0), cols(kb, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ++table[a[i] * kb + b[i]];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  auto c2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (double v : table) index += c2(v);
  for (double v : rows) sum_a += c2(v);
  for (double v : cols) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double cluster_agreement(const ClusterAssignment& a, const ClusterAssignment& b) {
  return adjusted_rand_index(a.labels, b.labels);
}

// ---------------------------------------------------------------- layers

std::string to_string(ProjectionMethod m) {
  switch (m) {
    case ProjectionMethod::pca: return "pca";
    case ProjectionMethod::ica: return "ica";
    case ProjectionMethod::tsne: return "tsne";
  }
  return "?";
}

ProjectionMethod projection_method_from_string(const std::string& s) {
  if (s == "pca") return ProjectionMethod::pca;
  if (s == "ica") return ProjectionMethod::ica;
  if (s == "tsne") return ProjectionMethod::tsne;
  throw ParameterError("unknown projection '" + s + "' (expected pca|ica|tsne)");
}

RoleClass role_class(TokenRole role) {
  switch (role) {
    case TokenRole::answer: return RoleClass::answer;
    case TokenRole::question: return RoleClass::question;
    case TokenRole::supporting_fact: return RoleClass::supporting_fact;
    default: return RoleClass::other;
  }
}

std::string to_string(RoleClass r) {
  switch (r) {
    case RoleClass::answer: return "answer";
    case RoleClass::question: return "question";
    case RoleClass::supporting_fact: return "supporting-fact";
    case RoleClass::other: return "other";
  }
  return "?";
}

std::size_t default_k(const EncodedInput& input) {
  bool seen[4] = {false, false, false, false};
  for (std::size_t i = 0; i < input.length(); ++i) {
    if (input.attention_mask[i]) seen[static_cast<int>(role_class(input.roles[i]))] = true;
  }
  return static_cast<std::size_t>(std::count(std::begin(seen), std::end(seen), true));
}

LayerAnalysis analyze_layer(const HiddenStateTrace& trace, std::size_t layer, const Lexicon& lexicon,
                            ProjectionMethod method, std::optional<std::size_t> k, std::uint64_t seed) {
  if (layer >= trace.layers.size()) throw IndexError("analyze_layer: layer " + std::to_string(layer) + " out of range");
  const auto& input = trace.input;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < input.length(); ++i) {
    if (input.attention_mask[i]) positions.push_back(i);
  }
  const Tensor& h = trace.layers[layer];
  Tensor x({positions.size(), h.cols()});
  for (std::size_t r = 0; r < positions.size(); ++r) {
    auto src = h.row(positions[r]);
    std::copy(src.begin(), src.end(), x.row(r).begin());
  }

  LayerAnalysis out;
  out.layer = layer;
  Tensor coords;
  switch (method) {
    case ProjectionMethod::pca: {
      auto p = pca(x, 2);
      coords = std::move(p.coords);
      out.explained_ratio = p.explained_ratio;
      break;
    }
    case ProjectionMethod::ica: {
      auto r = fastica(x, 2, seed);
      coords = std::move(r.coords);
      out.warning = r.warning;
      break;
    }
    case ProjectionMethod::tsne: {
      TsneOptions opt;
      opt.seed = seed;
      opt.perplexity = std::min(opt.perplexity, std::max(1.0, (static_cast<double>(positions.size()) - 1.0) / 3.0));
      coords = tsne(x, opt).coords;
      break;
    }
  }
  const std::size_t clusters = std::min(positions.size(), k.value_or(std::max<std::size_t>(1, default_k(input))));
  out.clusters_full = kmeans(x, clusters, seed);
  out.clusters_2d = kmeans(coords, clusters, seed);
  out.ari = cluster_agreement(out.clusters_full, out.clusters_2d);

  const auto sentences = sentence_indices(input, lexicon);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const std::size_t pos = positions[r];
    ProjectedPoint pt;
    pt.layer = layer;
    pt.token_index = pos;
    pt.token = lexicon.token(input.token_ids[pos]);
    pt.role = input.roles[pos];
    pt.sentence = sentences[pos];
    pt.x = coords(r, 0);
    pt.y = coords(r, 1);
    pt.cluster = out.clusters_full.labels[r];
    out.projection.points.push_back(std::move(pt));
  }
  return out;
}

std::vector<LayerAnalysis> analyze_trace(const HiddenStateTrace& trace, const Lexicon& lexicon,
                                         ProjectionMethod method, std::optional<std::size_t> k, std::uint64_t seed) {
  std::vector<LayerAnalysis> out;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) out.push_back(analyze_layer(trace, l, lexicon, method, k, seed));
  return out;
}

std::string projection_csv(const std::vector<LayerAnalysis>& layers) {
  std::ostringstream os;
  os << "layer,token_index,token,role,sentence,x,y,cluster\n";
  char buf[64];
  for (const auto& l : layers) {
    for (const auto& p : l.projection.points) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g", p.x, p.y);
      os << p.layer << ',' << p.token_index << ',' << p.token << ',' << to_string(p.role) << ',' << p.sentence << ','
         << buf << ',' << p.cluster << '\n';
    }
  }
  return os.str();
}

}  // namespace layerscope
