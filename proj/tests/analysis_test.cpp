#include "layerscope/analysis.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>

#include "layerscope/error.hpp"

using namespace layerscope;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return randn({n, d}, 1.0, rng);
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

// Gaussian blobs in `d` dims with `k` centres spaced `gap` apart.
Tensor blobs(std::size_t per, std::size_t k, std::size_t d, double gap, std::vector<std::size_t>& truth,
             std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({per * k, d});
  truth.clear();
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t r = c * per + i;
      for (std::size_t j = 0; j < d; ++j) x(r, j) = rng.normal() + (j == c % d ? gap * (1.0 + c / d) : 0.0);
      truth.push_back(c);
    }
  }
  return x;
}

}  // namespace

TEST(Jacobi, DiagonalAndKnown2x2) {
  auto e = jacobi_eigen(Tensor::matrix({{2, 1}, {1, 2}}));
  EXPECT_NEAR(e.values[0], 3.0, 1e-12);
  EXPECT_NEAR(e.values[1], 1.0, 1e-12);
  EXPECT_NEAR(e.vectors(0, 0), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(e.vectors(1, 0), std::sqrt(0.5), 1e-12);
  EXPECT_THROW(jacobi_eigen(Tensor({2, 3})), DimensionError);
}

TEST(Pca, MatchesEigenSolverOnRandomData) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_matrix(10, 8, seed);
    const auto r = pca(x, 3);
    Eigen::MatrixXd m = to_eigen(x);
    Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    Eigen::MatrixXd cov = c.transpose() * c / 9.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (int i = 0; i < 8; ++i) EXPECT_NEAR(r.eigenvalues[i], es.eigenvalues()(7 - i), 1e-8) << seed;
    // Subspace check: the cosine of each principal angle is 1.
    Eigen::MatrixXd ours = to_eigen(r.components).transpose();
    Eigen::MatrixXd ref = es.eigenvectors().rightCols(3);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ours.transpose() * ref);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(svd.singularValues()(i), 1.0, 1e-6) << seed;
  }
}

TEST(Pca, CollinearDataHasOneComponent) {
  Tensor x({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    x(i, 0) = double(i);
    x(i, 1) = 2.0 * double(i);
    x(i, 2) = -double(i);
  }
  const auto r = pca(x, 2);
  EXPECT_NEAR(r.explained_ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(r.explained_ratio[1], 0.0, 1e-12);
  const double s = std::sqrt(6.0);
  EXPECT_NEAR(r.components(0, 0), 1 / s, 1e-12);
  EXPECT_NEAR(r.components(0, 1), 2 / s, 1e-12);  // largest entry positive
  EXPECT_NEAR(r.components(0, 2), -1 / s, 1e-12);
}

TEST(Pca, KnownVarianceRatios) {
  // Covariance diag(4, 1): points (+-2, 0) and (0, +-1) scaled for n-1.
  const Tensor x = Tensor::matrix({{2, 0}, {-2, 0}, {0, 1}, {0, -1}});
  const auto r = pca(x, 2);
  EXPECT_NEAR(r.eigenvalues[0], 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.explained_ratio[0], 0.8, 1e-12);
  EXPECT_NEAR(r.explained_ratio[1], 0.2, 1e-12);
}

TEST(Pca, CoordsAreCenteredAndReconstructFullRank) {
  const Tensor x = random_matrix(12, 4, 99);
  const auto r = pca(x, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0;
    for (std::size_t i = 0; i < 12; ++i) m += r.coords(i, c);
    EXPECT_NEAR(m, 0.0, 1e-12);
  }
  const Tensor back = matmul(r.coords, r.components);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(back(i, c) + r.mean[c], x(i, c), 1e-10);
}

TEST(Pca, RotationLeavesEigenvaluesUnchanged) {
  const Tensor x = random_matrix(15, 3, 5);
  const double a = 0.7;
  const Tensor rot = Tensor::matrix({{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}});
  const auto r1 = pca(x, 2), r2 = pca(matmul(x, rot), 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r1.eigenvalues[i], r2.eigenvalues[i], 1e-10);
}

TEST(Pca, RejectsDegenerateInputs) {
  EXPECT_THROW(pca(Tensor::matrix({{1, 2}, {1, 2}, {1, 2}}), 2), DegenerateDataError);
  EXPECT_THROW(pca(Tensor::matrix({{1, 2}}), 1), ParameterError);
  EXPECT_THROW(pca(random_matrix(5, 3, 1), 4), ParameterError);
}

TEST(Ica, RecoversMixedLogisticSources) {
  Rng rng(3);
  const std::size_t n = 2000;
  Tensor s({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double u = std::clamp(rng.uniform(), 1e-12, 1 - 1e-12);
      s(i, c) = std::log(u / (1 - u));
    }
  }
  const Tensor mix = Tensor::matrix({{1.0, 0.5}, {0.3, 1.0}});
  const auto r = fastica(matmul_nt(s, mix), 2, 1);
  EXPECT_TRUE(r.converged);
  auto corr = [&](std::size_t a, std::size_t b) {
    Eigen::MatrixXd y = to_eigen(r.coords), src = to_eigen(s);
    Eigen::VectorXd u = y.col(a).array() - y.col(a).mean(), v = src.col(b).array() - src.col(b).mean();
    return std::abs(u.dot(v) / (u.norm() * v.norm()));
  };
  const double direct = std::min(corr(0, 0), corr(1, 1));
  const double swapped = std::min(corr(0, 1), corr(1, 0));
  EXPECT_GT(std::max(direct, swapped), 0.95);
  const Tensor wwt = matmul_nt(r.unmixing, r.unmixing);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(wwt(i, j), i == j ? 1.0 : 0.0, 1e-9);
}

TEST(Ica, GaussianDataWarnsButReturns) {
  const auto r = fastica(random_matrix(400, 3, 8), 2, 0, 1e-12, 5);
  EXPECT_FALSE(r.converged);
  EXPECT_NE(r.warning.find("did not converge"), std::string::npos);
  EXPECT_EQ(r.coords.rows(), 400u);
}

TEST(Tsne, CalibratedEntropyMatchesPerplexity) {
  const Tensor x = random_matrix(60, 5, 11);
  for (double perp : {5.0, 15.0}) {
    std::vector<double> h;
    const Tensor p = tsne_conditional_affinities(x, perp, &h);
    for (std::size_t i = 0; i < 60; ++i) {
      EXPECT_NEAR(h[i], std::log2(perp), 1e-4);
      double sum = 0;
      for (std::size_t j = 0; j < 60; ++j) sum += p(i, j);
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_EQ(p(i, i), 0.0);
    }
  }
  EXPECT_THROW(tsne_conditional_affinities(x, 60.0), ParameterError);
}

TEST(Tsne, SeparatesBlobsAndConverges) {
  std::vector<std::size_t> truth;
  const Tensor x = blobs(25, 3, 10, 8.0, truth, 2);
  TsneOptions opt;
  opt.perplexity = 10;
  opt.seed = 4;
  const auto r = tsne(x, opt);
  ASSERT_EQ(r.kl.size(), opt.iterations);
  const auto c = kmeans(r.coords, 3, 0);
  EXPECT_GE(adjusted_rand_index(c.labels, truth), 0.9);
  for (std::size_t i = opt.exaggeration_iters; i + 1 < r.kl.size(); ++i) EXPECT_LE(r.kl[i + 1], r.kl[i]);
  // Deterministic under a fixed seed.
  EXPECT_EQ(tsne(x, opt).coords.values()[0], r.coords.values()[0]);
}

TEST(Kmeans, FourPointsMatchExhaustiveOptimum) {
  const Tensor x = Tensor::matrix({{0}, {1}, {10}, {11}});
  const auto r = kmeans(x, 2, 7);
  std::set<double> cents{r.centroids(0, 0), r.centroids(1, 0)};
  EXPECT_EQ(cents, (std::set<double>{0.5, 10.5}));
  EXPECT_DOUBLE_EQ(r.inertia, 1.0);
  // Exhaustive search over all 2-partitions.
  double best = 1e300;
  for (int mask = 1; mask < 15; ++mask) {
    double s[2] = {0, 0}, q[2] = {0, 0}, n[2] = {0, 0};
    for (int i = 0; i < 4; ++i) {
      const int g = (mask >> i) & 1;
      s[g] += x(i, 0);
      q[g] += x(i, 0) * x(i, 0);
      ++n[g];
    }
    best = std::min(best, q[0] - s[0] * s[0] / n[0] + q[1] - s[1] * s[1] / n[1]);
  }
  EXPECT_DOUBLE_EQ(r.inertia, best);
}

TEST(Kmeans, EdgeCounts) {
  const Tensor x = Tensor::matrix({{0, 0}, {0, 0}, {1, 1}, {3, 3}});
  const auto all = kmeans(x, 4, 1);
  EXPECT_EQ(std::set<std::size_t>(all.labels.begin(), all.labels.end()).size(), 3u);
  EXPECT_DOUBLE_EQ(all.inertia, 0.0);
  const auto one = kmeans(x, 1, 1);
  EXPECT_EQ(one.labels, (std::vector<std::size_t>{0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(one.centroids(0, 0), 1.0);
  EXPECT_THROW(kmeans(x, 5, 1), ParameterError);
  EXPECT_THROW(kmeans(x, 0, 1), ParameterError);
}

TEST(Kmeans, InertiaNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = kmeans(random_matrix(80, 3, seed), 5, seed);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
    }
    EXPECT_EQ(r.inertia, r.inertia_history.back());
  }
}

TEST(Ari, HandComputedValue) {
  // Contingency [[2,1],[0,3]]: index 4, row pairs 6, column pairs 7.
  // expected = 42/15 = 2.8, max = 6.5  ->  1.2 / 3.7.
  EXPECT_NEAR(adjusted_rand_index({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 1, 1}), 1.2 / 3.7, 1e-12);
}

TEST(Ari, IdentityRelabelingAndTrivial) {
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 2}, {2, 2, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 0}, {0, 0, 0}), 1.0);
  EXPECT_THROW(adjusted_rand_index({0, 1}, {0}), DimensionError);
}

TEST(Ari, RandomPartitionsNearZero) {
  Rng rng(17);
  std::vector<std::size_t> a, b;
  for (int i = 0; i < 1000; ++i) {
    a.push_back(rng.index(4));
    b.push_back(rng.index(5));
  }
  EXPECT_LE(std::abs(adjusted_rand_index(a, b)), 0.05);
}

TEST(Analyze, LayerProjectionCoversNonPadTokens) {
  GeneratorConfig g;
  g.seed = 2;
  auto lex = Lexicon::build(g);
  auto samples = generate(g, 1);
  auto ex = encode(samples[0], lex, HeadKind::span, 128);
  ModelConfig mc;
  mc.n_layers = 2;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.d_ff = 32;
  mc.vocab_size = lex.size();
  Model m(mc);
  const auto trace = forward_with_trace(m, ex.input);
  std::size_t live = 0;
  for (auto v : ex.input.attention_mask) live += v;
  for (auto method : {ProjectionMethod::pca, ProjectionMethod::ica, ProjectionMethod::tsne}) {
    const auto layers = analyze_trace(trace, lex, method, std::nullopt, 3);
    ASSERT_EQ(layers.size(), 3u);
    for (const auto& l : layers) {
      EXPECT_EQ(l.projection.points.size(), live);
      EXPECT_EQ(l.clusters_full.centroids.rows(), default_k(ex.input));
      EXPECT_GE(l.ari, -1.0);
      EXPECT_LE(l.ari, 1.0);
    }
    const auto csv = projection_csv(layers);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,token_index,token,role,sentence,x,y,cluster");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(3 * live + 1));
  }
  EXPECT_EQ(default_k(ex.input), 4u);
  EXPECT_THROW(analyze_layer(trace, 3, lex), IndexError);
  EXPECT_EQ(projection_method_from_string("tsne"), ProjectionMethod::tsne);
  EXPECT_THROW(projection_method_from_string("umap"), ParameterError);
}
