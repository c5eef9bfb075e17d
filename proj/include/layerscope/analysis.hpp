#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "layerscope/encoder.hpp"
#include "layerscope/synthgen.hpp"
#include "layerscope/tensor.hpp"

namespace layerscope {

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues descending; vectors are the columns of `vectors`.
struct SymmetricEigen {
  std::vector<double> values;
  Tensor vectors;
};
SymmetricEigen jacobi_eigen(const Tensor& symmetric, double tol = 1e-14, std::size_t max_sweeps = 100);

struct PcaResult {
  Tensor coords;      // n x k
  Tensor components;  // k x d, orthonormal rows
  std::vector<double> mean;
  std::vector<double> eigenvalues;  // all d, descending (sample covariance)
  std::vector<double> explained_ratio;  // first k
};

// Mean-centering plus covariance eigendecomposition. Each component is
// signed so that its largest-magnitude entry is positive.
PcaResult pca(const Tensor& x, std::size_t out_dims = 2);

struct IcaResult {
  Tensor coords;     // n x k unmixed signals
  Tensor unmixing;   // k x k, acting on whitened data
  Tensor whitening;  // d x k
  std::size_t iterations = 0;
  bool converged = false;
  std::string warning;
};

// FastICA: PCA whitening, logcosh contrast, symmetric decorrelation.
IcaResult fastica(const Tensor& x, std::size_t out_dims = 2, std::uint64_t seed = 0, double tol = 1e-4,
                  std::size_t max_iter = 200);

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
};

struct TsneResult {
  Tensor coords;                 // n x 2
  std::vector<double> kl;        // KL(P||Q) after each iteration
  std::vector<double> entropies;  // per-point conditional entropy in bits
};

// Row-conditional affinities p(j|i) calibrated by binary search on the
// Gaussian precision; entropies in bits.
Tensor tsne_conditional_affinities(const Tensor& x, double perplexity, std::vector<double>* entropies = nullptr);
// Exact gradient descent with momentum and gains. After the exaggeration
// phase a step that raises KL is rejected and momentum restarts.
TsneResult tsne(const Tensor& x, const TsneOptions& options = {});

struct ClusterAssignment {
  std::vector<std::size_t> labels;
  Tensor centroids;  // k x d
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each Lloyd iteration
  std::size_t iterations = 0;
};

// k-means++ seeding and Lloyd iterations to an assignment fixpoint.
ClusterAssignment kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);

double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
double cluster_agreement(const ClusterAssignment& a, const ClusterAssignment& b);

// ---- per-layer token analysis ----

enum class ProjectionMethod { pca, ica, tsne };
std::string to_string(ProjectionMethod m);
ProjectionMethod projection_method_from_string(const std::string& s);

// Role buckets used for plotting and the default k.
enum class RoleClass { answer, question, supporting_fact, other };
RoleClass role_class(TokenRole role);
std::string to_string(RoleClass r);

struct ProjectedPoint {
  std::size_t layer = 0;
  std::size_t token_index = 0;
  std::string token;
  TokenRole role = TokenRole::context;
  int sentence = -1;
  double x = 0.0, y = 0.0;
  std::size_t cluster = 0;  // k-means on the full-dimensional vectors
};

struct Projection2D {
  std::vector<ProjectedPoint> points;
};

struct LayerAnalysis {
  std::size_t layer = 0;
  Projection2D projection;
  ClusterAssignment clusters_full;
  ClusterAssignment clusters_2d;
  double ari = 0.0;  // agreement of full-d and 2-D clusterings
  std::vector<double> explained_ratio;  // PCA only
  std::string warning;
};

// Number of distinct role classes among the non-pad tokens.
std::size_t default_k(const EncodedInput& input);

LayerAnalysis analyze_layer(const HiddenStateTrace& trace, std::size_t layer, const Lexicon& lexicon,
                            ProjectionMethod method = ProjectionMethod::pca, std::optional<std::size_t> k = {},
                            std::uint64_t seed = 0);
std::vector<LayerAnalysis> analyze_trace(const HiddenStateTrace& trace, const Lexicon& lexicon,
                                         ProjectionMethod method = ProjectionMethod::pca,
                                         std::optional<std::size_t> k = {}, std::uint64_t seed = 0);

// layer,token_index,token,role,sentence,x,y,cluster
std::string projection_csv(const std::vector<LayerAnalysis>& layers);

}  // namespace layerscope
