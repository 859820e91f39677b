#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rgcn/common.hpp"

namespace rgcn {

struct GraphEdge {
  int i;
  int j;
  double w;
};

/// Undirected weighted graph without self-loops. Each edge is stored once
/// with i < j; the symmetric counterpart is implied, so W == W^T holds by
/// construction.
class SparseGraph {
 public:
  SparseGraph() : n_(0) {}
  SparseGraph(int n, std::vector<GraphEdge> edges);

  int vertex_count() const { return n_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }

  /// Materialize the symmetric adjacency matrix.
  SpMat adjacency() const;
  std::vector<double> degrees() const;

  double weight(int i, int j) const;  // 0 when the edge is absent

 private:
  int n_;
  std::vector<GraphEdge> edges_;  // canonical i < j, sorted, unique
};

enum class LaplacianKind { Normalized, Rescaled };

struct Laplacian {
  SpMat mat;
  LaplacianKind kind = LaplacianKind::Normalized;
  double lambda_max = 0.0;  // value used to rescale (Rescaled only)

  int n() const { return static_cast<int>(mat.rows()); }
};

enum class Metric { Euclidean, Cosine };

/// k-nearest-neighbour graph over the rows of `points`.
/// Euclidean weights are exp(-d^2/sigma^2); when sigma is not given, sigma^2
/// is the mean of all retained kNN squared distances. Cosine weights are the
/// similarity clamped to [0, 1]. Ties in the neighbour ranking are broken by
/// the lower vertex index, and the result is symmetrized with w = max(w, w^T).
SparseGraph knn_graph(const Mat& points, int k, Metric metric,
                      std::optional<double> sigma = std::nullopt);

/// kNN graph of the h x w pixel grid (row-major vertex order), Euclidean
/// pixel distance, automatic sigma.
SparseGraph grid_graph(int h, int w, int k);

/// L = I - D^{-1/2} W D^{-1/2}. Isolated vertices get an identity row.
Laplacian normalized_laplacian(const SparseGraph& g);

/// Power-iteration estimate of the largest eigenvalue of a normalized
/// Laplacian; starts from the all-ones vector and falls back to the generic
/// upper bound 2.0 when the iteration stalls.
double estimate_lambda_max(const Laplacian& l, int iters = 200, double tol = 1e-6);

/// L_hat = (2/lambda_max) L - I.
Laplacian rescale_laplacian(const Laplacian& l, double lambda_max);

/// Multi-level graph coarsening by heavy-edge matching, plus the vertex
/// permutation that lays the matching tree out so that the two children of
/// every coarse vertex sit in adjacent slots. Unmatched vertices are padded
/// with isolated fake vertices, which makes the permuted signal length at
/// level 0 equal to n_coarsest * 2^levels.
struct CoarseningMap {
  std::vector<SparseGraph> levels;  // real graphs; levels[0] is the input
  std::vector<int> perm;            // perm[slot] = level-0 vertex id (>= n0 means fake)
  std::vector<int> fake_counts;     // padding vertices per level

  int padded_size(int level) const;
  /// Adjacency of `level` over padded, permuted slots (fakes isolated).
  SparseGraph padded_graph(int level) const;
  bool is_fake_slot(int level, int slot) const {
    return orderings[static_cast<std::size_t>(level)][static_cast<std::size_t>(slot)] >=
           levels[static_cast<std::size_t>(level)].vertex_count();
  }

  // internal tree layout: orderings[l][slot] = vertex id at level l
  std::vector<std::vector<int>> orderings;
};

/// Heavy-edge matching with the normalized-cut score w(i,j)*(1/d(i)+1/d(j)).
/// Deterministic given the seed (the seed drives the visit order).
CoarseningMap coarsen(const SparseGraph& g, int levels, std::uint64_t seed);

/// Lay out an n0 x F signal into padded, permuted slots (fake slots = fill).
Mat permute_signal(const Mat& x, const CoarseningMap& cm, double fill = 0.0);
/// Inverse of permute_signal: recover the n0 x F signal, dropping fake slots.
Mat unpermute_signal(const Mat& xp, const CoarseningMap& cm);

// Edge-list text format: header "#vertices <n>", then one "i<TAB>j<TAB>w"
// line per undirected edge (0-based, listed once).
void save_edge_list(const SparseGraph& g, const std::string& path);
SparseGraph load_edge_list(const std::string& path);

}  // namespace rgcn
