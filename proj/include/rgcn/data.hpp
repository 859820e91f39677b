#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rgcn/common.hpp"
#include "rgcn/graph.hpp"
#include "rgcn/nncore.hpp"
#include "rgcn/noise.hpp"

namespace rgcn {

struct DenseDataset {
  Mat x;  // N x M, one sample per row
  LabelSet labels;
  std::vector<int> train_idx;
  std::vector<int> test_idx;
  std::string name;
  std::string provenance;

  int samples() const { return static_cast<int>(x.rows()); }
  int features() const { return static_cast<int>(x.cols()); }
  /// Splits disjoint and within range, labels aligned with rows.
  void check() const;
};

struct MultiViewDataset {
  std::vector<DenseDataset> views;
  std::vector<SparseGraph> graphs;  // one feature graph per view

  /// All views share sample count, labels, and splits; graphs match widths.
  void check() const;
};

Mat take_rows(const Mat& x, const std::vector<int>& idx);
LabelSet take_labels(const LabelSet& l, const std::vector<int>& idx);

struct TokenizedDoc {
  std::vector<std::string> tokens;
  int label = LabelSet::kUnlabeled;
};

using EmbeddingTable = std::map<std::string, Vec>;

struct TextBuildResult {
  DenseDataset dataset;
  SparseGraph graph;  // kNN graph over word embedding vectors
  std::vector<std::string> vocab;
};

/// Bag-of-words pipeline: drop documents shorter than min_doc_len tokens and
/// words appearing in fewer than min_doc_freq documents, keep the vocab_size
/// most frequent remaining words (total count, ties by spelling), drop words
/// without an embedding (warning on stderr), count, and normalize each row to
/// unit l1 sum. Documents left without any vocabulary hits are dropped too.
TextBuildResult build_text_dataset(const std::vector<TokenizedDoc>& docs,
                                   const EmbeddingTable& embeddings, int vocab_size,
                                   int min_doc_len, int knn_k, int min_doc_freq = 5);

/// Same corpus filtering as build_text_dataset, but features are TF-IDF with
/// smooth IDF ln((1+N)/(1+df)) + 1 and l2-normalized rows; no graph.
DenseDataset build_tfidf_view(const std::vector<TokenizedDoc>& docs, int vocab_size,
                              int min_doc_len = 5, int min_doc_freq = 5);

struct SynthClassification {
  DenseDataset dataset;
  SparseGraph graph;
  Mat templates;  // n_classes x n_vertices clean class signals
};

/// Classification task on a random geometric graph: each class is a mixture
/// of low-frequency Laplacian eigenvectors, samples are the template plus
/// i.i.d. Gaussian perturbation of scale 1/signal_smoothness. The generator
/// self-checks that nearest-template classification of the clean data reaches
/// self_check_min and reseeds up to 5 times before giving up. Corruption, if
/// requested, is applied to every sample after the self-check.
SynthClassification synth_classification(int n_vertices, int n_samples, int n_classes,
                                         std::uint64_t graph_seed, double signal_smoothness,
                                         std::optional<NoiseSpec> noise = std::nullopt,
                                         int knn_k = 6, double train_fraction = 0.8,
                                         double self_check_min = 0.9);

struct LowRankSparse {
  Mat x;   // l0 + e0
  Mat l0;  // product of two seeded Gaussian factors
  Mat e0;  // exactly floor(spike_fraction*n*m) entries of +-spike_magnitude
};

LowRankSparse synth_lowrank_sparse(int n, int m, int rank, double spike_fraction,
                                   double spike_magnitude, std::uint64_t seed);

// Binary matrix file: magic "DMAT1", u64 rows, u64 cols, then row-major
// little-endian f64 payload. Round trips are bit-exact.
void save_matrix(const std::string& path, const Mat& m);
Mat load_matrix(const std::string& path);

/// Headerless CSV with '.' decimals and ',' separators.
Mat load_csv_matrix(const std::string& path);

// Labels file: one integer per line, -1 meaning unlabeled. num_classes is
// inferred as max+1 when not given.
void save_labels(const std::string& path, const LabelSet& labels);
LabelSet load_labels(const std::string& path, int num_classes = -1);

}  // namespace rgcn
