#include "rgcn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace rgcn {

namespace {

constexpr std::uint64_t kPointsStream = 0x707473;     // "pts"
constexpr std::uint64_t kTemplateStream = 0x746d706c; // "tmpl"
constexpr std::uint64_t kPerturbStream = 0x70657274;  // "pert"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kFactorStream = 0x66616374;   // "fact"
constexpr std::uint64_t kSpikeStream = 0x7370696b;    // "spik"

void check_split_list(const std::vector<int>& idx, int n, std::vector<char>& seen,
                      const char* which) {
  for (int i : idx) {
    if (i < 0 || i >= n)
      throw InvalidData(std::string(which) + " split index out of range: " + std::to_string(i));
    if (seen[static_cast<std::size_t>(i)])
      throw InvalidData("split indices are not disjoint at " + std::to_string(i));
    seen[static_cast<std::size_t>(i)] = 1;
  }
}

}  // namespace

void DenseDataset::check() const {
  if (labels.size() != samples()) throw InvalidData("labels not aligned with sample rows");
  std::vector<char> seen(static_cast<std::size_t>(samples()), 0);
  check_split_list(train_idx, samples(), seen, "train");
  check_split_list(test_idx, samples(), seen, "test");
}

void MultiViewDataset::check() const {
  if (views.empty()) throw InvalidData("multi-view dataset has no views");
  if (graphs.size() != views.size())
    throw InvalidData("expected one graph per view");
  const DenseDataset& first = views.front();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const DenseDataset& d = views[v];
    d.check();
    if (d.samples() != first.samples()) throw InvalidData("views disagree on sample count");
    if (d.labels.labels != first.labels.labels ||
        d.labels.num_classes != first.labels.num_classes)
      throw InvalidData("views disagree on labels");
    if (d.train_idx != first.train_idx || d.test_idx != first.test_idx)
      throw InvalidData("views disagree on splits");
    if (graphs[v].vertex_count() != d.features())
      throw InvalidData("view " + std::to_string(v) + ": graph size != feature count");
  }
}

Mat take_rows(const Mat& x, const std::vector<int>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows())
      throw InvalidData("row index out of range: " + std::to_string(idx[r]));
    out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  }
  return out;
}

LabelSet take_labels(const LabelSet& l, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) {
    if (i < 0 || i >= l.size())
      throw InvalidData("label index out of range: " + std::to_string(i));
    out.push_back(l.labels[static_cast<std::size_t>(i)]);
  }
  return LabelSet(std::move(out), l.num_classes);
}

namespace {

struct CorpusStats {
  std::vector<std::size_t> kept;   // indices of documents surviving the length filter
  std::vector<std::string> vocab;  // ranked by (total count desc, spelling asc)
  std::map<std::string, int> df;   // document frequency over kept docs
};

CorpusStats filter_corpus(const std::vector<TokenizedDoc>& docs, int vocab_size,
                          int min_doc_len, int min_doc_freq) {
  if (vocab_size < 1) throw InvalidParameter("vocab_size must be positive");
  if (min_doc_len < 0 || min_doc_freq < 0)
    throw InvalidParameter("document filters must be non-negative");

  CorpusStats st;
  std::map<std::string, long long> counts;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (static_cast<int>(docs[d].tokens.size()) < min_doc_len) continue;
    st.kept.push_back(d);
    std::set<std::string> distinct;
    for (const std::string& w : docs[d].tokens) {
      ++counts[w];
      distinct.insert(w);
    }
    for (const std::string& w : distinct) ++st.df[w];
  }
  if (st.kept.empty()) throw InvalidData("corpus empty after filtering");

  std::vector<std::pair<long long, std::string>> ranked;
  for (const auto& [w, c] : counts)
    if (st.df[w] >= min_doc_freq) ranked.push_back({-c, w});
  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) > vocab_size)
    ranked.resize(static_cast<std::size_t>(vocab_size));
  for (const auto& [negc, w] : ranked) st.vocab.push_back(w);
  if (st.vocab.empty()) throw InvalidData("vocabulary empty after filtering");
  return st;
}

// Count matrix over `vocab` for the kept documents, then drop documents with
// no vocabulary hits (their rows cannot be normalized). Returns the dropped
// doc list through `kept`.
Mat count_matrix(const std::vector<TokenizedDoc>& docs, std::vector<std::size_t>& kept,
                 const std::vector<std::string>& vocab) {
  std::map<std::string, int> col;
  for (std::size_t j = 0; j < vocab.size(); ++j) col[vocab[j]] = static_cast<int>(j);

  Mat counts = Mat::Zero(static_cast<Eigen::Index>(kept.size()),
                         static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t r = 0; r < kept.size(); ++r)
    for (const std::string& w : docs[kept[r]].tokens) {
      auto it = col.find(w);
      if (it != col.end()) counts(static_cast<Eigen::Index>(r), it->second) += 1.0;
    }

  std::vector<std::size_t> nonzero;
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < kept.size(); ++r)
    if (counts.row(static_cast<Eigen::Index>(r)).sum() > 0.0) {
      nonzero.push_back(kept[r]);
      rows.push_back(static_cast<Eigen::Index>(r));
    }
  if (nonzero.empty()) throw InvalidData("corpus empty after filtering");

  Mat out(static_cast<Eigen::Index>(rows.size()), counts.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = counts.row(rows[r]);
  kept = std::move(nonzero);
  return out;
}

LabelSet labels_of(const std::vector<TokenizedDoc>& docs, const std::vector<std::size_t>& kept) {
  std::vector<int> lab;
  int top = -1;
  for (std::size_t d : kept) {
    lab.push_back(docs[d].label);
    top = std::max(top, docs[d].label);
  }
  if (top < 0) throw InvalidData("no labeled documents survive filtering");
  return LabelSet(std::move(lab), top + 1);
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TextBuildResult build_text_dataset(const std::vector<TokenizedDoc>& docs,
                                   const EmbeddingTable& embeddings, int vocab_size,
                                   int min_doc_len, int knn_k, int min_doc_freq) {
  CorpusStats st = filter_corpus(docs, vocab_size, min_doc_len, min_doc_freq);

  std::vector<std::string> covered;
  for (const std::string& w : st.vocab) {
    if (embeddings.count(w)) {
      covered.push_back(w);
    } else {
      std::fprintf(stderr, "warning: dropping word without embedding: %s\n", w.c_str());
    }
  }
  if (covered.empty()) throw InvalidData("no vocabulary word has an embedding");

  TextBuildResult out;
  out.vocab = std::move(covered);
  std::vector<std::size_t> kept = st.kept;
  Mat counts = count_matrix(docs, kept, out.vocab);
  for (Eigen::Index r = 0; r < counts.rows(); ++r) counts.row(r) /= counts.row(r).sum();

  Eigen::Index dim = embeddings.begin()->second.size();
  Mat points(static_cast<Eigen::Index>(out.vocab.size()), dim);
  for (std::size_t j = 0; j < out.vocab.size(); ++j) {
    const Vec& e = embeddings.at(out.vocab[j]);
    if (e.size() != dim) throw InvalidData("embedding vectors have mixed dimensions");
    points.row(static_cast<Eigen::Index>(j)) = e.transpose();
  }
  out.graph = knn_graph(points, knn_k, Metric::Euclidean);

  out.dataset.x = std::move(counts);
  out.dataset.labels = labels_of(docs, kept);
  out.dataset.train_idx = iota_vec(out.dataset.samples());
  out.dataset.name = "text-bow";
  out.dataset.provenance = "bag-of-words over " + std::to_string(out.vocab.size()) + " words";
  out.dataset.check();
  return out;
}

DenseDataset build_tfidf_view(const std::vector<TokenizedDoc>& docs, int vocab_size,
                              int min_doc_len, int min_doc_freq) {
  CorpusStats st = filter_corpus(docs, vocab_size, min_doc_len, min_doc_freq);
  double n_docs = static_cast<double>(st.kept.size());

  std::vector<std::size_t> kept = st.kept;
  Mat tf = count_matrix(docs, kept, st.vocab);
  for (std::size_t j = 0; j < st.vocab.size(); ++j) {
    double idf = std::log((1.0 + n_docs) / (1.0 + st.df[st.vocab[j]])) + 1.0;
    tf.col(static_cast<Eigen::Index>(j)) *= idf;
  }
  for (Eigen::Index r = 0; r < tf.rows(); ++r) tf.row(r) /= tf.row(r).norm();

  DenseDataset out;
  out.x = std::move(tf);
  out.labels = labels_of(docs, kept);
  out.train_idx = iota_vec(out.samples());
  out.name = "text-tfidf";
  out.provenance = "tf-idf over " + std::to_string(st.vocab.size()) + " words";
  out.check();
  return out;
}

SynthClassification synth_classification(int n_vertices, int n_samples, int n_classes,
                                         std::uint64_t graph_seed, double signal_smoothness,
                                         std::optional<NoiseSpec> noise, int knn_k,
                                         double train_fraction, double self_check_min) {
  if (n_classes < 1) throw InvalidParameter("need at least one class");
  if (n_samples < n_classes * 10)
    throw InvalidParameter("need at least 10 samples per class");
  if (!(signal_smoothness > 0.0))
    throw InvalidParameter("signal_smoothness must be positive");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw InvalidParameter("train_fraction must be in (0, 1]");

  const int q = std::min(8, n_vertices - 1);
  if (q < 1) throw InvalidParameter("graph too small for smooth templates");

  for (int attempt = 0; attempt < 5; ++attempt) {
    std::uint64_t seed = graph_seed + static_cast<std::uint64_t>(attempt);

    Rng prng = Rng::stream(seed, kPointsStream);
    Mat pts(n_vertices, 2);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      for (Eigen::Index j = 0; j < 2; ++j) pts(i, j) = prng.uniform(0.0, 1.0);
    SparseGraph g = knn_graph(pts, knn_k, Metric::Euclidean);

    // class templates: mixtures of the lowest non-trivial Laplacian modes
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(normalized_laplacian(g).mat));
    Mat basis = es.eigenvectors().middleCols(1, q);
    Rng trng = Rng::stream(seed, kTemplateStream);
    Mat templates(n_classes, n_vertices);
    for (int c = 0; c < n_classes; ++c) {
      Vec coef(q);
      for (int p = 0; p < q; ++p) coef(p) = trng.normal();
      Vec t = basis * coef;
      double norm = t.norm();
      if (norm < 1e-12) {
        t.setZero();
        t(0) = 1.0;
        norm = 1.0;
      }
      templates.row(c) = (t * (std::sqrt(static_cast<double>(n_vertices)) / norm)).transpose();
    }

    Rng srng = Rng::stream(seed, kShuffleStream);
    std::vector<int> perm = srng.permutation(n_samples);
    std::vector<int> lab(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) lab[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)] % n_classes;

    Rng erng = Rng::stream(seed, kPerturbStream);
    double sigma = std::isinf(signal_smoothness) ? 0.0 : 1.0 / signal_smoothness;
    Mat x(n_samples, n_vertices);
    for (int i = 0; i < n_samples; ++i) {
      x.row(i) = templates.row(lab[static_cast<std::size_t>(i)]);
      if (sigma > 0.0)
        for (int j = 0; j < n_vertices; ++j) x(i, j) += erng.normal(0.0, sigma);
    }

    int hits = 0;
    for (int i = 0; i < n_samples; ++i) {
      int best = 0;
      double best_d = (x.row(i) - templates.row(0)).squaredNorm();
      for (int c = 1; c < n_classes; ++c) {
        double d = (x.row(i) - templates.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      hits += best == lab[static_cast<std::size_t>(i)];
    }
    if (static_cast<double>(hits) / n_samples < self_check_min) continue;

    SynthClassification out;
    out.graph = std::move(g);
    out.templates = std::move(templates);
    out.dataset.x = noise ? apply_noise(x, *noise) : std::move(x);
    out.dataset.labels = LabelSet(std::move(lab), n_classes);
    int n_train = static_cast<int>(std::floor(train_fraction * n_samples));
    for (int i = 0; i < n_samples; ++i)
      (i < n_train ? out.dataset.train_idx : out.dataset.test_idx).push_back(i);
    out.dataset.name = "synth-smooth";
    out.dataset.provenance =
        "geometric graph, seed " + std::to_string(seed) + ", attempt " + std::to_string(attempt);
    out.dataset.check();
    return out;
  }
  throw InvalidData("clean-data self-check stayed below threshold after 5 attempts");
}

LowRankSparse synth_lowrank_sparse(int n, int m, int rank, double spike_fraction,
                                   double spike_magnitude, std::uint64_t seed) {
  if (n < 1 || m < 1) throw InvalidParameter("matrix dimensions must be positive");
  if (rank < 1 || rank > std::min(n, m))
    throw InvalidParameter("rank must lie in [1, min(n, m)]");
  if (spike_fraction < 0.0 || spike_fraction > 1.0)
    throw InvalidParameter("spike_fraction must lie in [0, 1]");

  Rng frng = Rng::stream(seed, kFactorStream);
  Mat a = frng.normal_matrix(n, rank);
  Mat b = frng.normal_matrix(rank, m);

  LowRankSparse out;
  out.l0 = a * b;
  out.e0 = Mat::Zero(n, m);
  int n_spikes = static_cast<int>(std::floor(spike_fraction * n * m));
  Rng srng = Rng::stream(seed, kSpikeStream);
  if (n_spikes > 0) {
    for (int flat : srng.sample_without_replacement(n * m, n_spikes)) {
      double sign = srng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      out.e0(flat / m, flat % m) = sign * spike_magnitude;
    }
  }
  out.x = out.l0 + out.e0;
  return out;
}

namespace {

constexpr char kMagic[5] = {'D', 'M', 'A', 'T', '1'};
constexpr std::size_t kHeaderBytes = 5 + 8 + 8;
constexpr std::uint64_t kMaxDim = 1u << 30;

void put_u64(std::string& buf, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint64_t get_u64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(k)]))
         << (8 * k);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidData("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return std::move(ss).str();
}

}  // namespace

void save_matrix(const std::string& path, const Mat& m) {
  std::string buf;
  buf.reserve(kHeaderBytes + static_cast<std::size_t>(m.size()) * 8);
  buf.append(kMagic, 5);
  put_u64(buf, static_cast<std::uint64_t>(m.rows()));
  put_u64(buf, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits;
      double v = m(i, j);
      std::memcpy(&bits, &v, 8);
      put_u64(buf, bits);
    }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidData("cannot open file for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw InvalidData("write failed: " + path);
}

Mat load_matrix(const std::string& path) {
  std::string buf = read_file(path);
  if (buf.size() < 5 || std::memcmp(buf.data(), kMagic, 5) != 0)
    throw ParseError("bad matrix magic", 0);
  if (buf.size() < kHeaderBytes) throw ParseError("truncated matrix header", buf.size());
  std::uint64_t rows = get_u64(buf, 5);
  std::uint64_t cols = get_u64(buf, 13);
  if (rows > kMaxDim) throw ParseError("row count out of range", 5);
  if (cols > kMaxDim) throw ParseError("column count out of range", 13);
  std::size_t expected = kHeaderBytes + static_cast<std::size_t>(rows * cols) * 8;
  if (buf.size() < expected) throw ParseError("truncated matrix payload", buf.size());
  if (buf.size() > expected) throw ParseError("trailing bytes after matrix payload", expected);

  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t at = kHeaderBytes;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j, at += 8) {
      std::uint64_t bits = get_u64(buf, at);
      std::memcpy(&m(i, j), &bits, 8);
    }
  return m;
}

Mat load_csv_matrix(const std::string& path) {
  std::string buf = read_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos < buf.size()) {
    std::size_t eol = buf.find('\n', pos);
    std::size_t end = eol == std::string::npos ? buf.size() : eol;
    std::size_t line_end = end;
    if (line_end > pos && buf[line_end - 1] == '\r') --line_end;

    if (line_end > pos) {
      std::vector<double> row;
      std::size_t fs = pos;
      while (fs <= line_end) {
        std::size_t fe = std::min(static_cast<std::size_t>(buf.find(',', fs)), line_end);
        if (fe > line_end) fe = line_end;
        std::string field = buf.substr(fs, fe - fs);
        const char* s = field.c_str();
        char* parsed_end = nullptr;
        double v = std::strtod(s, &parsed_end);
        if (parsed_end == s || static_cast<std::size_t>(parsed_end - s) != field.size())
          throw ParseError("malformed number '" + field + "'", fs);
        row.push_back(v);
        if (fe == line_end) break;
        fs = fe + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size())
        throw ParseError("row has " + std::to_string(row.size()) + " fields, expected " +
                             std::to_string(rows.front().size()),
                         pos);
      rows.push_back(std::move(row));
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  if (rows.empty()) throw InvalidData("empty matrix file: " + path);

  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void save_labels(const std::string& path, const LabelSet& labels) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InvalidData("cannot open file for writing: " + path);
  for (int l : labels.labels) f << l << '\n';
  if (!f) throw InvalidData("write failed: " + path);
}

LabelSet load_labels(const std::string& path, int num_classes) {
  std::string buf = read_file(path);
  std::vector<int> labels;
  int top = -1;
  std::size_t pos = 0;
  while (pos < buf.size()) {
    std::size_t eol = buf.find('\n', pos);
    std::size_t end = eol == std::string::npos ? buf.size() : eol;
    std::size_t line_end = end;
    if (line_end > pos && buf[line_end - 1] == '\r') --line_end;
    if (line_end > pos) {
      int v = 0;
      auto [p, ec] = std::from_chars(buf.data() + pos, buf.data() + line_end, v);
      if (ec != std::errc() || p != buf.data() + line_end)
        throw ParseError("malformed label", pos);
      if (v < LabelSet::kUnlabeled) throw ParseError("label out of range", pos);
      labels.push_back(v);
      top = std::max(top, v);
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  if (labels.empty()) throw InvalidData("empty labels file: " + path);
  return LabelSet(std::move(labels), num_classes < 0 ? top + 1 : num_classes);
}

}  // namespace rgcn
