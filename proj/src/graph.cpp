#include "rgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace rgcn {

namespace {

std::pair<int, int> canon(int i, int j) {
  return i < j ? std::pair<int, int>{i, j} : std::pair<int, int>{j, i};
}

}  // namespace

SparseGraph::SparseGraph(int n, std::vector<GraphEdge> edges) : n_(n) {
  if (n < 0) throw InvalidParameter("vertex count must be non-negative");
  edges_.reserve(edges.size());
  for (const GraphEdge& e : edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n)
      throw InvalidParameter("edge endpoint out of range");
    if (!std::isfinite(e.w) || e.w < 0.0)
      throw InvalidParameter("edge weight must be finite and non-negative");
    if (e.i == e.j) {
      if (e.w != 0.0) throw InvalidParameter("self-loops are not allowed");
      continue;  // zero self-loop == absent
    }
    if (e.w == 0.0) continue;  // zero weight == absent
    auto [a, b] = canon(e.i, e.j);
    edges_.push_back({a, b, e.w});
  }
  std::sort(edges_.begin(), edges_.end(), [](const GraphEdge& a, const GraphEdge& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  for (std::size_t t = 1; t < edges_.size(); ++t) {
    if (edges_[t - 1].i == edges_[t].i && edges_[t - 1].j == edges_[t].j)
      throw InvalidParameter("duplicate edge");
  }
}

SpMat SparseGraph::adjacency() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(edges_.size() * 2);
  for (const GraphEdge& e : edges_) {
    trip.emplace_back(e.i, e.j, e.w);
    trip.emplace_back(e.j, e.i, e.w);
  }
  SpMat w(n_, n_);
  w.setFromTriplets(trip.begin(), trip.end());
  return w;
}

std::vector<double> SparseGraph::degrees() const {
  std::vector<double> d(static_cast<std::size_t>(n_), 0.0);
  for (const GraphEdge& e : edges_) {
    d[static_cast<std::size_t>(e.i)] += e.w;
    d[static_cast<std::size_t>(e.j)] += e.w;
  }
  return d;
}

double SparseGraph::weight(int i, int j) const {
  if (i == j) return 0.0;
  auto [a, b] = canon(i, j);
  GraphEdge probe{a, b, 0.0};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), probe,
                             [](const GraphEdge& x, const GraphEdge& y) {
                               return std::tie(x.i, x.j) < std::tie(y.i, y.j);
                             });
  if (it != edges_.end() && it->i == a && it->j == b) return it->w;
  return 0.0;
}

namespace {

// Per-vertex neighbour selection shared by both metrics. `better(a, b)` says
// candidate a ranks strictly ahead of candidate b; index ties go to the lower
// index via the sort below.
struct Neighbour {
  int j;
  double key;  // squared distance (euclidean) or similarity (cosine)
};

std::vector<Neighbour> select_k(int i, int n, int k, const Vec& keys, bool ascending) {
  std::vector<Neighbour> cand;
  cand.reserve(static_cast<std::size_t>(n) - 1);
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    cand.push_back({j, keys[j]});
  }
  auto cmp = [ascending](const Neighbour& a, const Neighbour& b) {
    if (a.key != b.key) return ascending ? a.key < b.key : a.key > b.key;
    return a.j < b.j;
  };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), cmp);
  cand.resize(static_cast<std::size_t>(k));
  return cand;
}

}  // namespace

SparseGraph knn_graph(const Mat& points, int k, Metric metric, std::optional<double> sigma) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw InvalidParameter("k must be >= 1");
  if (k >= n) throw InvalidParameter("k must be smaller than the number of points");
  if (!points.allFinite()) throw InvalidData("points contain non-finite values");
  if (sigma && *sigma <= 0.0) throw InvalidParameter("sigma must be positive");

  std::vector<std::vector<Neighbour>> picked(static_cast<std::size_t>(n));
  if (metric == Metric::Euclidean) {
    const Vec sq = points.rowwise().squaredNorm();
    for (int i = 0; i < n; ++i) {
      Vec dots = points * points.row(i).transpose();
      Vec d2 = (sq.array() + sq[i] - 2.0 * dots.array()).max(0.0);
      picked[static_cast<std::size_t>(i)] = select_k(i, n, k, d2, /*ascending=*/true);
    }
    double sigma2;
    if (sigma) {
      sigma2 = (*sigma) * (*sigma);
    } else {
      double sum = 0.0;
      for (const auto& nb : picked)
        for (const Neighbour& e : nb) sum += e.key;
      sigma2 = sum / (static_cast<double>(n) * k);
      if (sigma2 <= 0.0) sigma2 = 1.0;  // all retained pairs coincide
    }
    std::map<std::pair<int, int>, double> acc;
    for (int i = 0; i < n; ++i) {
      for (const Neighbour& e : picked[static_cast<std::size_t>(i)]) {
        double w = std::exp(-e.key / sigma2);
        auto key = canon(i, e.j);
        auto it = acc.find(key);
        if (it == acc.end())
          acc.emplace(key, w);
        else
          it->second = std::max(it->second, w);
      }
    }
    std::vector<GraphEdge> edges;
    edges.reserve(acc.size());
    for (const auto& [key, w] : acc) edges.push_back({key.first, key.second, w});
    return SparseGraph(n, std::move(edges));
  }

  // cosine: rank by similarity, weight = similarity clamped to [0, 1]
  Mat unit = points;
  for (int i = 0; i < n; ++i) {
    double nrm = unit.row(i).norm();
    if (nrm > 0.0) unit.row(i) /= nrm;
  }
  std::map<std::pair<int, int>, double> acc;
  for (int i = 0; i < n; ++i) {
    Vec sims = unit * unit.row(i).transpose();
    auto nb = select_k(i, n, k, sims, /*ascending=*/false);
    for (const Neighbour& e : nb) {
      double w = std::clamp(e.key, 0.0, 1.0);
      if (w == 0.0) continue;
      auto key = canon(i, e.j);
      auto it = acc.find(key);
      if (it == acc.end())
        acc.emplace(key, w);
      else
        it->second = std::max(it->second, w);
    }
  }
  std::vector<GraphEdge> edges;
  edges.reserve(acc.size());
  for (const auto& [key, w] : acc) edges.push_back({key.first, key.second, w});
  return SparseGraph(n, std::move(edges));
}

SparseGraph grid_graph(int h, int w, int k) {
  if (h < 2 || w < 2) throw InvalidParameter("grid must be at least 2x2");
  if (static_cast<long long>(h) * w < static_cast<long long>(k) + 1)
    throw InvalidParameter("grid too small for requested k");
  Mat coords(static_cast<Eigen::Index>(h) * w, 2);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      coords(static_cast<Eigen::Index>(r) * w + c, 0) = r;
      coords(static_cast<Eigen::Index>(r) * w + c, 1) = c;
    }
  return knn_graph(coords, k, Metric::Euclidean);
}

Laplacian normalized_laplacian(const SparseGraph& g) {
  const int n = g.vertex_count();
  std::vector<double> d = g.degrees();
  std::vector<double> dinv(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) dinv[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 0.0;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.edges().size() * 2 + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
  for (const GraphEdge& e : g.edges()) {
    double v = -e.w * dinv[static_cast<std::size_t>(e.i)] * dinv[static_cast<std::size_t>(e.j)];
    trip.emplace_back(e.i, e.j, v);
    trip.emplace_back(e.j, e.i, v);
  }
  Laplacian l;
  l.mat.resize(n, n);
  l.mat.setFromTriplets(trip.begin(), trip.end());
  l.kind = LaplacianKind::Normalized;
  l.lambda_max = 0.0;
  return l;
}

double estimate_lambda_max(const Laplacian& l, int iters, double tol) {
  if (l.kind != LaplacianKind::Normalized)
    throw InvalidParameter("lambda_max estimation expects a normalized Laplacian");
  const int n = l.n();
  if (n == 0) return 2.0;
  Vec v = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
  double prev = 0.0;
  for (int t = 0; t < iters; ++t) {
    Vec u = l.mat * v;
    double lam = v.dot(u);  // Rayleigh quotient, never exceeds the true maximum
    double nrm = u.norm();
    if (nrm < 1e-12) return 2.0;  // start vector (nearly) in the kernel
    v = u / nrm;
    if (t > 0 && std::abs(lam - prev) <= tol * std::max(1.0, std::abs(lam))) return lam;
    prev = lam;
  }
  return 2.0;  // no convergence: fall back to the generic bound
}

Laplacian rescale_laplacian(const Laplacian& l, double lambda_max) {
  if (lambda_max <= 0.0) throw InvalidParameter("lambda_max must be positive");
  if (l.kind != LaplacianKind::Normalized)
    throw InvalidParameter("rescale expects a normalized Laplacian");
  const int n = l.n();
  SpMat id(n, n);
  id.setIdentity();
  Laplacian out;
  out.mat = SpMat((2.0 / lambda_max) * l.mat - id).pruned(0.0);
  out.kind = LaplacianKind::Rescaled;
  out.lambda_max = lambda_max;
  return out;
}

namespace {

struct MatchResult {
  std::vector<int> cluster;                // fine vertex -> coarse id
  std::vector<std::vector<int>> children;  // coarse id -> fine vertices (1 or 2)
  int n_coarse = 0;
};

MatchResult heavy_edge_match(const SparseGraph& g, Rng& rng) {
  const int n = g.vertex_count();
  std::vector<double> d = g.degrees();
  std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
  for (const GraphEdge& e : g.edges()) {
    adj[static_cast<std::size_t>(e.i)].push_back({e.j, e.w});
    adj[static_cast<std::size_t>(e.j)].push_back({e.i, e.w});
  }

  MatchResult r;
  r.cluster.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> order = rng.permutation(n);
  for (int i : order) {
    if (r.cluster[static_cast<std::size_t>(i)] != -1) continue;
    int best_j = -1;
    double best_score = -1.0;
    for (const auto& [j, w] : adj[static_cast<std::size_t>(i)]) {
      if (r.cluster[static_cast<std::size_t>(j)] != -1) continue;
      double score = w * (1.0 / d[static_cast<std::size_t>(i)] + 1.0 / d[static_cast<std::size_t>(j)]);
      if (score > best_score || (score == best_score && j < best_j)) {
        best_score = score;
        best_j = j;
      }
    }
    int c = r.n_coarse++;
    r.cluster[static_cast<std::size_t>(i)] = c;
    if (best_j >= 0) {
      r.cluster[static_cast<std::size_t>(best_j)] = c;
      r.children.push_back({i, best_j});
    } else {
      r.children.push_back({i});
    }
  }
  return r;
}

SparseGraph contract(const SparseGraph& g, const MatchResult& m) {
  std::map<std::pair<int, int>, double> acc;
  for (const GraphEdge& e : g.edges()) {
    int ci = m.cluster[static_cast<std::size_t>(e.i)];
    int cj = m.cluster[static_cast<std::size_t>(e.j)];
    if (ci == cj) continue;  // contracted edge becomes a self-loop: drop
    acc[canon(ci, cj)] += e.w;
  }
  std::vector<GraphEdge> edges;
  edges.reserve(acc.size());
  for (const auto& [key, w] : acc) edges.push_back({key.first, key.second, w});
  return SparseGraph(m.n_coarse, std::move(edges));
}

}  // namespace

CoarseningMap coarsen(const SparseGraph& g, int levels, std::uint64_t seed) {
  if (levels < 0) throw InvalidParameter("levels must be non-negative");
  CoarseningMap cm;
  cm.levels.push_back(g);
  std::vector<std::vector<std::vector<int>>> children;  // per level
  for (int l = 0; l < levels; ++l) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(l));
    MatchResult m = heavy_edge_match(cm.levels.back(), rng);
    cm.levels.push_back(contract(cm.levels.back(), m));
    children.push_back(std::move(m.children));
  }

  // Binary-tree layout from the coarsest level down: each coarse vertex owns
  // two consecutive slots one level below; singletons and fake parents are
  // padded with fresh fake ids (>= real vertex count at that level).
  cm.orderings.assign(static_cast<std::size_t>(levels) + 1, {});
  cm.fake_counts.assign(static_cast<std::size_t>(levels) + 1, 0);
  auto& top = cm.orderings[static_cast<std::size_t>(levels)];
  top.resize(static_cast<std::size_t>(cm.levels.back().vertex_count()));
  for (std::size_t i = 0; i < top.size(); ++i) top[i] = static_cast<int>(i);

  for (int l = levels - 1; l >= 0; --l) {
    const int n_real = cm.levels[static_cast<std::size_t>(l)].vertex_count();
    const int n_coarse = cm.levels[static_cast<std::size_t>(l) + 1].vertex_count();
    int next_fake = n_real;
    auto& ord = cm.orderings[static_cast<std::size_t>(l)];
    for (int id : cm.orderings[static_cast<std::size_t>(l) + 1]) {
      if (id < n_coarse) {
        const auto& kids = children[static_cast<std::size_t>(l)][static_cast<std::size_t>(id)];
        for (int kid : kids) ord.push_back(kid);
        for (std::size_t t = kids.size(); t < 2; ++t) ord.push_back(next_fake++);
      } else {
        ord.push_back(next_fake++);
        ord.push_back(next_fake++);
      }
    }
    cm.fake_counts[static_cast<std::size_t>(l)] = static_cast<int>(ord.size()) - n_real;
  }
  cm.perm = cm.orderings[0];
  return cm;
}

int CoarseningMap::padded_size(int level) const {
  return static_cast<int>(orderings[static_cast<std::size_t>(level)].size());
}

SparseGraph CoarseningMap::padded_graph(int level) const {
  const SparseGraph& g = levels[static_cast<std::size_t>(level)];
  const auto& ord = orderings[static_cast<std::size_t>(level)];
  std::vector<int> id_to_slot(ord.size(), -1);
  for (std::size_t s = 0; s < ord.size(); ++s) id_to_slot[static_cast<std::size_t>(ord[s])] = static_cast<int>(s);
  std::vector<GraphEdge> edges;
  edges.reserve(g.edges().size());
  for (const GraphEdge& e : g.edges())
    edges.push_back({id_to_slot[static_cast<std::size_t>(e.i)], id_to_slot[static_cast<std::size_t>(e.j)], e.w});
  return SparseGraph(padded_size(level), std::move(edges));
}

Mat permute_signal(const Mat& x, const CoarseningMap& cm, double fill) {
  const int n0 = cm.levels.front().vertex_count();
  if (static_cast<int>(x.rows()) != n0) throw InvalidData("signal row count does not match graph");
  Mat out = Mat::Constant(cm.padded_size(0), x.cols(), fill);
  for (std::size_t s = 0; s < cm.perm.size(); ++s) {
    int id = cm.perm[s];
    if (id < n0) out.row(static_cast<Eigen::Index>(s)) = x.row(id);
  }
  return out;
}

Mat unpermute_signal(const Mat& xp, const CoarseningMap& cm) {
  const int n0 = cm.levels.front().vertex_count();
  if (static_cast<int>(xp.rows()) != cm.padded_size(0))
    throw InvalidData("permuted signal row count does not match layout");
  Mat out(n0, xp.cols());
  for (std::size_t s = 0; s < cm.perm.size(); ++s) {
    int id = cm.perm[s];
    if (id < n0) out.row(id) = xp.row(static_cast<Eigen::Index>(s));
  }
  return out;
}

void save_edge_list(const SparseGraph& g, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidData("cannot open file for writing: " + path);
  f.imbue(std::locale::classic());
  f.precision(17);
  f << "#vertices " << g.vertex_count() << "\n";
  for (const GraphEdge& e : g.edges()) f << e.i << "\t" << e.j << "\t" << e.w << "\n";
  if (!f.good()) throw InvalidData("write failed: " + path);
}

namespace {

// Parses one strictly tab-separated edge line; `base` is the byte offset of
// the line start, used to report error positions.
GraphEdge parse_edge_line(const std::string& line, std::size_t base) {
  std::size_t t1 = line.find('\t');
  if (t1 == std::string::npos) throw ParseError("expected i<TAB>j<TAB>w", base);
  std::size_t t2 = line.find('\t', t1 + 1);
  if (t2 == std::string::npos) throw ParseError("expected i<TAB>j<TAB>w", base + t1 + 1);

  GraphEdge e{};
  auto parse_int = [&](std::size_t from, std::size_t to, int& out) {
    auto res = std::from_chars(line.data() + from, line.data() + to, out);
    if (res.ec != std::errc() || res.ptr != line.data() + to)
      throw ParseError("malformed vertex index", base + from);
  };
  parse_int(0, t1, e.i);
  parse_int(t1 + 1, t2, e.j);
  std::string wtext = line.substr(t2 + 1);
  char* end = nullptr;
  e.w = std::strtod(wtext.c_str(), &end);
  if (end == wtext.c_str() || *end != '\0')
    throw ParseError("malformed edge weight", base + t2 + 1);
  return e;
}

}  // namespace

SparseGraph load_edge_list(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidData("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  bool have_header = false;
  int n = 0;
  std::vector<GraphEdge> edges;
  std::set<std::pair<int, int>> seen;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t base = pos;
    pos = eol + 1;
    if (line.empty()) continue;
    if (!have_header) {
      const std::string tag = "#vertices ";
      if (line.rfind(tag, 0) != 0) throw ParseError("missing '#vertices <n>' header", base);
      auto res = std::from_chars(line.data() + tag.size(), line.data() + line.size(), n);
      if (res.ec != std::errc() || res.ptr != line.data() + line.size() || n < 0)
        throw ParseError("malformed vertex count", base + tag.size());
      have_header = true;
      continue;
    }
    GraphEdge e = parse_edge_line(line, base);
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n) throw ParseError("vertex index out of range", base);
    if (e.i == e.j) throw ParseError("self-loop not allowed", base);
    if (!std::isfinite(e.w) || e.w < 0.0) throw ParseError("edge weight must be finite and non-negative", base);
    if (!seen.insert(canon(e.i, e.j)).second) throw ParseError("duplicate edge", base);
    edges.push_back(e);
  }
  if (!have_header) throw ParseError("missing '#vertices <n>' header", 0);
  return SparseGraph(n, std::move(edges));
}

}  // namespace rgcn
