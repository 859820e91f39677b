#include "rgcn/models.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

namespace rgcn {

namespace {

constexpr std::uint64_t kInitStream = 0x6d6f64696e6974ULL;     // parameter draws
constexpr std::uint64_t kShuffleStream = 0x6d6f6473687566ULL;  // mini-batch order
constexpr std::uint64_t kCoarsenStream = 0x636f617273656eULL;  // per-view coarsening

bool power_of_two(int p) { return p >= 1 && (p & (p - 1)) == 0; }

int pool_levels(int p) {
  int l = 0;
  while ((1 << l) < p) ++l;
  return l;
}

// Every trainable tensor of the convolutional net in one fixed order: per
// view the conv coefficients and biases, then the per-view projections, then
// the shared head. This order backs the flat optimizer vector and the
// checkpoint layout, so it must never change.
template <typename ModelT, typename FM, typename FV>
void visit_gcn_tensors(ModelT& m, FM&& fm, FV&& fv) {
  for (auto& t : m.towers) {
    for (std::size_t l = 0; l < t.theta.size(); ++l) {
      for (auto& th : t.theta[l].theta) fm(th);
      fv(t.bias[l]);
    }
  }
  for (auto& t : m.towers) {
    if (t.proj) {
      fm(t.proj->weight);
      fv(t.proj->bias);
    }
  }
  for (auto& h : m.head) {
    fm(h.weight);
    fv(h.bias);
  }
}

template <typename ModelT, typename FM, typename FV>
void visit_ae_tensors(ModelT& m, FM&& fm, FV&& fv) {
  for (auto& t : m.towers) {
    for (auto& l : t.ae) {
      fm(l.weight);
      fv(l.bias);
    }
  }
}

Eigen::Index gcn_param_dim(const Model& m) {
  Eigen::Index n = 0;
  visit_gcn_tensors(
      m, [&](const Mat& w) { n += w.size(); }, [&](const Vec& b) { n += b.size(); });
  return n;
}

Vec pack_gcn(const Model& m) {
  Vec flat(gcn_param_dim(m));
  Eigen::Index at = 0;
  visit_gcn_tensors(
      m,
      [&](const Mat& w) {
        for (Eigen::Index r = 0; r < w.rows(); ++r)
          for (Eigen::Index c = 0; c < w.cols(); ++c) flat[at++] = w(r, c);
      },
      [&](const Vec& b) {
        for (Eigen::Index i = 0; i < b.size(); ++i) flat[at++] = b[i];
      });
  return flat;
}

void unpack_gcn(const Vec& flat, Model& m) {
  Eigen::Index at = 0;
  visit_gcn_tensors(
      m,
      [&](Mat& w) {
        for (Eigen::Index r = 0; r < w.rows(); ++r)
          for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[at++];
      },
      [&](Vec& b) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = flat[at++];
      });
}

void zero_gcn(Model& m) {
  visit_gcn_tensors(
      m, [](Mat& w) { w.setZero(); }, [](Vec& b) { b.setZero(); });
}

// ---- fusion with argmax bookkeeping -----------------------------------------

struct FuseCache {
  Mat out;
  Eigen::MatrixXi winner;  // Max/Mixed: view index of the first maximum
};

FuseCache fuse_forward(const std::vector<Mat>& f, Fusion fusion, double beta) {
  FuseCache c;
  const Eigen::Index rows = f.front().rows(), cols = f.front().cols();
  Mat mx;
  if (fusion == Fusion::Max || fusion == Fusion::Mixed) {
    c.winner = Eigen::MatrixXi::Zero(rows, cols);
    mx = f.front();
    for (std::size_t v = 1; v < f.size(); ++v) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index j = 0; j < cols; ++j) {
          if (f[v](r, j) > mx(r, j)) {
            mx(r, j) = f[v](r, j);
            c.winner(r, j) = static_cast<int>(v);
          }
        }
      }
    }
  }
  if (fusion == Fusion::Max) {
    c.out = std::move(mx);
    return c;
  }
  Mat avg = Mat::Zero(rows, cols);
  for (const Mat& m : f) avg += m;
  avg /= static_cast<double>(f.size());
  c.out = fusion == Fusion::Avg ? std::move(avg) : Mat(mx + beta * avg);
  return c;
}

std::vector<Mat> fuse_backward(const FuseCache& c, std::size_t n_views, Fusion fusion,
                               double beta, const Mat& g) {
  std::vector<Mat> gv(n_views, Mat::Zero(g.rows(), g.cols()));
  if (fusion == Fusion::Max || fusion == Fusion::Mixed) {
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        gv[static_cast<std::size_t>(c.winner(r, j))](r, j) += g(r, j);
  }
  if (fusion == Fusion::Avg || fusion == Fusion::Mixed) {
    const double w = (fusion == Fusion::Avg ? 1.0 : beta) / static_cast<double>(n_views);
    for (Mat& m : gv) m += w * g;
  }
  return gv;
}

// ---- forward / backward engine ----------------------------------------------

struct LayerCache {
  std::vector<SignalBatch> basis;    // [p][b], n_in x f_in
  SignalBatch z;                     // conv output + bias, pre-activation
  SignalBatch act;                   // relu(z) with fake rows forced to zero
  std::vector<Eigen::MatrixXi> arg;  // pooled layers: source slot, -1 over fakes
  SignalBatch out;                   // layer output at the coarser level
};

struct TowerCache {
  SignalBatch input;  // permuted level-0 signals, one n x 1 column per sample
  std::vector<LayerCache> layers;
  Mat flat;  // B x flat_dim
  Mat feat;  // projection output, or flat when there is none
};

struct ForwardCache {
  std::vector<TowerCache> towers;
  std::vector<Mat> view_feats;
  FuseCache fuse;
  bool fuse_skipped = false;  // single view feeds the head directly
  std::vector<Mat> head_in;
  Mat logits;
};

Mat forward_batch(const Model& m, const std::vector<Mat>& xs, ForwardCache& cache) {
  const std::size_t n_views = m.towers.size();
  const int batch = static_cast<int>(xs.front().rows());
  cache.towers.assign(n_views, TowerCache{});
  cache.view_feats.resize(n_views);

  for (std::size_t v = 0; v < n_views; ++v) {
    const Tower& t = m.towers[v];
    TowerCache& tc = cache.towers[v];
    tc.input.resize(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b)
      tc.input[static_cast<std::size_t>(b)] =
          permute_signal(xs[v].row(b).transpose(), t.cm, 0.0);

    const SignalBatch* cur = &tc.input;
    tc.layers.resize(t.theta.size());
    for (std::size_t l = 0; l < t.theta.size(); ++l) {
      LayerCache& lc = tc.layers[l];
      const ConvLayerSpec& cs = m.spec.conv[l];
      const int level = t.in_level[l];
      const Eigen::Index n_in = t.lap[l].n();

      lc.basis = cheb_basis(t.lap[l], *cur, cs.cheb_order);
      lc.z = cheb_conv_forward(lc.basis, t.theta[l]);
      for (Mat& zb : lc.z) zb.rowwise() += t.bias[l].transpose();

      // The bias leaks into padding rows (conv output there is zero because
      // fake vertices are isolated and carry zero signal), so the activation
      // is re-zeroed on fake slots before pooling or flattening.
      lc.act.resize(lc.z.size());
      for (std::size_t b = 0; b < lc.z.size(); ++b) lc.act[b] = lc.z[b].cwiseMax(0.0);
      for (Eigen::Index slot = 0; slot < n_in; ++slot) {
        if (!t.cm.is_fake_slot(level, static_cast<int>(slot))) continue;
        for (Mat& ab : lc.act) ab.row(slot).setZero();
      }

      if (cs.pool_size > 1) {
        const Eigen::Index n_out = n_in / cs.pool_size;
        const Eigen::Index k = lc.z.front().cols();
        lc.arg.assign(lc.act.size(), Eigen::MatrixXi::Constant(n_out, k, -1));
        lc.out.assign(lc.act.size(), Mat::Zero(n_out, k));
        for (std::size_t b = 0; b < lc.act.size(); ++b) {
          for (Eigen::Index g = 0; g < n_out; ++g) {
            for (Eigen::Index j = 0; j < k; ++j) {
              double best = 0.0;
              int best_slot = -1;
              for (int r = 0; r < cs.pool_size; ++r) {
                const int slot = static_cast<int>(g) * cs.pool_size + r;
                if (t.cm.is_fake_slot(level, slot)) continue;
                const double val = lc.act[b](slot, j);
                if (best_slot < 0 || val > best) {
                  best = val;
                  best_slot = slot;
                }
              }
              if (best_slot >= 0) {
                lc.out[b](g, j) = best;
                lc.arg[b](g, j) = best_slot;
              }
            }
          }
        }
      } else {
        lc.out = lc.act;
      }
      cur = &lc.out;
    }

    const SignalBatch& last = *cur;
    const Eigen::Index n_last = last.front().rows();
    const Eigen::Index k_last = last.front().cols();
    tc.flat.resize(batch, t.flat_dim);
    for (int b = 0; b < batch; ++b)
      for (Eigen::Index vtx = 0; vtx < n_last; ++vtx)
        for (Eigen::Index j = 0; j < k_last; ++j)
          tc.flat(b, vtx * k_last + j) = last[static_cast<std::size_t>(b)](vtx, j);

    tc.feat = t.proj ? dense_forward(*t.proj, tc.flat) : tc.flat;
    cache.view_feats[v] = tc.feat;
  }

  Mat fused;
  if (n_views == 1) {
    cache.fuse_skipped = true;
    fused = cache.view_feats.front();
  } else {
    cache.fuse = fuse_forward(cache.view_feats, m.spec.fusion, m.spec.beta);
    fused = cache.fuse.out;
  }

  cache.head_in.clear();
  Mat h = std::move(fused);
  for (const DenseLayer& layer : m.head) {
    cache.head_in.push_back(h);
    h = dense_forward(layer, h);
  }
  cache.logits = std::move(h);
  return cache.logits;
}

// Accumulates parameter gradients into `g`, a zeroed shape-clone of `m`.
void backward_batch(const Model& m, const ForwardCache& cache, const Mat& grad_logits,
                    double l2, Model& g) {
  Mat gcur = grad_logits;
  for (int l = static_cast<int>(m.head.size()) - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    DenseGrads dg = dense_backward(m.head[li], cache.head_in[li], gcur, l2);
    g.head[li].weight += dg.weight;
    g.head[li].bias += dg.bias;
    gcur = std::move(dg.x);
  }

  const std::size_t n_views = m.towers.size();
  std::vector<Mat> gview;
  if (cache.fuse_skipped)
    gview.push_back(std::move(gcur));
  else
    gview = fuse_backward(cache.fuse, n_views, m.spec.fusion, m.spec.beta, gcur);

  for (std::size_t v = 0; v < n_views; ++v) {
    const Tower& t = m.towers[v];
    const TowerCache& tc = cache.towers[v];

    Mat gflat;
    if (t.proj) {
      DenseGrads dg = dense_backward(*t.proj, tc.flat, gview[v], l2);
      g.towers[v].proj->weight += dg.weight;
      g.towers[v].proj->bias += dg.bias;
      gflat = std::move(dg.x);
    } else {
      gflat = std::move(gview[v]);
    }

    const int batch = static_cast<int>(gflat.rows());
    const SignalBatch& last = tc.layers.back().out;
    const Eigen::Index n_last = last.front().rows();
    const Eigen::Index k_last = last.front().cols();
    SignalBatch gsig(static_cast<std::size_t>(batch), Mat(n_last, k_last));
    for (int b = 0; b < batch; ++b)
      for (Eigen::Index vtx = 0; vtx < n_last; ++vtx)
        for (Eigen::Index j = 0; j < k_last; ++j)
          gsig[static_cast<std::size_t>(b)](vtx, j) = gflat(b, vtx * k_last + j);

    for (int l = static_cast<int>(t.theta.size()) - 1; l >= 0; --l) {
      const std::size_t li = static_cast<std::size_t>(l);
      const LayerCache& lc = tc.layers[li];
      const ConvLayerSpec& cs = m.spec.conv[li];
      const int level = t.in_level[li];
      const Eigen::Index n_in = t.lap[li].n();
      const Eigen::Index k = lc.z.front().cols();

      SignalBatch gact;
      if (cs.pool_size > 1) {
        gact.assign(gsig.size(), Mat::Zero(n_in, k));
        for (std::size_t b = 0; b < gsig.size(); ++b) {
          for (Eigen::Index grp = 0; grp < gsig[b].rows(); ++grp) {
            for (Eigen::Index j = 0; j < k; ++j) {
              const int src = lc.arg[b](grp, j);
              if (src >= 0) gact[b](src, j) += gsig[b](grp, j);
            }
          }
        }
      } else {
        gact = std::move(gsig);
      }

      // forward forced fake rows to zero, so no gradient flows through them
      for (Eigen::Index slot = 0; slot < n_in; ++slot) {
        if (!t.cm.is_fake_slot(level, static_cast<int>(slot))) continue;
        for (Mat& gb : gact) gb.row(slot).setZero();
      }

      SignalBatch gz(gact.size());
      for (std::size_t b = 0; b < gact.size(); ++b) {
        gz[b] = (lc.z[b].array() > 0.0).cast<double>() * gact[b].array();
        g.towers[v].bias[li] += gz[b].colwise().sum().transpose();
      }

      ChebGrad cg = cheb_conv_backward(t.lap[li], lc.basis, t.theta[li], gz);
      for (std::size_t p = 0; p < cg.theta.size(); ++p)
        g.towers[v].theta[li].theta[p] += cg.theta[p];
      gsig = std::move(cg.x);
    }
  }
}

Model make_grad_holder(const Model& m) {
  Model g = m;
  zero_gcn(g);
  return g;
}

// ---- small string / number helpers ------------------------------------------

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t at = 0;
  while (true) {
    const std::size_t next = s.find(sep, at);
    if (next == std::string::npos) {
      parts.push_back(trim(s.substr(at)));
      return parts;
    }
    parts.push_back(trim(s.substr(at, next - at)));
    at = next + 1;
  }
}

long long to_ll(const std::string& key, const std::string& s) {
  long long v = 0;
  const std::string t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw InvalidData("bad integer for '" + key + "': " + s);
  return v;
}

int to_int(const std::string& key, const std::string& s) {
  return static_cast<int>(to_ll(key, s));
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const std::string t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw InvalidData("bad integer for '" + key + "': " + s);
  return v;
}

double to_double(const std::string& key, const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw InvalidData("bad number for '" + key + "': " + s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw InvalidData("bad number for '" + key + "': " + s);
  return v;
}

std::vector<int> to_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  if (trim(s).empty()) return out;
  for (const std::string& part : split(s, ',')) out.push_back(to_int(key, part));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::GCN: return "gcn";
    case Arch::RGCN_RLDAE: return "rgcn-rldae";
    case Arch::RGCN_DDAE: return "rgcn-ddae";
    case Arch::MVGCN: return "mvgcn";
    case Arch::MVRGCN_RLDAE: return "mvrgcn-rldae";
    case Arch::MVRGCN_DDAE: return "mvrgcn-ddae";
  }
  throw InvalidParameter("unknown architecture");
}

Arch arch_from(const std::string& s) {
  for (Arch a : {Arch::GCN, Arch::RGCN_RLDAE, Arch::RGCN_DDAE, Arch::MVGCN,
                 Arch::MVRGCN_RLDAE, Arch::MVRGCN_DDAE})
    if (s == arch_name(a)) return a;
  throw InvalidData("unknown architecture '" + s + "'");
}

const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::Max: return "max";
    case Fusion::Avg: return "avg";
    case Fusion::Mixed: return "mixed";
  }
  throw InvalidParameter("unknown fusion");
}

Fusion fusion_from(const std::string& s) {
  for (Fusion f : {Fusion::Max, Fusion::Avg, Fusion::Mixed})
    if (s == fusion_name(f)) return f;
  throw InvalidData("unknown fusion '" + s + "'");
}

const char* ae_act_name(AeActivation a) {
  switch (a) {
    case AeActivation::Identity: return "identity";
    case AeActivation::Sigmoid: return "sigmoid";
    case AeActivation::Relu: return "relu";
  }
  throw InvalidParameter("unknown activation");
}

AeActivation ae_act_from(const std::string& s) {
  for (AeActivation a : {AeActivation::Identity, AeActivation::Sigmoid, AeActivation::Relu})
    if (s == ae_act_name(a)) return a;
  throw InvalidData("unknown activation '" + s + "'");
}

const char* noise_name(NoiseKind k) {
  return k == NoiseKind::Masking ? "masking" : "gaussian";
}

NoiseKind noise_from(const std::string& s) {
  if (s == "masking") return NoiseKind::Masking;
  if (s == "gaussian") return NoiseKind::Gaussian;
  throw InvalidData("unknown noise kind '" + s + "'");
}

// ---- checkpoint bytes --------------------------------------------------------

constexpr char kCheckpointMagic[] = "RGCN1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

std::uint64_t get_u64(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

double get_f64(const std::string& buf, std::size_t at) {
  const std::uint64_t bits = get_u64(buf, at);
  double d = 0.0;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

}  // namespace

// ---- spec validation and model assembly ---------------------------------------

void ModelSpec::check(int n_views) const {
  if (n_views < 1) throw InvalidParameter("need at least one view");
  if (!multi_view() && n_views != 1)
    throw InvalidParameter("single-view architecture takes exactly one view");
  if (conv.empty()) throw InvalidParameter("need at least one conv layer");
  for (const ConvLayerSpec& c : conv) {
    if (c.feature_maps < 1) throw InvalidParameter("feature maps must be positive");
    if (c.cheb_order < 1) throw InvalidParameter("polynomial order must be positive");
    if (!power_of_two(c.pool_size))
      throw InvalidParameter("pool size must be a power of two");
  }
  for (int h : fc_hidden)
    if (h < 1) throw InvalidParameter("hidden widths must be positive");
  if (uses_ae()) {
    if (static_cast<int>(ae.size()) != n_views)
      throw InvalidParameter("need one autoencoder spec per view");
    for (const AeSpec& a : ae) a.check();
    if (ae_inner_epochs < 1)
      throw InvalidParameter("need at least one reconstruction epoch per training epoch");
  } else if (!ae.empty()) {
    throw InvalidParameter("autoencoder specs given for a plain architecture");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidParameter("beta must be in [0, 1]");
  if (!(eta >= 0.0) || !std::isfinite(eta))
    throw InvalidParameter("eta must be finite and non-negative");
  if (uses_rlae()) {
    if (!(lambda > 0.0)) throw InvalidParameter("lambda must be positive");
    if (!(admm_tol > 0.0)) throw InvalidParameter("decomposition tolerance must be positive");
  }
  if (pretrain_epochs < 0) throw InvalidParameter("pretrain epochs must be non-negative");
  if (epochs < 0) throw InvalidParameter("epochs must be non-negative");
  if (batch < 1) throw InvalidParameter("batch must be positive");
  adam.check();
}

Model build_model(const ModelSpec& spec, const std::vector<SparseGraph>& graphs,
                  const std::vector<int>& data_dims, int n_classes) {
  const int n_views = static_cast<int>(graphs.size());
  if (data_dims.size() != graphs.size())
    throw InvalidParameter("need one feature width per graph");
  spec.check(n_views);
  if (n_classes < 1) throw InvalidParameter("need at least one class");
  for (int v = 0; v < n_views; ++v) {
    const std::size_t vi = static_cast<std::size_t>(v);
    if (graphs[vi].vertex_count() < 1) throw InvalidParameter("graph has no vertices");
    if (data_dims[vi] != graphs[vi].vertex_count())
      throw InvalidParameter("feature width must match the graph vertex count");
    if (spec.uses_ae() && spec.ae[vi].input_dim() != data_dims[vi])
      throw InvalidParameter("autoencoder width must match its view");
  }

  int total_levels = 0;
  for (const ConvLayerSpec& c : spec.conv) total_levels += pool_levels(c.pool_size);

  Model m;
  m.spec = spec;
  m.n_classes = n_classes;
  m.view_dims = data_dims;

  Rng init = Rng::stream(spec.seed, kInitStream);
  auto uniform_fill = [&init](Mat& w, double bound) {
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init.uniform(-bound, bound);
  };

  for (int v = 0; v < n_views; ++v) {
    const std::size_t vi = static_cast<std::size_t>(v);
    Tower t;
    t.cm = coarsen(graphs[vi], total_levels,
                   Rng::mix(spec.seed + static_cast<std::uint64_t>(v), kCoarsenStream));
    int level = 0;
    int f_in = 1;
    for (const ConvLayerSpec& c : spec.conv) {
      t.in_level.push_back(level);
      Laplacian norm = normalized_laplacian(t.cm.padded_graph(level));
      t.lap.push_back(rescale_laplacian(norm, estimate_lambda_max(norm)));
      ChebParams p = ChebParams::zeros(c.cheb_order, f_in, c.feature_maps);
      const double bound = 1.0 / std::sqrt(static_cast<double>(c.cheb_order) * f_in);
      for (Mat& th : p.theta) uniform_fill(th, bound);
      t.theta.push_back(std::move(p));
      t.bias.push_back(Vec::Zero(c.feature_maps));
      f_in = c.feature_maps;
      level += pool_levels(c.pool_size);
    }
    t.flat_dim = t.cm.padded_size(level) * f_in;
    if (spec.uses_ae()) t.ae = ae_init(spec.ae[vi]);
    m.towers.push_back(std::move(t));
  }

  auto dense_init = [&](int in, int out, Activation act) {
    DenseLayer l;
    l.weight.resize(in, out);
    uniform_fill(l.weight, 1.0 / std::sqrt(static_cast<double>(in)));
    l.bias = Vec::Zero(out);
    l.act = act;
    return l;
  };

  const bool project = n_views > 1 && !spec.fc_hidden.empty();
  int head_in = 0;
  if (project) {
    for (Tower& t : m.towers)
      t.proj = dense_init(t.flat_dim, spec.fc_hidden.front(), Activation::Relu);
    head_in = spec.fc_hidden.front();
  } else {
    head_in = m.towers.front().flat_dim;
    for (const Tower& t : m.towers) {
      if (t.flat_dim != head_in)
        throw InvalidParameter(
            "views with different conv output widths need a hidden layer to fuse");
    }
  }

  std::vector<int> widths = project
                                ? std::vector<int>(spec.fc_hidden.begin() + 1, spec.fc_hidden.end())
                                : spec.fc_hidden;
  int cur = head_in;
  for (int h : widths) {
    m.head.push_back(dense_init(cur, h, Activation::Relu));
    cur = h;
  }
  m.head.push_back(dense_init(cur, n_classes, Activation::SoftmaxHead));
  m.param_count = count_parameters(m);
  return m;
}

long long count_parameters(const Model& model) {
  long long n = 0;
  visit_gcn_tensors(
      model, [&](const Mat& w) { n += w.size(); }, [&](const Vec& b) { n += b.size(); });
  if (model.spec.uses_ae())
    for (const AeSpec& a : model.spec.ae) n += static_cast<long long>(ae_param_count(a));
  return n;
}

Mat fuse_views(const std::vector<Mat>& features, Fusion fusion, double beta) {
  if (features.empty()) throw InvalidData("nothing to fuse");
  const Eigen::Index rows = features.front().rows(), cols = features.front().cols();
  for (const Mat& f : features)
    if (f.rows() != rows || f.cols() != cols)
      throw InvalidData("fused views must share one shape");
  if (fusion == Fusion::Mixed && !(beta >= 0.0 && beta <= 1.0))
    throw InvalidParameter("beta must be in [0, 1]");
  return fuse_forward(features, fusion, beta).out;
}

// ---- training -----------------------------------------------------------------

namespace {

TrainReport train_joint(Model& model, const std::vector<Mat>& xs, const LabelSet& labels,
                        const std::vector<Mat>* eval_xs, const LabelSet* eval_labels) {
  const auto t_start = std::chrono::steady_clock::now();
  const ModelSpec& spec = model.spec;
  const int n_views = static_cast<int>(model.towers.size());
  if (static_cast<int>(xs.size()) != n_views)
    throw InvalidData("view count does not match the model");
  const Eigen::Index n = xs.front().rows();
  if (n < 1) throw InvalidData("no training samples");
  for (int v = 0; v < n_views; ++v) {
    const std::size_t vi = static_cast<std::size_t>(v);
    if (xs[vi].rows() != n) throw InvalidData("views disagree on the sample count");
    if (xs[vi].cols() != model.view_dims[vi])
      throw InvalidData("feature width does not match the model");
  }
  if (labels.size() != static_cast<int>(n))
    throw InvalidData("label count does not match the data");
  if (labels.num_classes != model.n_classes)
    throw InvalidData("class count does not match the model");
  if (eval_xs) {
    if (!eval_labels) throw InvalidData("eval split needs labels");
    if (static_cast<int>(eval_xs->size()) != n_views)
      throw InvalidData("eval view count does not match the model");
    const Eigen::Index ne = eval_xs->front().rows();
    for (int v = 0; v < n_views; ++v) {
      const std::size_t vi = static_cast<std::size_t>(v);
      if ((*eval_xs)[vi].rows() != ne) throw InvalidData("eval views disagree on the sample count");
      if ((*eval_xs)[vi].cols() != model.view_dims[vi])
        throw InvalidData("eval feature width does not match the model");
    }
    if (eval_labels->size() != static_cast<int>(ne))
      throw InvalidData("eval label count does not match the eval data");
    if (eval_labels->num_classes != model.n_classes)
      throw InvalidData("eval class count does not match the model");
  }

  TrainReport rep;
  const int batch = static_cast<int>(std::min<Eigen::Index>(spec.batch, n));

  std::vector<AeTrainer> trainers;
  std::vector<Mat> inputs(xs.begin(), xs.end());
  std::vector<Mat> sparse(static_cast<std::size_t>(n_views));
  if (spec.uses_ae()) {
    trainers.reserve(static_cast<std::size_t>(n_views));
    for (int v = 0; v < n_views; ++v) {
      const std::size_t vi = static_cast<std::size_t>(v);
      trainers.emplace_back(spec.ae[vi], spec.adam);
      trainers[vi].weights = model.towers[vi].ae;  // adopt, do not re-draw
      if (spec.uses_rlae()) sparse[vi] = Mat::Zero(n, model.view_dims[vi]);
    }
  }

  Rng shuffle = Rng::stream(spec.seed, kShuffleStream);
  AdamState state = AdamState::zeros(gcn_param_dim(model));
  Vec params = pack_gcn(model);
  Model grads_holder = make_grad_holder(model);

  try {
    if (spec.uses_ae() && spec.pretrain_epochs > 0) {
      for (int v = 0; v < n_views; ++v) {
        const std::size_t vi = static_cast<std::size_t>(v);
        const NoiseSpec* corruption = spec.uses_dae() ? &spec.dae_noise : nullptr;
        trainers[vi].run(xs[vi], spec.pretrain_epochs, batch, corruption, spec.eta);
        model.towers[vi].ae = trainers[vi].weights;
      }
    }
    for (int e = 0; e < spec.epochs; ++e) {
      double ae_loss = 0.0;
      if (spec.uses_ae()) {
        double residual = 0.0;
        for (int v = 0; v < n_views; ++v) {
          const std::size_t vi = static_cast<std::size_t>(v);
          if (spec.uses_rlae()) {
            const Mat l_target = xs[vi] - sparse[vi];
            const std::vector<double> losses =
                trainers[vi].run(l_target, spec.ae_inner_epochs, batch, nullptr, spec.eta);
            ae_loss += losses.back();
            Mat low = ae_forward(spec.ae[vi], trainers[vi].weights, l_target);
            sparse[vi] = prox_l1(xs[vi] - low, spec.lambda);
            const double xn = xs[vi].norm();
            const double r = (xs[vi] - low - sparse[vi]).norm();
            residual += xn > 0.0 ? r / xn : r;
            inputs[vi] = std::move(low);
          } else {
            const std::vector<double> losses =
                trainers[vi].run(xs[vi], spec.ae_inner_epochs, batch, &spec.dae_noise, spec.eta);
            ae_loss += losses.back();
            inputs[vi] = ae_forward(spec.ae[vi], trainers[vi].weights, xs[vi]);
          }
          model.towers[vi].ae = trainers[vi].weights;
        }
        if (spec.uses_rlae()) rep.admm_residual.push_back(residual / n_views);
      }

      const std::vector<int> perm = shuffle.permutation(static_cast<int>(n));
      double ce_weighted = 0.0;
      long labeled_total = 0;
      for (Eigen::Index start = 0; start < n; start += batch) {
        const int rows = static_cast<int>(std::min<Eigen::Index>(batch, n - start));
        LabelSet lb;
        lb.num_classes = labels.num_classes;
        lb.labels.resize(static_cast<std::size_t>(rows));
        int labeled_rows = 0;
        for (int r = 0; r < rows; ++r) {
          const int src = perm[static_cast<std::size_t>(start + r)];
          lb.labels[static_cast<std::size_t>(r)] = labels.labels[static_cast<std::size_t>(src)];
          labeled_rows += lb.labels[static_cast<std::size_t>(r)] != LabelSet::kUnlabeled;
        }
        if (labeled_rows == 0) continue;  // nothing to learn from

        std::vector<Mat> xb(static_cast<std::size_t>(n_views));
        for (int v = 0; v < n_views; ++v) {
          const std::size_t vi = static_cast<std::size_t>(v);
          xb[vi].resize(rows, inputs[vi].cols());
          for (int r = 0; r < rows; ++r)
            xb[vi].row(r) = inputs[vi].row(perm[static_cast<std::size_t>(start + r)]);
        }

        ForwardCache cache;
        const Mat logits = forward_batch(model, xb, cache);
        const XentResult xr = softmax_xent(logits, lb);
        if (!std::isfinite(xr.loss)) {
          rep.diverged = true;
          break;
        }
        ce_weighted += xr.loss * labeled_rows;
        labeled_total += labeled_rows;

        zero_gcn(grads_holder);
        backward_batch(model, cache, xr.grad, spec.adam.l2, grads_holder);
        const Vec grads = pack_gcn(grads_holder);
        adam_step(state, params, grads, spec.adam, e);
        unpack_gcn(params, model);
      }
      if (rep.diverged) break;

      rep.ce.push_back(labeled_total > 0 ? ce_weighted / labeled_total : 0.0);
      rep.ae_term.push_back(ae_loss);
      std::vector<const Mat*> ridged;
      for (const Tower& t : model.towers)
        if (t.proj) ridged.push_back(&t.proj->weight);
      for (const DenseLayer& h : model.head) ridged.push_back(&h.weight);
      rep.total.push_back(rep.ce.back() + ae_loss + l2_penalty(spec.adam.l2, ridged));
      rep.train_accuracy.push_back(evaluate(model, xs, labels));
      if (eval_xs) rep.test_accuracy.push_back(evaluate(model, *eval_xs, *eval_labels));
    }
  } catch (const Diverged&) {
    rep.diverged = true;
  }

  if (spec.uses_rlae() && !rep.admm_residual.empty() &&
      rep.admm_residual.back() > spec.admm_tol) {
    rep.admm_converged = false;
    std::fprintf(stderr,
                 "warning: decomposition residual %.3g still above tolerance %.3g at the end "
                 "of training\n",
                 rep.admm_residual.back(), spec.admm_tol);
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

}  // namespace

TrainReport train_rgcn(Model& model, const Mat& x, const LabelSet& labels, const Mat* eval_x,
                       const LabelSet* eval_labels) {
  if (model.towers.size() != 1)
    throw InvalidData("model has several views; use train_mvrgcn");
  const std::vector<Mat> xs{x};
  if (!eval_x) return train_joint(model, xs, labels, nullptr, nullptr);
  const std::vector<Mat> ev{*eval_x};
  return train_joint(model, xs, labels, &ev, eval_labels);
}

TrainReport train_mvrgcn(Model& model, const std::vector<Mat>& xs, const LabelSet& labels,
                         const std::vector<Mat>* eval_xs, const LabelSet* eval_labels) {
  return train_joint(model, xs, labels, eval_xs, eval_labels);
}

// ---- inference ------------------------------------------------------------------

Mat predict_logits(const Model& model, const std::vector<Mat>& xs) {
  const std::size_t n_views = model.towers.size();
  if (xs.size() != n_views) throw InvalidData("view count does not match the model");
  const Eigen::Index n = xs.front().rows();
  for (std::size_t v = 0; v < n_views; ++v) {
    if (xs[v].rows() != n) throw InvalidData("views disagree on the sample count");
    if (xs[v].cols() != model.view_dims[v])
      throw InvalidData("feature width does not match the model");
  }
  if (n == 0) return Mat(0, model.n_classes);

  std::vector<Mat> proc(n_views);
  for (std::size_t v = 0; v < n_views; ++v)
    proc[v] = model.spec.uses_ae() ? ae_forward(model.spec.ae[v], model.towers[v].ae, xs[v])
                                   : xs[v];
  ForwardCache cache;
  return forward_batch(model, proc, cache);
}

double evaluate(const Model& model, const std::vector<Mat>& xs, const LabelSet& labels) {
  const Mat logits = predict_logits(model, xs);
  if (labels.size() != static_cast<int>(logits.rows()))
    throw InvalidData("label count does not match the data");
  if (labels.num_classes != model.n_classes)
    throw InvalidData("class count does not match the model");
  long labeled = 0, hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels.labels[static_cast<std::size_t>(i)];
    if (y == LabelSet::kUnlabeled) continue;
    ++labeled;
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    hits += best == y;
  }
  if (labeled == 0) throw InvalidData("no labeled rows to evaluate");
  return static_cast<double>(hits) / static_cast<double>(labeled);
}

double evaluate(const Model& model, const Mat& x, const LabelSet& labels) {
  return evaluate(model, std::vector<Mat>{x}, labels);
}

Vec model_parameters(const Model& model) { return pack_gcn(model); }

void set_model_parameters(Model& model, const Vec& flat) {
  if (flat.size() != gcn_param_dim(model))
    throw InvalidParameter("flat parameter size does not match the model");
  unpack_gcn(flat, model);
}

std::pair<double, Vec> model_loss_grad(const Model& model, const std::vector<Mat>& xs,
                                       const LabelSet& labels) {
  if (xs.size() != model.towers.size())
    throw InvalidData("view count does not match the model");
  const Eigen::Index n = xs.front().rows();
  if (n < 1) throw InvalidData("no rows to score");
  for (std::size_t v = 0; v < xs.size(); ++v) {
    if (xs[v].rows() != n) throw InvalidData("views disagree on the sample count");
    if (xs[v].cols() != model.view_dims[v])
      throw InvalidData("feature width does not match the model");
  }
  if (labels.size() != static_cast<int>(n))
    throw InvalidData("label count does not match the data");
  if (labels.num_classes != model.n_classes)
    throw InvalidData("class count does not match the model");

  ForwardCache cache;
  const Mat logits = forward_batch(model, xs, cache);
  const XentResult xr = softmax_xent(logits, labels);
  Model holder = make_grad_holder(model);
  backward_batch(model, cache, xr.grad, model.spec.adam.l2, holder);
  std::vector<const Mat*> ridged;
  for (const Tower& t : model.towers)
    if (t.proj) ridged.push_back(&t.proj->weight);
  for (const DenseLayer& h : model.head) ridged.push_back(&h.weight);
  return {xr.loss + l2_penalty(model.spec.adam.l2, ridged), pack_gcn(holder)};
}

// ---- key=value plumbing -----------------------------------------------------------

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw InvalidData("config line without '=': " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty()) throw InvalidData("config line with an empty key");
    kv[key] = trim(stripped.substr(eq + 1));  // later lines win
  }
  return kv;
}

std::string format_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [key, value] : kv) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::map<std::string, std::string> model_spec_to_kv(const ModelSpec& spec, int n_classes,
                                                    const std::vector<int>& view_dims) {
  std::map<std::string, std::string> kv;
  kv["arch"] = arch_name(spec.arch);
  std::string conv;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    if (i) conv += ",";
    conv += std::to_string(spec.conv[i].feature_maps) + ":" +
            std::to_string(spec.conv[i].cheb_order) + ":" +
            std::to_string(spec.conv[i].pool_size);
  }
  kv["conv"] = conv;
  kv["fc"] = fmt_int_list(spec.fc_hidden);
  kv["fusion"] = fusion_name(spec.fusion);
  kv["beta"] = fmt_double(spec.beta);
  kv["eta"] = fmt_double(spec.eta);
  kv["lambda"] = fmt_double(spec.lambda);
  kv["admm_tol"] = fmt_double(spec.admm_tol);
  kv["ae_inner_epochs"] = std::to_string(spec.ae_inner_epochs);
  kv["pretrain_epochs"] = std::to_string(spec.pretrain_epochs);
  for (std::size_t v = 0; v < spec.ae.size(); ++v) {
    const std::string prefix = "ae" + std::to_string(v);
    kv[prefix] = fmt_int_list(spec.ae[v].layer_sizes);
    kv[prefix + "_act"] = ae_act_name(spec.ae[v].activation);
    kv[prefix + "_seed"] = std::to_string(spec.ae[v].seed);
  }
  kv["noise"] = noise_name(spec.dae_noise.kind);
  kv["noise_level"] = fmt_double(spec.dae_noise.level);
  kv["noise_value"] = fmt_double(spec.dae_noise.val);
  kv["noise_seed"] = std::to_string(spec.dae_noise.seed);
  kv["noise_columns"] = spec.dae_noise.column_mode ? "1" : "0";
  kv["lr"] = fmt_double(spec.adam.lr);
  kv["adam_beta1"] = fmt_double(spec.adam.beta1);
  kv["adam_beta2"] = fmt_double(spec.adam.beta2);
  kv["adam_eps"] = fmt_double(spec.adam.eps);
  kv["lr_decay"] = fmt_double(spec.adam.lr_decay);
  kv["l2"] = fmt_double(spec.adam.l2);
  kv["epochs"] = std::to_string(spec.epochs);
  kv["batch"] = std::to_string(spec.batch);
  kv["seed"] = std::to_string(spec.seed);
  kv["classes"] = std::to_string(n_classes);
  kv["dims"] = fmt_int_list(view_dims);
  return kv;
}

ParsedModelSpec model_spec_from_kv(const std::map<std::string, std::string>& kv) {
  ParsedModelSpec out;
  ModelSpec& spec = out.spec;

  std::map<std::string, std::string> rest = kv;
  auto take = [&rest](const char* key) -> std::optional<std::string> {
    auto it = rest.find(key);
    if (it == rest.end()) return std::nullopt;
    std::string v = it->second;
    rest.erase(it);
    return v;
  };
  auto require = [&take](const char* key) {
    auto v = take(key);
    if (!v) throw InvalidData(std::string("missing model key '") + key + "'");
    return *v;
  };

  spec.arch = arch_from(require("arch"));
  for (const std::string& part : split(require("conv"), ',')) {
    const std::vector<std::string> f = split(part, ':');
    if (f.size() != 3)
      throw InvalidData("conv layer must read maps:order:pool, got '" + part + "'");
    ConvLayerSpec c;
    c.feature_maps = to_int("conv", f[0]);
    c.cheb_order = to_int("conv", f[1]);
    c.pool_size = to_int("conv", f[2]);
    spec.conv.push_back(c);
  }
  out.n_classes = to_int("classes", require("classes"));
  out.view_dims = to_int_list("dims", require("dims"));

  if (auto v = take("fc")) spec.fc_hidden = to_int_list("fc", *v);
  if (auto v = take("fusion")) spec.fusion = fusion_from(*v);
  if (auto v = take("beta")) spec.beta = to_double("beta", *v);
  if (auto v = take("eta")) spec.eta = to_double("eta", *v);
  if (auto v = take("lambda")) spec.lambda = to_double("lambda", *v);
  if (auto v = take("admm_tol")) spec.admm_tol = to_double("admm_tol", *v);
  if (auto v = take("ae_inner_epochs")) spec.ae_inner_epochs = to_int("ae_inner_epochs", *v);
  if (auto v = take("pretrain_epochs")) spec.pretrain_epochs = to_int("pretrain_epochs", *v);
  for (std::size_t v = 0;; ++v) {
    const std::string prefix = "ae" + std::to_string(v);
    auto sizes = take(prefix.c_str());
    if (!sizes) break;
    AeSpec a;
    a.layer_sizes = to_int_list(prefix, *sizes);
    if (auto act = take((prefix + "_act").c_str())) a.activation = ae_act_from(*act);
    if (auto seed = take((prefix + "_seed").c_str())) a.seed = to_u64(prefix + "_seed", *seed);
    spec.ae.push_back(std::move(a));
  }
  if (auto v = take("noise")) spec.dae_noise.kind = noise_from(*v);
  if (auto v = take("noise_level")) spec.dae_noise.level = to_double("noise_level", *v);
  if (auto v = take("noise_value")) spec.dae_noise.val = to_double("noise_value", *v);
  if (auto v = take("noise_seed")) spec.dae_noise.seed = to_u64("noise_seed", *v);
  if (auto v = take("noise_columns")) spec.dae_noise.column_mode = to_int("noise_columns", *v) != 0;
  if (auto v = take("lr")) spec.adam.lr = to_double("lr", *v);
  if (auto v = take("adam_beta1")) spec.adam.beta1 = to_double("adam_beta1", *v);
  if (auto v = take("adam_beta2")) spec.adam.beta2 = to_double("adam_beta2", *v);
  if (auto v = take("adam_eps")) spec.adam.eps = to_double("adam_eps", *v);
  if (auto v = take("lr_decay")) spec.adam.lr_decay = to_double("lr_decay", *v);
  if (auto v = take("l2")) spec.adam.l2 = to_double("l2", *v);
  if (auto v = take("epochs")) spec.epochs = to_int("epochs", *v);
  if (auto v = take("batch")) spec.batch = to_int("batch", *v);
  if (auto v = take("seed")) spec.seed = to_u64("seed", *v);

  if (!rest.empty()) throw InvalidData("unknown model key '" + rest.begin()->first + "'");
  if (out.view_dims.empty()) throw InvalidData("dims must list at least one view width");
  spec.check(static_cast<int>(out.view_dims.size()));
  return out;
}

// ---- checkpoints --------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Model& model) {
  std::string out = kCheckpointMagic;
  const std::string text =
      format_kv(model_spec_to_kv(model.spec, model.n_classes, model.view_dims));
  put_u64(out, text.size());
  out += text;

  auto put_mat = [&out](const Mat& w) {
    put_u64(out, static_cast<std::uint64_t>(w.rows()));
    put_u64(out, static_cast<std::uint64_t>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
  };
  auto put_vec = [&out](const Vec& b) {
    put_u64(out, static_cast<std::uint64_t>(b.size()));
    put_u64(out, 1);
    for (Eigen::Index i = 0; i < b.size(); ++i) put_f64(out, b[i]);
  };
  visit_gcn_tensors(model, put_mat, put_vec);
  visit_ae_tensors(model, put_mat, put_vec);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidData("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw InvalidData("failed writing '" + path + "'");
}

Model load_checkpoint(const std::string& path, const std::vector<SparseGraph>& graphs) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidData("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();

  const std::size_t magic_len = std::strlen(kCheckpointMagic);
  for (std::size_t i = 0; i < magic_len; ++i)
    if (i >= buf.size() || buf[i] != kCheckpointMagic[i])
      throw ParseError("bad checkpoint magic", i);
  if (buf.size() < magic_len + 8) throw ParseError("truncated header", buf.size());
  const std::uint64_t text_len = get_u64(buf, magic_len);
  const std::size_t text_at = magic_len + 8;
  if (text_len > buf.size() - text_at) throw ParseError("truncated spec text", buf.size());
  const std::string text = buf.substr(text_at, static_cast<std::size_t>(text_len));

  const ParsedModelSpec parsed = model_spec_from_kv(parse_kv_lines(text));
  if (parsed.view_dims.size() != graphs.size())
    throw InvalidData("checkpoint view count does not match the graphs");
  Model m = build_model(parsed.spec, graphs, parsed.view_dims, parsed.n_classes);

  std::size_t at = text_at + static_cast<std::size_t>(text_len);
  auto get_tensor = [&buf, &at](Eigen::Index rows, Eigen::Index cols, auto&& store) {
    if (buf.size() - at < 16) throw ParseError("truncated tensor header", buf.size());
    const std::uint64_t r = get_u64(buf, at);
    const std::uint64_t c = get_u64(buf, at + 8);
    if (r != static_cast<std::uint64_t>(rows) || c != static_cast<std::uint64_t>(cols))
      throw ParseError("tensor shape does not match the embedded spec", at);
    at += 16;
    const std::size_t payload = static_cast<std::size_t>(rows) *
                                static_cast<std::size_t>(cols) * sizeof(double);
    if (buf.size() - at < payload) throw ParseError("truncated tensor payload", buf.size());
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        store(i, j, get_f64(buf, at));
        at += 8;
      }
  };
  auto get_mat = [&get_tensor](Mat& w) {
    get_tensor(w.rows(), w.cols(), [&w](Eigen::Index i, Eigen::Index j, double v) { w(i, j) = v; });
  };
  auto get_vec = [&get_tensor](Vec& b) {
    get_tensor(b.size(), 1, [&b](Eigen::Index i, Eigen::Index, double v) { b[i] = v; });
  };
  visit_gcn_tensors(m, get_mat, get_vec);
  visit_ae_tensors(m, get_mat, get_vec);
  if (at != buf.size()) throw ParseError("trailing bytes after the last tensor", at);
  return m;
}

}  // namespace rgcn
