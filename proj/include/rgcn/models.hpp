#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rgcn/autoencoder.hpp"
#include "rgcn/graph.hpp"
#include "rgcn/nncore.hpp"
#include "rgcn/noise.hpp"
#include "rgcn/spectral.hpp"

namespace rgcn {

enum class Arch { GCN, RGCN_RLDAE, RGCN_DDAE, MVGCN, MVRGCN_RLDAE, MVRGCN_DDAE };

enum class Fusion { Max, Avg, Mixed };

struct ConvLayerSpec {
  int feature_maps = 32;  // output channels
  int cheb_order = 16;    // polynomial support size
  int pool_size = 1;      // 1 or a power of two
};

struct ModelSpec {
  Arch arch = Arch::GCN;
  std::vector<ConvLayerSpec> conv;  // tower layers, shared shape across views
  std::vector<int> fc_hidden;       // hidden widths before the class layer
  std::vector<AeSpec> ae;           // one per view for *_RLDAE / *_DDAE archs
  Fusion fusion = Fusion::Max;
  double beta = 0.5;    // mixed-fusion weight on the average term
  double eta = 1.0;     // reconstruction term weight in the joint loss
  double lambda = 0.1;  // sparse threshold for *_RLDAE archs
  double admm_tol = 1e-2;
  int ae_inner_epochs = 1;  // reconstruction epochs per training epoch
  int pretrain_epochs = 0;  // reconstruction-only epochs before the joint loop
  NoiseSpec dae_noise;      // corruption for *_DDAE archs
  AdamConfig adam;
  int epochs = 20;
  int batch = 100;
  std::uint64_t seed = 0;

  bool multi_view() const {
    return arch == Arch::MVGCN || arch == Arch::MVRGCN_RLDAE || arch == Arch::MVRGCN_DDAE;
  }
  bool uses_rlae() const { return arch == Arch::RGCN_RLDAE || arch == Arch::MVRGCN_RLDAE; }
  bool uses_dae() const { return arch == Arch::RGCN_DDAE || arch == Arch::MVRGCN_DDAE; }
  bool uses_ae() const { return uses_rlae() || uses_dae(); }

  void check(int n_views) const;
};

/// One per-view processing pipeline: coarsening hierarchy, a rescaled
/// Laplacian per conv layer, the layer parameters, and (for robust archs) the
/// view's autoencoder weights. With several views and a hidden head, `proj`
/// maps the flattened conv output to the first hidden width per view so
/// fusion sees equally shaped features.
struct Tower {
  CoarseningMap cm;
  std::vector<Laplacian> lap;   // rescaled, indexed by conv layer
  std::vector<int> in_level;    // coarsening level at each layer's input
  std::vector<ChebParams> theta;
  std::vector<Vec> bias;        // one per conv layer, length = feature_maps
  std::optional<DenseLayer> proj;
  std::vector<DenseLayer> ae;
  int flat_dim = 0;             // vertices*maps after the last conv layer
};

struct Model {
  ModelSpec spec;
  int n_classes = 0;
  std::vector<int> view_dims;
  std::vector<Tower> towers;
  std::vector<DenseLayer> head;  // shared layers; last one is the class layer
  long long param_count = 0;     // conv + dense + autoencoder parameters
};

/// Assemble the model: validates spec/graph/width consistency, coarsens each
/// view's graph as demanded by the pool sizes, estimates and rescales the
/// Laplacians, and initializes all parameters from per-purpose seed streams.
Model build_model(const ModelSpec& spec, const std::vector<SparseGraph>& graphs,
                  const std::vector<int>& data_dims, int n_classes);

long long count_parameters(const Model& model);

/// Elementwise combination of equally shaped per-view feature matrices:
/// max, mean, or max + beta * mean.
Mat fuse_views(const std::vector<Mat>& features, Fusion fusion, double beta = 0.5);

struct TrainReport {
  std::vector<double> ce;        // per-epoch cross-entropy (labeled mean)
  std::vector<double> ae_term;   // per-epoch weighted reconstruction term
  std::vector<double> total;     // ce + ae_term + ridge penalty
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;  // filled when an eval split is supplied
  std::vector<double> admm_residual;  // *_RLDAE: one residual per epoch
  double wall_seconds = 0.0;
  bool admm_converged = true;
  bool diverged = false;  // loss went non-finite; the report is truncated
};

/// Joint training on one view. Per epoch: for robust archs one reconstruction
/// round first (RLDAE: autoencoder epochs on X - E, refresh L, re-threshold
/// E; DDAE: denoising epochs on x), then ADAM mini-batch updates of the
/// convolutional net on the current reconstruction (plain GCN reads x
/// directly). Cross-entropy ignores unlabeled rows. Deterministic given
/// model.spec.seed. A non-finite loss stops training and flags the report.
TrainReport train_rgcn(Model& model, const Mat& x, const LabelSet& labels,
                       const Mat* eval_x = nullptr, const LabelSet* eval_labels = nullptr);

/// Multi-view counterpart: per-view towers fused into the shared head; the
/// reconstruction terms of all views add up. A single view reduces to
/// train_rgcn exactly.
TrainReport train_mvrgcn(Model& model, const std::vector<Mat>& xs, const LabelSet& labels,
                         const std::vector<Mat>* eval_xs = nullptr,
                         const LabelSet* eval_labels = nullptr);

/// Fraction of labeled rows whose argmax prediction (ties to the lowest class
/// index) matches the label. Robust archs evaluate through their autoencoder.
double evaluate(const Model& model, const std::vector<Mat>& xs, const LabelSet& labels);
double evaluate(const Model& model, const Mat& x, const LabelSet& labels);

/// Class scores for each row (logits; argmax semantics as in evaluate).
Mat predict_logits(const Model& model, const std::vector<Mat>& xs);

/// Flat snapshot of the convolutional-net parameters (conv coefficients and
/// biases, per-view projections, shared head) in the optimizer's packing
/// order. Autoencoder weights live outside this vector; they are trained by
/// the alternating scheme with their own optimizer.
Vec model_parameters(const Model& model);
void set_model_parameters(Model& model, const Vec& flat);

/// Classification loss at the current parameters — labeled-mean cross-entropy
/// through the full composed forward pass plus the ridge penalty on dense
/// weights — and its gradient in model_parameters order. `xs` feeds the
/// convolutional net directly (no autoencoder preprocessing).
std::pair<double, Vec> model_loss_grad(const Model& model, const std::vector<Mat>& xs,
                                       const LabelSet& labels);

// "key = value" lines <-> map, shared by checkpoints and run configs.
std::map<std::string, std::string> parse_kv_lines(const std::string& text);
std::string format_kv(const std::map<std::string, std::string>& kv);

std::map<std::string, std::string> model_spec_to_kv(const ModelSpec& spec, int n_classes,
                                                    const std::vector<int>& view_dims);
struct ParsedModelSpec {
  ModelSpec spec;
  int n_classes = 0;
  std::vector<int> view_dims;
};
ParsedModelSpec model_spec_from_kv(const std::map<std::string, std::string>& kv);

// Checkpoint: magic "RGCN1", u64 length + spec text, then every parameter
// tensor in declaration order (u64 rows, u64 cols, row-major little-endian
// f64). Loading rebuilds the model from the embedded spec against the
// caller's graphs and verifies every shape.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path, const std::vector<SparseGraph>& graphs);

}  // namespace rgcn
