#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rgcn/data.hpp"
#include "rgcn/models.hpp"

using namespace rgcn;

namespace {

std::filesystem::path model_temp(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

// Path graph with slightly uneven weights so pooling never sees exact ties.
SparseGraph path_graph(int n) {
  std::vector<GraphEdge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0 + 0.05 * i});
  return SparseGraph(n, edges);
}

LabelSet cyclic_labels(int n, int classes) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = i % classes;
  return LabelSet(y, classes);
}

bool bitwise_equal(const Vec& a, const Vec& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint64_t u64_at(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

}  // namespace

TEST_CASE("parameter count matches the closed-form layer census") {
  SparseGraph g = path_graph(12);
  ModelSpec spec;
  spec.conv = {{32, 5, 1}};
  Model m = build_model(spec, {g}, {12}, 3);

  // 5 coefficient matrices of 1x32, one bias of 32, then a 384x3 class layer
  const long long expected = 5 * 1 * 32 + 32 + 12 * 32 * 3 + 3;
  CHECK(m.param_count == expected);
  CHECK(count_parameters(m) == expected);
  CHECK(model_parameters(m).size() == expected);
  CHECK(m.towers.size() == 1);
  CHECK(m.towers[0].flat_dim == 12 * 32);
  CHECK_FALSE(m.towers[0].proj.has_value());

  ModelSpec robust = spec;
  robust.arch = Arch::RGCN_RLDAE;
  robust.ae = {AeSpec::mirrored(12, {4}, AeActivation::Sigmoid, 3)};
  Model rm = build_model(robust, {g}, {12}, 3);
  const long long ae_params = (12 * 4 + 4) + (4 * 12 + 12);
  CHECK(rm.param_count == expected + ae_params);
  // the flat optimizer vector excludes the autoencoder
  CHECK(model_parameters(rm).size() == expected);
}

TEST_CASE("model construction rejects inconsistent configurations") {
  SparseGraph g = path_graph(12);
  ModelSpec ok;
  ok.conv = {{4, 2, 1}};
  CHECK_NOTHROW(build_model(ok, {g}, {12}, 2));

  ModelSpec s = ok;
  s.conv[0].pool_size = 3;
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.conv.clear();
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.fc_hidden = {0};
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.beta = 1.5;
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.eta = -1.0;
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.arch = Arch::RGCN_RLDAE;
  s.ae = {AeSpec::mirrored(12, {4}, AeActivation::Identity, 0)};
  s.lambda = 0.0;
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);
  s.lambda = 0.1;
  s.ae_inner_epochs = 0;
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);
  s.ae_inner_epochs = 1;
  CHECK_NOTHROW(build_model(s, {g}, {12}, 2));
  s.ae[0] = AeSpec::mirrored(8, {4}, AeActivation::Identity, 0);  // wrong width
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);
  s.ae.clear();  // robust arch without autoencoder specs
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  s = ok;
  s.ae = {AeSpec::mirrored(12, {4}, AeActivation::Identity, 0)};  // plain arch with one
  CHECK_THROWS_AS(build_model(s, {g}, {12}, 2), InvalidParameter);

  // single-view architecture given two views
  CHECK_THROWS_AS(build_model(ok, {g, g}, {12, 12}, 2), InvalidParameter);
  // width disagreeing with the graph
  CHECK_THROWS_AS(build_model(ok, {g}, {11}, 2), InvalidParameter);
  // one width per graph
  CHECK_THROWS_AS(build_model(ok, {g}, {12, 12}, 2), InvalidParameter);
  CHECK_THROWS_AS(build_model(ok, {g}, {12}, 0), InvalidParameter);
}

TEST_CASE("multi-view towers of different widths need a shared hidden layer") {
  SparseGraph g1 = path_graph(8), g2 = path_graph(6);
  ModelSpec spec;
  spec.arch = Arch::MVGCN;
  spec.conv = {{4, 2, 1}};
  CHECK_THROWS_AS(build_model(spec, {g1, g2}, {8, 6}, 2), InvalidParameter);

  spec.fc_hidden = {7};
  Model m = build_model(spec, {g1, g2}, {8, 6}, 2);
  REQUIRE(m.towers[0].proj.has_value());
  REQUIRE(m.towers[1].proj.has_value());
  CHECK(m.towers[0].proj->weight.rows() == 32);
  CHECK(m.towers[1].proj->weight.rows() == 24);
  CHECK(m.head.size() == 1);  // projections absorb the hidden width
  const long long conv_params = 2 * (2 * 1 * 4 + 4);
  const long long proj_params = (32 * 7 + 7) + (24 * 7 + 7);
  const long long head_params = 7 * 2 + 2;
  CHECK(m.param_count == conv_params + proj_params + head_params);

  // equal widths fuse directly when no hidden layer is requested
  spec.fc_hidden.clear();
  Model same = build_model(spec, {g1, g1}, {8, 8}, 2);
  CHECK_FALSE(same.towers[0].proj.has_value());
  CHECK(same.head.size() == 1);
  CHECK(same.head[0].weight.rows() == 32);
}

TEST_CASE("fusion combines per-view features elementwise") {
  Mat a(1, 2), b(1, 2);
  a << 1.0, -1.0;
  b << -1.0, 1.0;
  Mat mx = fuse_views({a, b}, Fusion::Max);
  CHECK(mx(0, 0) == 1.0);
  CHECK(mx(0, 1) == 1.0);
  Mat avg = fuse_views({a, b}, Fusion::Avg);
  CHECK(avg(0, 0) == 0.0);
  CHECK(avg(0, 1) == 0.0);
  Mat mixed = fuse_views({a, b}, Fusion::Mixed, 0.5);
  CHECK(mixed(0, 0) == 1.0);
  CHECK(mixed(0, 1) == 1.0);

  // identical views collapse for max and average alike
  CHECK((fuse_views({a, a}, Fusion::Max) - a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fuse_views({a, a}, Fusion::Avg) - a).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(31);
  std::vector<Mat> views{rng.normal_matrix(4, 5), rng.normal_matrix(4, 5),
                         rng.normal_matrix(4, 5)};
  Mat vmax = fuse_views(views, Fusion::Max);
  Mat vavg = fuse_views(views, Fusion::Avg);
  Mat vmix = fuse_views(views, Fusion::Mixed, 0.25);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      double m = std::max({views[0](r, c), views[1](r, c), views[2](r, c)});
      double s = (views[0](r, c) + views[1](r, c) + views[2](r, c)) / 3.0;
      CHECK(vmax(r, c) == m);
      CHECK(vavg(r, c) == doctest::Approx(s).epsilon(1e-15));
      CHECK(vmix(r, c) == doctest::Approx(m + 0.25 * s).epsilon(1e-15));
      CHECK(vmax(r, c) >= vavg(r, c));
    }
  }

  Mat wrong(2, 2);
  CHECK_THROWS_AS(fuse_views({a, wrong}, Fusion::Max), InvalidData);
  CHECK_THROWS_AS(fuse_views({}, Fusion::Max), InvalidData);
  CHECK_THROWS_AS(fuse_views({a, b}, Fusion::Mixed, 1.5), InvalidParameter);
}

TEST_CASE("composed classification gradient matches finite differences") {
  SparseGraph g = path_graph(6);
  ModelSpec spec;
  spec.conv = {{3, 3, 2}, {4, 2, 1}};
  spec.fc_hidden = {5};
  spec.seed = 21;
  Model model = build_model(spec, {g}, {6}, 2);

  Rng rng(77);
  const Mat x = rng.normal_matrix(4, 6);
  const LabelSet labels({0, 1, LabelSet::kUnlabeled, 1}, 2);

  Model work = model;
  auto f = [&](const Vec& p) {
    set_model_parameters(work, p);
    return model_loss_grad(work, {x}, labels);
  };
  GradCheckReport rep = gradcheck(f, model_parameters(model), 1e-4, 400, 5);
  INFO("max rel err ", rep.max_rel_err);
  CHECK(rep.ok());
  CHECK(rep.checked == model_parameters(model).size());
}

TEST_CASE("fused multi-view gradient matches finite differences") {
  SparseGraph g1 = path_graph(6), g2 = path_graph(5);
  ModelSpec spec;
  spec.arch = Arch::MVGCN;
  spec.conv = {{3, 2, 1}};
  spec.fc_hidden = {4};
  spec.fusion = Fusion::Mixed;
  spec.beta = 0.3;
  spec.seed = 13;
  Model model = build_model(spec, {g1, g2}, {6, 5}, 2);

  Rng rng(19);
  const std::vector<Mat> xs{rng.normal_matrix(4, 6), rng.normal_matrix(4, 5)};
  const LabelSet labels({0, 1, 1, LabelSet::kUnlabeled}, 2);

  Model work = model;
  auto f = [&](const Vec& p) {
    set_model_parameters(work, p);
    return model_loss_grad(work, xs, labels);
  };
  GradCheckReport rep = gradcheck(f, model_parameters(model), 1e-4, 400, 3);
  INFO("max rel err ", rep.max_rel_err);
  CHECK(rep.ok());

  spec.fusion = Fusion::Max;
  Model mmax = build_model(spec, {g1, g2}, {6, 5}, 2);
  Model work2 = mmax;
  auto f2 = [&](const Vec& p) {
    set_model_parameters(work2, p);
    return model_loss_grad(work2, xs, labels);
  };
  GradCheckReport rep2 = gradcheck(f2, model_parameters(mmax), 1e-4, 400, 3);
  INFO("max rel err ", rep2.max_rel_err);
  CHECK(rep2.ok());
}

TEST_CASE("unlabeled rows leave the classification gradient unchanged") {
  SparseGraph g = path_graph(6);
  ModelSpec spec;
  spec.conv = {{3, 2, 1}};
  spec.fc_hidden = {4};
  spec.seed = 8;
  Model model = build_model(spec, {g}, {6}, 2);

  Rng rng(4);
  const Mat x4 = rng.normal_matrix(4, 6);
  const Mat x2 = x4.topRows(2);
  auto [l4, g4] = model_loss_grad(model, {x4}, LabelSet({0, 1, LabelSet::kUnlabeled, LabelSet::kUnlabeled}, 2));
  auto [l2, g2] = model_loss_grad(model, {x2}, LabelSet({0, 1}, 2));
  CHECK(l4 == doctest::Approx(l2).epsilon(1e-14));
  CHECK((g4 - g2).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, g2.cwiseAbs().maxCoeff()));
}

TEST_CASE("a frozen identity autoencoder reproduces the plain training trace bitwise") {
  const int n = 10, samples = 30;
  SparseGraph g = path_graph(n);
  Rng rng(17);
  const Mat x = rng.normal_matrix(samples, n);
  const LabelSet labels = cyclic_labels(samples, 2);

  ModelSpec base;
  base.conv = {{8, 4, 1}};
  base.epochs = 5;
  base.batch = 10;
  base.seed = 11;
  Model plain = build_model(base, {g}, {n}, 2);

  ModelSpec robust = base;
  robust.arch = Arch::RGCN_RLDAE;
  robust.eta = 0.0;  // freezes the autoencoder: zero-scaled gradients are exact no-ops
  robust.lambda = 1e9;
  robust.ae = {AeSpec::mirrored(n, {n}, AeActivation::Identity, 5)};
  Model frozen = build_model(robust, {g}, {n}, 2);
  for (DenseLayer& l : frozen.towers[0].ae) {
    l.weight = Mat::Identity(n, n);
    l.bias.setZero();
  }

  TrainReport a = train_rgcn(plain, x, labels);
  TrainReport b = train_rgcn(frozen, x, labels);
  REQUIRE(a.ce.size() == 5);
  REQUIRE(b.ce.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) {
    CHECK(a.ce[e] == b.ce[e]);
    CHECK(a.total[e] == b.total[e]);
    CHECK(a.train_accuracy[e] == b.train_accuracy[e]);
    CHECK(b.ae_term[e] == 0.0);
    CHECK(b.admm_residual[e] == 0.0);
  }
  CHECK(b.admm_converged);
  CHECK(bitwise_equal(model_parameters(plain), model_parameters(frozen)));
  CHECK(evaluate(plain, x, labels) == evaluate(frozen, x, labels));
}

TEST_CASE("a single view degenerates the multi-view path to the plain one") {
  const int n = 9, samples = 24;
  SparseGraph g = path_graph(n);
  Rng rng(23);
  const Mat x = rng.normal_matrix(samples, n);
  const LabelSet labels = cyclic_labels(samples, 2);

  ModelSpec single;
  single.conv = {{4, 3, 1}};
  single.epochs = 3;
  single.batch = 8;
  single.seed = 9;
  Model sm = build_model(single, {g}, {n}, 2);

  ModelSpec multi = single;
  multi.arch = Arch::MVGCN;
  multi.fusion = Fusion::Mixed;  // any fusion of one view is that view
  Model mm = build_model(multi, {g}, {n}, 2);

  TrainReport a = train_rgcn(sm, x, labels);
  TrainReport b = train_mvrgcn(mm, {x}, labels);
  REQUIRE(a.ce.size() == b.ce.size());
  for (std::size_t e = 0; e < a.ce.size(); ++e) {
    CHECK(a.ce[e] == b.ce[e]);
    CHECK(a.train_accuracy[e] == b.train_accuracy[e]);
  }
  CHECK(bitwise_equal(model_parameters(sm), model_parameters(mm)));
}

TEST_CASE("an untrained model scores near chance on balanced labels") {
  const int n = 16, samples = 400;
  SparseGraph g = path_graph(n);
  Rng rng(3);
  const Mat x = rng.normal_matrix(samples, n);
  const LabelSet labels = cyclic_labels(samples, 4);

  ModelSpec spec;
  spec.conv = {{8, 3, 1}};
  spec.seed = 3;
  Model m = build_model(spec, {g}, {n}, 4);
  const double acc = evaluate(m, x, labels);
  CHECK(acc > 0.10);
  CHECK(acc < 0.45);
}

TEST_CASE("training learns a solvable synthetic task") {
  SynthClassification task = synth_classification(32, 150, 2, 5, 5.0);
  const Mat xtr = take_rows(task.dataset.x, task.dataset.train_idx);
  const LabelSet ytr = take_labels(task.dataset.labels, task.dataset.train_idx);
  const Mat xte = take_rows(task.dataset.x, task.dataset.test_idx);
  const LabelSet yte = take_labels(task.dataset.labels, task.dataset.test_idx);

  ModelSpec spec;
  spec.conv = {{8, 5, 2}};
  spec.fc_hidden = {16};
  spec.epochs = 15;
  spec.batch = 30;
  spec.seed = 4;
  spec.adam.lr = 0.01;
  Model m = build_model(spec, {task.graph}, {32}, 2);

  TrainReport rep = train_rgcn(m, xtr, ytr, &xte, &yte);
  REQUIRE_FALSE(rep.diverged);
  REQUIRE(rep.ce.size() == 15);
  CHECK(rep.total.size() == 15);
  CHECK(rep.train_accuracy.size() == 15);
  CHECK(rep.test_accuracy.size() == 15);
  CHECK(rep.ae_term.back() == 0.0);
  CHECK(rep.admm_residual.empty());
  CHECK(rep.wall_seconds > 0.0);
  CHECK(rep.ce.back() < rep.ce.front());
  for (std::size_t e = 0; e < rep.ce.size(); ++e) CHECK(rep.total[e] >= rep.ce[e]);
  CHECK(rep.train_accuracy.back() >= 0.9);
  CHECK(rep.test_accuracy.back() >= 0.8);
}

TEST_CASE("robust architectures train end to end and reproduce bitwise") {
  SynthClassification task = synth_classification(16, 60, 2, 8, 4.0);
  const Mat& x = task.dataset.x;
  const LabelSet& y = task.dataset.labels;

  ModelSpec spec;
  spec.arch = Arch::RGCN_RLDAE;
  spec.conv = {{6, 4, 1}};
  spec.ae = {AeSpec::mirrored(16, {6}, AeActivation::Sigmoid, 2)};
  spec.lambda = 0.5;
  spec.ae_inner_epochs = 2;
  spec.admm_tol = 0.5;
  spec.epochs = 6;
  spec.batch = 20;
  spec.seed = 15;
  Model m1 = build_model(spec, {task.graph}, {16}, 2);
  TrainReport r1 = train_rgcn(m1, x, y);
  REQUIRE_FALSE(r1.diverged);
  REQUIRE(r1.admm_residual.size() == 6);
  CHECK(r1.ae_term.back() > 0.0);
  CHECK(r1.admm_converged == (r1.admm_residual.back() <= spec.admm_tol));

  Model m2 = build_model(spec, {task.graph}, {16}, 2);
  TrainReport r2 = train_rgcn(m2, x, y);
  for (std::size_t e = 0; e < r1.ce.size(); ++e) {
    CHECK(r1.ce[e] == r2.ce[e]);
    CHECK(r1.ae_term[e] == r2.ae_term[e]);
    CHECK(r1.admm_residual[e] == r2.admm_residual[e]);
  }
  CHECK(bitwise_equal(model_parameters(m1), model_parameters(m2)));

  ModelSpec dd = spec;
  dd.arch = Arch::RGCN_DDAE;
  dd.dae_noise = {NoiseKind::Masking, 0.2, 1.0, 3, false};
  dd.pretrain_epochs = 2;
  dd.epochs = 4;
  Model m3 = build_model(dd, {task.graph}, {16}, 2);
  TrainReport r3 = train_rgcn(m3, x, y);
  REQUIRE_FALSE(r3.diverged);
  CHECK(r3.admm_residual.empty());
  CHECK(r3.ae_term.size() == 4);
  CHECK(r3.ae_term.back() > 0.0);
}

TEST_CASE("mini-batches without a labeled row are skipped") {
  const int n = 6, samples = 8;
  SparseGraph g = path_graph(n);
  Rng rng(2);
  const Mat x = rng.normal_matrix(samples, n);
  std::vector<int> y(samples, LabelSet::kUnlabeled);
  y[3] = 1;
  const LabelSet labels(y, 2);

  ModelSpec spec;
  spec.conv = {{3, 2, 1}};
  spec.epochs = 2;
  spec.batch = 4;
  spec.seed = 2;
  Model m = build_model(spec, {g}, {n}, 2);
  TrainReport rep = train_rgcn(m, x, labels);
  REQUIRE(rep.ce.size() == 2);
  CHECK(std::isfinite(rep.ce[0]));
  CHECK(std::isfinite(rep.ce[1]));
}

TEST_CASE("model spec round-trips through key=value text") {
  ModelSpec spec;
  spec.arch = Arch::MVRGCN_RLDAE;
  spec.conv = {{32, 16, 4}, {16, 8, 2}};
  spec.fc_hidden = {64, 10};
  spec.fusion = Fusion::Mixed;
  spec.beta = 0.25;
  spec.eta = 0.5;
  spec.lambda = 0.05;
  spec.admm_tol = 1e-3;
  spec.ae_inner_epochs = 3;
  spec.pretrain_epochs = 2;
  spec.ae = {AeSpec::mirrored(64, {32, 8}, AeActivation::Relu, 4),
             AeSpec::mirrored(48, {16}, AeActivation::Sigmoid, 6)};
  spec.dae_noise = {NoiseKind::Gaussian, 0.02, 5.0, 99, true};
  spec.adam.lr = 0.01;
  spec.adam.beta1 = 0.8;
  spec.adam.beta2 = 0.9;
  spec.adam.eps = 1e-6;
  spec.adam.lr_decay = 0.9;
  spec.adam.l2 = 1e-3;
  spec.epochs = 7;
  spec.batch = 50;
  spec.seed = 1234;

  const auto kv = model_spec_to_kv(spec, 3, {64, 48});
  const ParsedModelSpec parsed = model_spec_from_kv(parse_kv_lines(format_kv(kv)));
  const ModelSpec& p = parsed.spec;
  CHECK(parsed.n_classes == 3);
  CHECK(parsed.view_dims == std::vector<int>{64, 48});
  CHECK(p.arch == Arch::MVRGCN_RLDAE);
  REQUIRE(p.conv.size() == 2);
  CHECK(p.conv[0].feature_maps == 32);
  CHECK(p.conv[0].cheb_order == 16);
  CHECK(p.conv[0].pool_size == 4);
  CHECK(p.conv[1].feature_maps == 16);
  CHECK(p.fc_hidden == std::vector<int>{64, 10});
  CHECK(p.fusion == Fusion::Mixed);
  CHECK(p.beta == 0.25);
  CHECK(p.eta == 0.5);
  CHECK(p.lambda == 0.05);
  CHECK(p.admm_tol == 1e-3);
  CHECK(p.ae_inner_epochs == 3);
  CHECK(p.pretrain_epochs == 2);
  REQUIRE(p.ae.size() == 2);
  CHECK(p.ae[0].layer_sizes == spec.ae[0].layer_sizes);
  CHECK(p.ae[0].activation == AeActivation::Relu);
  CHECK(p.ae[0].seed == 4);
  CHECK(p.ae[1].layer_sizes == spec.ae[1].layer_sizes);
  CHECK(p.ae[1].activation == AeActivation::Sigmoid);
  CHECK(p.dae_noise.kind == NoiseKind::Gaussian);
  CHECK(p.dae_noise.level == 0.02);
  CHECK(p.dae_noise.val == 5.0);
  CHECK(p.dae_noise.seed == 99);
  CHECK(p.dae_noise.column_mode);
  CHECK(p.adam.lr == 0.01);
  CHECK(p.adam.beta1 == 0.8);
  CHECK(p.adam.beta2 == 0.9);
  CHECK(p.adam.eps == 1e-6);
  CHECK(p.adam.lr_decay == 0.9);
  CHECK(p.adam.l2 == 1e-3);
  CHECK(p.epochs == 7);
  CHECK(p.batch == 50);
  CHECK(p.seed == 1234);

  auto broken = kv;
  broken["bogus"] = "1";
  CHECK_THROWS_AS(model_spec_from_kv(broken), InvalidData);
  broken = kv;
  broken.erase("arch");
  CHECK_THROWS_AS(model_spec_from_kv(broken), InvalidData);
  broken = kv;
  broken["conv"] = "32:16";
  CHECK_THROWS_AS(model_spec_from_kv(broken), InvalidData);
  broken = kv;
  broken["epochs"] = "three";
  CHECK_THROWS_AS(model_spec_from_kv(broken), InvalidData);
}

TEST_CASE("key=value parsing handles comments, blanks, and later overrides") {
  const std::string text =
      "# leading comment\n"
      "\n"
      "  lr = 0.01   # trailing comment\n"
      "batch= 7\n"
      "batch =9\r\n";
  const auto kv = parse_kv_lines(text);
  REQUIRE(kv.size() == 2);
  CHECK(kv.at("lr") == "0.01");
  CHECK(kv.at("batch") == "9");

  CHECK_THROWS_AS(parse_kv_lines("noequals\n"), InvalidData);
  CHECK_THROWS_AS(parse_kv_lines("= value\n"), InvalidData);

  CHECK(format_kv({{"a", "1"}, {"b", "x y"}}) == "a = 1\nb = x y\n");
}

TEST_CASE("checkpoints restore the exact model") {
  const int n = 9;
  SparseGraph g = path_graph(n);
  SynthClassification task = synth_classification(n, 40, 2, 4, 6.0, std::nullopt, 3);

  ModelSpec spec;
  spec.arch = Arch::RGCN_DDAE;
  spec.conv = {{4, 3, 1}};
  spec.ae = {AeSpec::mirrored(n, {3}, AeActivation::Relu, 1)};
  spec.dae_noise = {NoiseKind::Masking, 0.1, 1.0, 7, false};
  spec.epochs = 2;
  spec.batch = 10;
  spec.seed = 7;
  Model m = build_model(spec, {task.graph}, {n}, 2);
  train_rgcn(m, task.dataset.x, task.dataset.labels);

  const auto path = model_temp("model.ckpt");
  save_checkpoint(path.string(), m);
  Model back = load_checkpoint(path.string(), {task.graph});
  CHECK(back.spec.arch == Arch::RGCN_DDAE);
  CHECK(back.spec.epochs == 2);
  CHECK(back.n_classes == 2);
  CHECK(bitwise_equal(model_parameters(m), model_parameters(back)));
  REQUIRE(back.towers[0].ae.size() == m.towers[0].ae.size());
  for (std::size_t l = 0; l < m.towers[0].ae.size(); ++l) {
    CHECK((m.towers[0].ae[l].weight.array() == back.towers[0].ae[l].weight.array()).all());
    CHECK((m.towers[0].ae[l].bias.array() == back.towers[0].ae[l].bias.array()).all());
  }

  Rng rng(12);
  const Mat probe = rng.normal_matrix(5, n);
  const Mat la = predict_logits(m, {probe});
  const Mat lb = predict_logits(back, {probe});
  CHECK((la.array() == lb.array()).all());

  // loading against a mismatched graph fails the rebuild
  CHECK_THROWS_AS(load_checkpoint(path.string(), {path_graph(8)}), InvalidParameter);
}

TEST_CASE("checkpoint loader rejects malformed files with byte offsets") {
  SparseGraph g = path_graph(6);
  ModelSpec spec;
  spec.conv = {{3, 2, 1}};
  Model m = build_model(spec, {g}, {6}, 2);
  const auto path = model_temp("broken.ckpt");
  save_checkpoint(path.string(), m);
  const std::string good = read_file(path);

  {
    std::string bad = good;
    bad[2] ^= 0x20;
    write_file(path, bad);
    try {
      load_checkpoint(path.string(), {g});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset == 2);
    }
  }
  {
    std::string bad = good.substr(0, good.size() - 5);
    write_file(path, bad);
    try {
      load_checkpoint(path.string(), {g});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset == bad.size());
    }
  }
  {
    std::string bad = good + "x";
    write_file(path, bad);
    try {
      load_checkpoint(path.string(), {g});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset == good.size());
    }
  }
  {
    // corrupt the first tensor header so its shape contradicts the spec
    std::string bad = good;
    const std::uint64_t text_len = u64_at(bad, 5);
    const std::size_t header_at = 5 + 8 + static_cast<std::size_t>(text_len);
    bad[header_at] = static_cast<char>(static_cast<unsigned char>(bad[header_at]) + 1);
    write_file(path, bad);
    try {
      load_checkpoint(path.string(), {g});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset == header_at);
    }
  }
  CHECK_THROWS_AS(load_checkpoint(model_temp("missing.ckpt").string(), {g}), InvalidData);
}

TEST_CASE("robust architectures evaluate through their autoencoder") {
  const int n = 8;
  SparseGraph g = path_graph(n);
  ModelSpec rs;
  rs.arch = Arch::RGCN_DDAE;
  rs.conv = {{4, 2, 1}};
  rs.ae = {AeSpec::mirrored(n, {3}, AeActivation::Sigmoid, 2)};
  rs.seed = 7;
  Model rm = build_model(rs, {g}, {n}, 2);

  ModelSpec gs;
  gs.conv = rs.conv;
  gs.seed = 7;  // same draws for the convolutional net
  Model gm = build_model(gs, {g}, {n}, 2);

  Rng rng(5);
  const Mat x = rng.normal_matrix(5, n);
  const Mat through = ae_forward(rs.ae[0], rm.towers[0].ae, x);
  const Mat la = predict_logits(rm, {x});
  const Mat lb = predict_logits(gm, {through});
  CHECK((la.array() == lb.array()).all());
}

TEST_CASE("evaluation breaks prediction ties toward the lower class") {
  const int n = 6;
  SparseGraph g = path_graph(n);
  ModelSpec spec;
  spec.conv = {{3, 2, 1}};
  Model m = build_model(spec, {g}, {n}, 3);
  set_model_parameters(m, Vec::Zero(model_parameters(m).size()));  // all logits 0

  Rng rng(1);
  const Mat x = rng.normal_matrix(3, n);
  CHECK(evaluate(m, x, LabelSet({0, 1, 0}, 3)) == doctest::Approx(2.0 / 3.0));

  LabelSet unlabeled;
  unlabeled.num_classes = 3;
  unlabeled.labels = {LabelSet::kUnlabeled, LabelSet::kUnlabeled, LabelSet::kUnlabeled};
  CHECK_THROWS_AS(evaluate(m, x, unlabeled), InvalidData);

  const Mat empty(0, n);
  LabelSet none;
  none.num_classes = 3;
  CHECK_THROWS_AS(evaluate(m, empty, none), InvalidData);
  CHECK_THROWS_AS(predict_logits(m, {x, x}), InvalidData);
}
