#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowgnn/diffcore/grad_check.hpp"
#include "flowgnn/diffcore/ops.hpp"
#include "flowgnn/errors.hpp"
#include "flowgnn/flowgraph/graph.hpp"
#include "flowgnn/models/forward.hpp"
#include "flowgnn/models/model.hpp"
#include "flowgnn/rng.hpp"
#include "flowgnn/sampler/sampler.hpp"

using namespace flowgnn;
using namespace flowgnn::models;
using diffcore::Tensor;
using sampler::NodeBlock;
using sampler::SampleConfig;
using sampler::SampledBlock;
using sampler::SampleGraph;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("flowgnn_models_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// Six line-graph nodes in two same-source groups; adjacency
// 0-1, 0-2, 1-2, 2-3, 3-4, 4-5.
flowgraph::LineGraph six_node_line_graph() {
  flowgraph::LineGraph g;
  g.feature_dim = 3;
  g.offsets = {0, 2, 4, 7, 9, 11, 12};
  g.neighbors = {1, 2, 0, 2, 0, 1, 3, 2, 4, 3, 5, 4};
  g.features = {0.5, -1.0, 2.0,  1.5, 0.25, -0.75, -0.5, 1.0, 0.0,
                2.0, -2.0, 1.0,  0.1, 0.9,  -1.1,  1.0,  1.0, 0.5};
  g.labels = {0, 1, 2, 0, 1, 2};
  g.binary_labels = {0, 1, 1, 0, 1, 1};
  g.timestamps = {3.0, 1.0, 4.0, 1.0, 5.0, 9.0};
  g.flow_index = {0, 1, 2, 3, 4, 5};
  g.src_endpoint = {0, 0, 0, 1, 1, 1};
  g.dst_endpoint = {2, 2, 3, 3, 2, 2};
  return g;
}

Hyper small_gtcn_hyper() {
  Hyper h;
  h.feature_dim = 3;
  h.num_classes = 3;
  h.hidden = 4;
  h.layers = 2;
  h.heads = 2;
  h.head_dim = 2;
  h.diffusion_order = 2;
  h.window = 3;
  h.embed_rank = 2;
  h.num_nodes = 6;
  h.dropout = 0.5;
  return h;
}

NodeBlock take_all_node_block(const SampleGraph& g,
                              const std::vector<std::uint32_t>& batch,
                              std::size_t hops) {
  SampleConfig cfg;
  cfg.hops = hops;
  cfg.sizes.assign(hops, 64);
  cfg.seed = 1;
  return sampler::khop_node_sample(g, batch, cfg, 0, 0);
}

SampledBlock take_all_edge_block(const SampleGraph& g,
                                 const std::vector<std::uint32_t>& batch,
                                 std::size_t hops) {
  SampleConfig cfg;
  cfg.hops = hops;
  cfg.sizes.assign(hops, 64);
  cfg.seed = 1;
  return sampler::khop_sample(g, batch, cfg, 0, 0);
}

// Two-sided flow graph: sources 0..3, destinations 4..7, six flows.
SampleGraph small_flow_graph() {
  SampleGraph g;
  g.nodes = 8;
  g.offsets = {0, 2, 3, 5, 6, 8, 10, 12, 12};
  g.neighbors = {4, 5, 4, 5, 6, 6, 0, 1, 0, 2, 2, 3};
  g.edge_endpoints = {{0, 4}, {1, 4}, {2, 5}, {0, 5}, {3, 6}, {2, 6}};
  return g;
}

Tensor random_features(std::size_t rows, std::size_t cols,
                       std::uint64_t seed) {
  rng::Pcg gen(seed);
  return Tensor::uniform({rows, cols}, -1.0, 1.0, gen);
}

void zero_param(ModelState& state, const std::string& name) {
  auto& d = state.param(name).mutable_data();
  std::fill(d.begin(), d.end(), 0.0);
}

std::vector<Tensor> all_params(ModelState& state) {
  std::vector<Tensor> ps;
  for (auto& kv : state.params) ps.push_back(kv.second);
  return ps;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------- mean

TEST_CASE("mean aggregation averages, idempotent on constants, zero on empty") {
  Tensor same = Tensor::from_data({3, 2}, {1, 2, 1, 2, 1, 2});
  Tensor m = mean_aggregate(same, 2);
  CHECK(m.at(0, 0) == doctest::Approx(1.0));
  CHECK(m.at(0, 1) == doctest::Approx(2.0));

  Tensor empty = mean_aggregate(Tensor(), 4);
  REQUIRE(empty.shape() == diffcore::Shape{1, 4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(empty.at(0, i) == 0.0);

  Tensor basis = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor half = mean_aggregate(basis, 2);
  CHECK(half.at(0, 0) == doctest::Approx(0.5));
  CHECK(half.at(0, 1) == doctest::Approx(0.5));

  CHECK_THROWS_AS(mean_aggregate(basis, 3), DimensionError);
}

// ---------------------------------------------------------------- sage

TEST_CASE("sage update applies the weight to the concat and clamps") {
  Tensor h_prev = Tensor::from_data({1, 2}, {1, 2});
  Tensor h_agg = Tensor::from_data({1, 2}, {3, 4});

  Tensor w0 = Tensor::zeros({4, 2});
  Tensor out0 = sage_update(h_prev, h_agg, w0);
  CHECK(out0.at(0, 0) == 0.0);
  CHECK(out0.at(0, 1) == 0.0);

  // First-block selector: output copies h_prev when it is positive.
  Tensor wid = Tensor::from_data({4, 2}, {1, 0, 0, 1, 0, 0, 0, 0});
  Tensor outid = sage_update(h_prev, h_agg, wid);
  CHECK(outid.at(0, 0) == doctest::Approx(1.0));
  CHECK(outid.at(0, 1) == doctest::Approx(2.0));

  // Hand arithmetic: concat [1,2,3,4], pre-activation [4, 5, -5].
  Tensor w = Tensor::from_data({4, 3}, {1, 0, -1, 0, 1, 0, 1, 1, 0, 0, 0, -1});
  Tensor out = sage_update(h_prev, h_agg, w);
  CHECK(out.at(0, 0) == doctest::Approx(4.0));
  CHECK(out.at(0, 1) == doctest::Approx(5.0));
  CHECK(out.at(0, 2) == 0.0);

  CHECK_THROWS_AS(sage_update(h_prev, Tensor::zeros({2, 2}), w),
                  DimensionError);
  CHECK_THROWS_AS(sage_update(h_prev, h_agg, Tensor::zeros({5, 2})),
                  DimensionError);
}

TEST_CASE("edge embedding concatenates endpoints and optional edge features") {
  Tensor h_u = random_features(2, 3, 11);
  Tensor h_v = random_features(2, 3, 12);
  Tensor e = Tensor::from_data({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}, true);

  Tensor plain = sage_edge_embed(h_u, h_v, e, false);
  Tensor resid = sage_edge_embed(h_u, h_v, e, true);
  REQUIRE(plain.shape() == diffcore::Shape{2, 6});
  REQUIRE(resid.shape() == diffcore::Shape{2, 10});

  // Zero edge features: the residual form differs only by trailing zeros.
  Tensor ez = Tensor::zeros({2, 4});
  Tensor rz = sage_edge_embed(h_u, h_v, ez, true);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 6; ++c) CHECK(rz.at(r, c) == plain.at(r, c));
    for (std::size_t c = 6; c < 10; ++c) CHECK(rz.at(r, c) == 0.0);
  }

  // Gradient reaches e_uv only through the residual concat.
  Tensor loss_no = diffcore::sum_all(sage_edge_embed(h_u, h_v, e, false));
  loss_no.backward();
  CHECK_FALSE(e.has_grad());
  Tensor loss_yes = diffcore::sum_all(sage_edge_embed(h_u, h_v, e, true));
  loss_yes.backward();
  REQUIRE(e.has_grad());
  for (double gv : e.grad()) CHECK(gv == doctest::Approx(1.0));
}

TEST_CASE("edge model sees only its own connected component") {
  SampleGraph g;
  g.nodes = 4;
  g.offsets = {0, 1, 2, 3, 4};
  g.neighbors = {2, 3, 0, 1};
  g.edge_endpoints = {{0, 2}, {1, 3}};

  Hyper h;
  h.feature_dim = 3;
  h.num_classes = 2;
  h.hidden = 4;
  h.sage_layers = 2;
  ModelState state = init_model(Arch::kEGraphSageM, h, 5);

  SampledBlock block = take_all_edge_block(g, {0, 1}, 2);
  Tensor feats = random_features(2, 3, 21);
  Tensor base = egraphsage_forward(block, {0, 1}, g, feats, state);

  // Perturb the other edge's features: this edge's logits are untouched.
  std::vector<double> bumped = feats.data();
  bumped[3] += 10.0;
  bumped[4] -= 3.0;
  Tensor feats2 = Tensor::from_data({2, 3}, bumped);
  Tensor moved = egraphsage_forward(block, {0, 1}, g, feats2, state);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(moved.at(0, c) == base.at(0, c));
    CHECK(moved.at(1, c) != base.at(1, c));
  }

  // Batch permutation permutes logits rows bitwise.
  SampledBlock block_rev = take_all_edge_block(g, {1, 0}, 2);
  Tensor rev = egraphsage_forward(block_rev, {1, 0}, g, feats, state);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(rev.at(0, c) == base.at(1, c));
    CHECK(rev.at(1, c) == base.at(0, c));
  }

  // Depth mismatch is refused.
  SampledBlock shallow = take_all_edge_block(g, {0, 1}, 1);
  CHECK_THROWS_AS(egraphsage_forward(shallow, {0, 1}, g, feats, state),
                  ConfigError);
  ModelState gat_state = init_model(Arch::kGat, small_gtcn_hyper(), 5);
  CHECK_THROWS_AS(egraphsage_forward(block, {0, 1}, g, feats, gat_state),
                  UsageError);
}

TEST_CASE("minibatch edge aggregation equals a whole-graph dense pass") {
  SampleGraph g = small_flow_graph();
  const std::size_t f = 3, d = 4, classes = 2, rounds = 2;
  Hyper h;
  h.feature_dim = f;
  h.num_classes = classes;
  h.hidden = d;
  h.sage_layers = rounds;
  ModelState state = init_model(Arch::kEGraphSageM, h, 33);
  Tensor feats = random_features(g.edge_endpoints.size(), f, 77);

  std::vector<std::uint32_t> batch = {0, 2, 5, 3};
  SampledBlock block = take_all_edge_block(g, batch, rounds);
  Tensor logits = egraphsage_forward(block, batch, g, feats, state);

  // Straight-line oracle: plain loops over every node, all neighbors.
  std::vector<std::vector<double>> states(g.nodes,
                                          std::vector<double>(f, 1.0));
  std::size_t width = f;
  for (std::size_t k = 1; k <= rounds; ++k) {
    const auto& wt = state.param("sage.l" + std::to_string(k) + ".W").data();
    std::size_t in = 2 * width;
    std::vector<std::vector<double>> next(g.nodes, std::vector<double>(d));
    for (std::size_t v = 0; v < g.nodes; ++v) {
      std::vector<double> agg(width, 0.0);
      std::size_t deg = g.offsets[v + 1] - g.offsets[v];
      for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
        for (std::size_t c = 0; c < width; ++c) {
          agg[c] += states[g.neighbors[e]][c];
        }
      }
      if (deg > 0) {
        for (double& a : agg) a /= static_cast<double>(deg);
      }
      std::vector<double> cat(states[v]);
      cat.insert(cat.end(), agg.begin(), agg.end());
      for (std::size_t o = 0; o < d; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += cat[i] * wt[i * d + o];
        next[v][o] = std::max(acc, 0.0);
      }
    }
    states = std::move(next);
    width = d;
  }
  const auto& cw = state.param("cls.W").data();
  const auto& cb = state.param("cls.b").data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto [u, v] = g.edge_endpoints[batch[i]];
    std::vector<double> z(states[u]);
    z.insert(z.end(), states[v].begin(), states[v].end());
    for (std::size_t c = 0; c < f; ++c) z.push_back(feats.at(batch[i], c));
    for (std::size_t c = 0; c < classes; ++c) {
      double acc = cb[c];
      for (std::size_t j = 0; j < z.size(); ++j) {
        acc += z[j] * cw[j * classes + c];
      }
      CHECK(logits.at(i, c) == doctest::Approx(acc).epsilon(1e-9));
    }
  }
}

// ----------------------------------------------------------- attention

TEST_CASE("attention coefficients match the hand softmax") {
  Tensor w = Tensor::from_data({1, 1}, {1.0});
  Tensor a = Tensor::from_data({2, 1}, {1.0, 0.0});
  Tensor h_v = Tensor::from_data({1, 1}, {0.0});

  Tensor nb = Tensor::from_data({2, 1}, {1.0, 2.0});
  Tensor alpha = attention_coeffs(h_v, nb, w, a);
  double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(alpha.at(0, 0) == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
  CHECK(alpha.at(1, 0) == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-12));

  // Negative score goes through the 0.2 leaky slope.
  Tensor nb2 = Tensor::from_data({2, 1}, {-1.0, 2.0});
  Tensor alpha2 = attention_coeffs(h_v, nb2, w, a);
  double lo = std::exp(-0.2), hi = std::exp(2.0);
  CHECK(alpha2.at(0, 0) == doctest::Approx(lo / (lo + hi)).epsilon(1e-12));

  // Identical neighbors and zero attention vectors are both uniform.
  Tensor same = Tensor::from_data({3, 1}, {0.7, 0.7, 0.7});
  Tensor alpha3 = attention_coeffs(h_v, same, w, a);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(alpha3.at(i, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  Tensor alpha4 = attention_coeffs(h_v, nb2, w, Tensor::zeros({2, 1}));
  CHECK(alpha4.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  // Random coefficients always normalize.
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    rng::Pcg gen(900 + trial);
    Tensor wr = Tensor::uniform({3, 2}, -1, 1, gen);
    Tensor ar = Tensor::uniform({4, 1}, -1, 1, gen);
    Tensor hr = Tensor::uniform({1, 3}, -1, 1, gen);
    Tensor nr = Tensor::uniform({5, 3}, -1, 1, gen);
    Tensor al = attention_coeffs(hr, nr, wr, ar);
    double sum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(al.at(i, 0) >= 0.0);
      sum += al.at(i, 0);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }

  CHECK_THROWS_AS(attention_coeffs(h_v, Tensor(), w, a), UsageError);
}

TEST_CASE("one-layer single-head attention reduces to tanh(W h_u)") {
  // Two nodes, 0 and 1, adjacent; batch {0} so 1 is the only neighbor.
  flowgraph::LineGraph g;
  g.feature_dim = 2;
  g.offsets = {0, 1, 2};
  g.neighbors = {1, 0};
  g.features = {0.3, -0.6, 1.2, 0.8};
  g.labels = {0, 1};
  g.binary_labels = {0, 1};
  g.timestamps = {1.0, 2.0};
  g.flow_index = {0, 1};
  g.src_endpoint = {0, 0};
  g.dst_endpoint = {1, 1};
  SampleGraph sg = SampleGraph::from_line_graph(g);

  Hyper h;
  h.feature_dim = 2;
  h.num_classes = 2;
  h.hidden = 2;
  h.layers = 1;
  h.heads = 1;
  h.head_dim = 2;
  h.dropout = 0.0;
  ModelState state = init_model(Arch::kGat, h, 9);
  // Identity classifier head exposes the attention output directly.
  state.param("cls.W").mutable_data() = {1, 0, 0, 1};
  state.param("cls.b").mutable_data() = {0, 0};

  NodeBlock block = take_all_node_block(sg, {0}, 1);
  Tensor feats = Tensor::from_data({2, 2}, g.features);
  Tensor logits = gat_forward(block, {0}, feats, state, false, 0);

  const auto& wd = state.param("gat.l1.h1.W").data();
  for (std::size_t c = 0; c < 2; ++c) {
    double wh = g.features[2] * wd[c] + g.features[3] * wd[2 + c];
    CHECK(logits.at(0, c) == doctest::Approx(std::tanh(wh)).epsilon(1e-12));
  }
}

TEST_CASE("isolated nodes attend to themselves") {
  flowgraph::LineGraph g;
  g.feature_dim = 2;
  g.offsets = {0, 0};
  g.neighbors = {};
  g.features = {0.4, -0.9};
  g.labels = {0};
  g.binary_labels = {0};
  g.timestamps = {1.0};
  g.flow_index = {0};
  g.src_endpoint = {0};
  g.dst_endpoint = {0};
  SampleGraph sg = SampleGraph::from_line_graph(g);

  Hyper h;
  h.feature_dim = 2;
  h.num_classes = 2;
  h.hidden = 2;
  h.layers = 1;
  h.heads = 1;
  h.head_dim = 2;
  h.dropout = 0.0;
  ModelState state = init_model(Arch::kGat, h, 10);
  state.param("cls.W").mutable_data() = {1, 0, 0, 1};
  state.param("cls.b").mutable_data() = {0, 0};

  NodeBlock block = take_all_node_block(sg, {0}, 1);
  Tensor feats = Tensor::from_data({1, 2}, g.features);
  Tensor logits = gat_forward(block, {0}, feats, state, false, 0);
  const auto& wd = state.param("gat.l1.h1.W").data();
  for (std::size_t c = 0; c < 2; ++c) {
    double wh = g.features[0] * wd[c] + g.features[1] * wd[2 + c];
    CHECK(logits.at(0, c) == doctest::Approx(std::tanh(wh)).epsilon(1e-12));
  }
}

// ----------------------------------------------------------- gated TCN

TEST_CASE("gated temporal convolution follows the gating identities") {
  rng::Pcg gen(404);
  Tensor x = Tensor::uniform({2, 3, 2}, -1, 1, gen);

  // Zero kernels: output is tanh(b) * sigmoid(c) at every position.
  Tensor fb = Tensor::from_data({4}, {0.1, -0.2, 0.3, 1.5});
  Tensor gb = Tensor::from_data({4}, {-1.0, 0.0, 2.0, 0.4});
  Tensor y = gated_tcn(x, Tensor::zeros({2, 2, 4}), fb, Tensor::zeros({2, 2, 4}),
                       gb, 1);
  REQUIRE(y.shape() == diffcore::Shape{2, 3, 4});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t o = 0; o < 4; ++o) {
      double want = std::tanh(fb.at(o)) * sigmoid_ref(gb.at(o));
      CHECK(y.data()[r * 4 + o] == doctest::Approx(want).epsilon(1e-12));
    }
  }

  // Saturated gate (c = 30): matches the tanh branch alone within 1e-9.
  Tensor filt = Tensor::uniform({2, 2, 4}, -1, 1, gen);
  Tensor ysat = gated_tcn(x, filt, fb, Tensor::zeros({2, 2, 4}),
                          Tensor::full({4}, 30.0), 1);
  Tensor branch =
      diffcore::tanh(diffcore::conv1d_causal(x, filt, fb, 1));
  for (std::size_t i = 0; i < ysat.size(); ++i) {
    CHECK(ysat.data()[i] == doctest::Approx(branch.data()[i]).epsilon(1e-9));
  }
}

TEST_CASE("single-channel window-2 gated convolution matches hand arithmetic") {
  Tensor x = Tensor::from_data({1, 3, 1}, {1, 2, 3});
  Tensor filt = Tensor::from_data({2, 1, 1}, {1, 2});
  Tensor fb = Tensor::from_data({1}, {0.5});
  Tensor gate = Tensor::from_data({2, 1, 1}, {-1, 1});
  Tensor gb = Tensor::zeros({1});
  Tensor y = gated_tcn(x, filt, fb, gate, gb, 1);
  // Filter pre-activations [2.5, 5.5, 8.5]; gate pre-activations [1,1,1].
  double g1 = sigmoid_ref(1.0);
  CHECK(y.data()[0] == doctest::Approx(std::tanh(2.5) * g1).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(std::tanh(5.5) * g1).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(std::tanh(8.5) * g1).epsilon(1e-12));
}

TEST_CASE("causal convolutions never read the future") {
  rng::Pcg gen(505);
  Tensor x = Tensor::uniform({1, 5, 2}, -1, 1, gen);
  Tensor filt = Tensor::uniform({2, 2, 3}, -1, 1, gen);
  Tensor fb = Tensor::uniform({3}, -1, 1, gen);
  Tensor gate = Tensor::uniform({2, 2, 3}, -1, 1, gen);
  Tensor gb = Tensor::uniform({3}, -1, 1, gen);

  for (std::size_t dilation : {std::size_t{1}, std::size_t{2}}) {
    Tensor y = gated_tcn(x, filt, fb, gate, gb, dilation);
    std::vector<double> bumped = x.data();
    bumped[3 * 2] += 5.0;  // position t=3, channel 0
    bumped[4 * 2 + 1] -= 2.0;
    Tensor y2 = gated_tcn(Tensor::from_data({1, 5, 2}, bumped), filt, fb, gate,
                          gb, dilation);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t o = 0; o < 3; ++o) {
        CHECK(y2.data()[t * 3 + o] == y.data()[t * 3 + o]);
      }
    }
    bool later_changed = false;
    for (std::size_t i = 3 * 3; i < y.size(); ++i) {
      later_changed = later_changed || y2.data()[i] != y.data()[i];
    }
    CHECK(later_changed);
  }
}

TEST_CASE("length-one sequences run through a width-two kernel via the pad") {
  Tensor x = Tensor::from_data({2, 1, 3}, {1, 2, 3, -1, 0, 2});
  rng::Pcg gen(77);
  Tensor filt = Tensor::uniform({2, 3, 2}, -1, 1, gen);
  Tensor fb = Tensor::uniform({2}, -1, 1, gen);
  Tensor gate = Tensor::uniform({2, 3, 2}, -1, 1, gen);
  Tensor gb = Tensor::uniform({2}, -1, 1, gen);
  Tensor y = gated_tcn(x, filt, fb, gate, gb, 1);
  REQUIRE(y.shape() == diffcore::Shape{2, 1, 2});
  // Only the kernel's last tap (j=1) sees data; tap j=0 reads the pad.
  const auto& kf = filt.data();
  const auto& kg = gate.data();
  for (std::size_t q = 0; q < 2; ++q) {
    for (std::size_t o = 0; o < 2; ++o) {
      double pf = fb.at(o), pg = gb.at(o);
      for (std::size_t i = 0; i < 3; ++i) {
        pf += x.data()[q * 3 + i] * kf[(1 * 3 + i) * 2 + o];
        pg += x.data()[q * 3 + i] * kg[(1 * 3 + i) * 2 + o];
      }
      CHECK(y.at(q * 2 + o) ==
            doctest::Approx(std::tanh(pf) * sigmoid_ref(pg)).epsilon(1e-12));
    }
  }
}

// ------------------------------------------------------------ adjacency

TEST_CASE("adaptive adjacency is row-stochastic") {
  Tensor zero = adaptive_adjacency(Tensor::zeros({4, 2}), Tensor::zeros({4, 2}));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(zero.at(i, j) == doctest::Approx(0.25).epsilon(1e-15));
    }
  }

  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    rng::Pcg gen(1300 + trial);
    Tensor e1 = Tensor::uniform({6, 3}, -2, 2, gen);
    Tensor e2 = Tensor::uniform({6, 3}, -2, 2, gen);
    Tensor a = adaptive_adjacency(e1, e2);
    for (std::size_t i = 0; i < 6; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(a.at(i, j) >= 0.0);
        sum += a.at(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  // Rank-1 embeddings with one dominant node: its column wins every row.
  Tensor ones = Tensor::ones({4, 1});
  Tensor e2 = Tensor::from_data({4, 1}, {0.1, 0.2, 3.0, 0.3});
  Tensor dom = adaptive_adjacency(ones, e2);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (j != 2) CHECK(dom.at(i, 2) > dom.at(i, j));
    }
  }

  CHECK_THROWS_AS(adaptive_adjacency(Tensor::zeros({3, 2}),
                                     Tensor::zeros({4, 2})),
                  DimensionError);
  CHECK_THROWS_AS(adaptive_adjacency(Tensor::zeros({16385, 1}),
                                     Tensor::zeros({16385, 1})),
                  ResourceError);
}

TEST_CASE("diffusion convolution matches the dense-power oracle") {
  // 4-node path line graph 0-1-2-3.
  flowgraph::LineGraph g;
  g.feature_dim = 2;
  g.offsets = {0, 1, 3, 5, 6};
  g.neighbors = {1, 0, 2, 1, 3, 2};
  g.features = {1.0, -0.5, 0.25, 2.0, -1.0, 0.5, 0.75, -0.25};
  g.labels = {0, 1, 0, 1};
  g.binary_labels = {0, 1, 0, 1};
  g.timestamps = {1, 2, 3, 4};
  g.flow_index = {0, 1, 2, 3};
  g.src_endpoint = {0, 0, 1, 1};
  g.dst_endpoint = {1, 1, 0, 0};
  LineGraphContext ctx = make_line_context(g);

  // Symmetric adjacency makes the two transition matrices identical.
  std::vector<double> pf = ctx.forward_p.forward->to_dense();
  std::vector<double> pb = ctx.backward_p.forward->to_dense();
  REQUIRE(pf.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(pf[i] == doctest::Approx(pb[i]).epsilon(1e-15));
  }

  Hyper h = small_gtcn_hyper();
  h.feature_dim = 2;
  h.num_nodes = 4;
  ModelState state = init_model(Arch::kGtcnG, h, 41);
  Tensor a_adp =
      adaptive_adjacency(state.param("adp.E1"), state.param("adp.E2"));
  Tensor z = diffusion_gconv(ctx.node_features, ctx.forward_p, ctx.backward_p,
                             a_adp, state);
  REQUIRE(z.shape() == diffcore::Shape{4, 4});

  // Dense oracle with explicit matrix powers.
  auto matmul4 = [](const std::vector<double>& a, const std::vector<double>& b,
                    std::size_t n, std::size_t k, std::size_t m) {
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t c = 0; c < m; ++c) {
          out[i * m + c] += a[i * k + j] * b[j * m + c];
        }
      }
    }
    return out;
  };
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  std::vector<double> ad = a_adp.data();
  std::vector<double> want(4 * 4, 0.0);
  std::vector<double> pf_k = eye, ad_k = eye;
  for (std::size_t k = 0; k <= h.diffusion_order; ++k) {
    if (k > 0) {
      pf_k = matmul4(pf, pf_k, 4, 4, 4);
      ad_k = matmul4(ad, ad_k, 4, 4, 4);
    }
    std::string base = "diff.k" + std::to_string(k);
    std::vector<double> xf = matmul4(pf_k, g.features, 4, 4, 2);
    std::vector<double> xa = matmul4(ad_k, g.features, 4, 4, 2);
    std::vector<double> t1 =
        matmul4(xf, state.param(base + ".W1").data(), 4, 2, 4);
    std::vector<double> t2 =
        matmul4(xf, state.param(base + ".W2").data(), 4, 2, 4);
    std::vector<double> t3 =
        matmul4(xa, state.param(base + ".W3").data(), 4, 2, 4);
    for (std::size_t i = 0; i < 16; ++i) want[i] += t1[i] + t2[i] + t3[i];
  }
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(z.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("zeroth-order diffusion is a plain linear map") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  Hyper h = small_gtcn_hyper();
  h.diffusion_order = 0;
  ModelState state = init_model(Arch::kGtcnG, h, 42);
  Tensor a_adp =
      adaptive_adjacency(state.param("adp.E1"), state.param("adp.E2"));
  Tensor z = diffusion_gconv(ctx.node_features, ctx.forward_p, ctx.backward_p,
                             a_adp, state);
  const auto& w1 = state.param("diff.k0.W1").data();
  const auto& w2 = state.param("diff.k0.W2").data();
  const auto& w3 = state.param("diff.k0.W3").data();
  for (std::size_t v = 0; v < 6; ++v) {
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        acc += g.features[v * 3 + i] *
               (w1[i * 4 + o] + w2[i * 4 + o] + w3[i * 4 + o]);
      }
      CHECK(z.at(v, o) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

// ----------------------------------------------------------- sequences

TEST_CASE("temporal sequences window same-source flows by timestamp") {
  flowgraph::LineGraph g;
  g.feature_dim = 2;
  g.offsets = {0, 0, 0, 0, 0, 0};
  g.neighbors = {};
  g.features = {10, 11, 20, 21, 30, 31, 40, 41, 50, 51};
  g.labels = {0, 0, 0, 0, 0};
  g.binary_labels = {0, 0, 0, 0, 0};
  g.timestamps = {10.0, 5.0, 7.0, 3.0, 9.0};
  g.flow_index = {0, 1, 2, 3, 4};
  g.src_endpoint = {0, 0, 0, 1, 1};
  g.dst_endpoint = {9, 9, 9, 9, 9};
  LineGraphContext ctx = make_line_context(g);

  // Group 0 ordered by time: 1 (5), 2 (7), 0 (10); group 1: 3 (3), 4 (9).
  Tensor seq = build_sequences(ctx, {0, 1, 4}, 3);
  REQUIRE(seq.shape() == diffcore::Shape{3, 3, 2});
  auto at = [&](std::size_t node, std::size_t slot, std::size_t c) {
    return seq.data()[(node * 3 + slot) * 2 + c];
  };
  // Node 0: predecessors 1 then 2, self last.
  CHECK(at(0, 0, 0) == 20);
  CHECK(at(0, 1, 0) == 30);
  CHECK(at(0, 2, 0) == 10);
  CHECK(at(0, 2, 1) == 11);
  // Node 1 is the oldest of its source: two pad slots then itself.
  CHECK(at(1, 0, 0) == 0);
  CHECK(at(1, 0, 1) == 0);
  CHECK(at(1, 1, 0) == 0);
  CHECK(at(1, 2, 0) == 20);
  // Node 4 follows node 3 in the other group.
  CHECK(at(2, 0, 0) == 0);
  CHECK(at(2, 1, 0) == 40);
  CHECK(at(2, 2, 0) == 50);

  CHECK_THROWS_AS(build_sequences(ctx, {7}, 3), UsageError);
  CHECK_THROWS_AS(build_sequences(ctx, {0}, 0), ConfigError);
}

// ------------------------------------------------------------ branches

TEST_CASE("branch outputs carry their declared widths") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  Hyper h = small_gtcn_hyper();
  ModelState state = init_model(Arch::kGtcnG, h, 17);

  std::vector<std::uint32_t> batch = {1, 3, 5};
  NodeBlock block = take_all_node_block(sg, batch, h.layers);
  BranchOutputs b = gtcn_branches(ctx, batch, block, state, false, 0);
  CHECK(b.temporal.shape() == diffcore::Shape{3, 4});
  CHECK(b.spatial.shape() == diffcore::Shape{3, 4});
  CHECK(b.attention.shape() == diffcore::Shape{3, 8});  // heads*dim + hidden
  CHECK(b.residual.shape() == diffcore::Shape{3, 4});

  Tensor logits = fuse_branches(b, state);
  CHECK(logits.shape() == diffcore::Shape{3, 3});

  // Row permutation of every branch permutes the fused rows.
  std::vector<std::int64_t> perm = {2, 0, 1};
  BranchOutputs pb;
  pb.temporal = diffcore::gather_rows(b.temporal, perm);
  pb.spatial = diffcore::gather_rows(b.spatial, perm);
  pb.attention = diffcore::gather_rows(b.attention, perm);
  pb.residual = diffcore::gather_rows(b.residual, perm);
  Tensor plogits = fuse_branches(pb, state);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(plogits.at(i, c) == logits.at(static_cast<std::size_t>(perm[i]), c));
    }
  }

  BranchOutputs broken = b;
  broken.spatial = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(fuse_branches(broken, state), DimensionError);
  broken.spatial = Tensor();
  CHECK_THROWS_AS(fuse_branches(broken, state), UsageError);
}

TEST_CASE("fused forward equals the composition of the branch ops") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  Hyper h = small_gtcn_hyper();
  ModelState state = init_model(Arch::kGtcnG, h, 18);

  std::vector<std::uint32_t> batch = {0, 2, 4};
  NodeBlock block = take_all_node_block(sg, batch, h.layers);
  Tensor whole = gtcn_forward(ctx, batch, block, state, false, 0);

  diffcore::NoGradGuard guard;
  Tensor seq = build_sequences(ctx, batch, h.window);
  Tensor t1 = gated_tcn(seq, state.param("tcn.l1.filter"),
                        state.param("tcn.l1.fbias"), state.param("tcn.l1.gate"),
                        state.param("tcn.l1.gbias"), 1);
  Tensor temporal = diffcore::last_timestep(
      gated_tcn(t1, state.param("tcn.l2.filter"), state.param("tcn.l2.fbias"),
                state.param("tcn.l2.gate"), state.param("tcn.l2.gbias"), 2));
  Tensor a_adp =
      adaptive_adjacency(state.param("adp.E1"), state.param("adp.E2"));
  Tensor zfull = diffusion_gconv(ctx.node_features, ctx.forward_p,
                                 ctx.backward_p, a_adp, state);
  Tensor spatial = diffcore::gather_rows(zfull, {0, 2, 4});
  Tensor att_all = attention_stack(block, ctx.node_features, state, "att",
                                   true, false, 0);
  // Final layer nodes are exactly the batch here (sorted), so rows align.
  Tensor attention = diffcore::gather_rows(att_all, {0, 1, 2});
  Tensor e_b = diffcore::gather_rows(ctx.node_features, {0, 2, 4});
  Tensor residual = diffcore::matmul(e_b, state.param("res.W"));
  Tensor cat = diffcore::concat_cols({temporal, spatial, attention, residual});
  Tensor fused = diffcore::relu(diffcore::add_row_bias(
      diffcore::matmul(cat, state.param("fuse.W1")), state.param("fuse.b1")));
  Tensor logits = diffcore::add_row_bias(
      diffcore::matmul(fused, state.param("cls.W")), state.param("cls.b"));

  REQUIRE(whole.shape() == logits.shape());
  for (std::size_t i = 0; i < whole.size(); ++i) {
    CHECK(whole.data()[i] == doctest::Approx(logits.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("masking neighbor aggregation keeps only the residual path live") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  Hyper h = small_gtcn_hyper();
  std::vector<std::uint32_t> batch = {0, 2, 4};
  NodeBlock block = take_all_node_block(sg, batch, h.layers);

  // GTCN-G: zero every neighbor-aggregation parameter; the residual
  // projection keeps the logits sensitive to the node's own features.
  ModelState state = init_model(Arch::kGtcnG, h, 23);
  for (std::size_t k = 1; k <= h.layers; ++k) {
    for (std::size_t m = 1; m <= h.heads; ++m) {
      std::string base = "att.l" + std::to_string(k) + ".h" + std::to_string(m);
      zero_param(state, base + ".W");
      zero_param(state, base + ".a");
    }
  }
  for (const char* name :
       {"tcn.l1.filter", "tcn.l1.fbias", "tcn.l1.gate", "tcn.l1.gbias",
        "tcn.l2.filter", "tcn.l2.fbias", "tcn.l2.gate", "tcn.l2.gbias"}) {
    zero_param(state, name);
  }
  for (std::size_t k = 0; k <= h.diffusion_order; ++k) {
    std::string base = "diff.k" + std::to_string(k);
    zero_param(state, base + ".W1");
    zero_param(state, base + ".W2");
    zero_param(state, base + ".W3");
  }

  Tensor base_logits = gtcn_forward(ctx, batch, block, state, false, 0);
  flowgraph::LineGraph g2 = six_node_line_graph();
  g2.features[0] += 1.0;  // perturb batch node 0's own feature
  g2.features[2] -= 0.5;
  LineGraphContext ctx2 = make_line_context(g2);
  Tensor moved = gtcn_forward(ctx2, batch, block, state, false, 0);
  bool row0_changed = false;
  for (std::size_t c = 0; c < 3; ++c) {
    row0_changed = row0_changed || moved.at(0, c) != base_logits.at(0, c);
  }
  CHECK(row0_changed);

  // And the gradient through the residual projection is live.
  rng::Pcg gen(31);
  Tensor direction = Tensor::uniform({3, 3}, -1, 1, gen);
  Tensor loss = diffcore::sum_all(
      diffcore::hadamard(gtcn_forward(ctx, batch, block, state, false, 0),
                         direction));
  state.param("res.W").zero_grad();
  loss.backward();
  double res_norm = 0.0;
  for (double gv : state.param("res.W").grad()) res_norm += gv * gv;
  CHECK(res_norm > 1e-12);

  // The attention-only baseline under the same mask is feature-blind:
  // every output row collapses to the classifier bias.
  Hyper hg = h;
  ModelState gat_state = init_model(Arch::kGat, hg, 23);
  for (std::size_t k = 1; k <= hg.layers; ++k) {
    for (std::size_t m = 1; m <= hg.heads; ++m) {
      std::string base = "gat.l" + std::to_string(k) + ".h" + std::to_string(m);
      zero_param(gat_state, base + ".W");
      zero_param(gat_state, base + ".a");
    }
  }
  Tensor feats1 = Tensor::from_data({6, 3}, g.features);
  Tensor feats2 = Tensor::from_data({6, 3}, g2.features);
  Tensor gat1 = gat_forward(block, batch, feats1, gat_state, false, 0);
  Tensor gat2 = gat_forward(block, batch, feats2, gat_state, false, 0);
  const auto& cb = gat_state.param("cls.b").data();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(gat1.at(i, c) == gat2.at(i, c));
      CHECK(gat1.at(i, c) == doctest::Approx(cb[c]).epsilon(1e-15));
    }
  }
}

TEST_CASE("fused model is deterministic in eval and keyed under dropout") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  Hyper h = small_gtcn_hyper();
  ModelState state = init_model(Arch::kGtcnG, h, 77);
  std::vector<std::uint32_t> batch = {0, 1, 2, 3, 4, 5};
  NodeBlock block = take_all_node_block(sg, batch, h.layers);

  Tensor a = gtcn_forward(ctx, batch, block, state, false, 1);
  Tensor b = gtcn_forward(ctx, batch, block, state, false, 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);  // eval ignores the key, bitwise
  }

  Tensor t1 = gtcn_forward(ctx, batch, block, state, true, 9);
  Tensor t2 = gtcn_forward(ctx, batch, block, state, true, 9);
  bool same_key_equal = true;
  bool train_differs_from_eval = false;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    same_key_equal = same_key_equal && t1.data()[i] == t2.data()[i];
    train_differs_from_eval =
        train_differs_from_eval || t1.data()[i] != a.data()[i];
  }
  CHECK(same_key_equal);
  CHECK(train_differs_from_eval);

  Tensor t3 = gtcn_forward(ctx, batch, block, state, true, 10);
  bool keys_differ = false;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    keys_differ = keys_differ || t1.data()[i] != t3.data()[i];
  }
  CHECK(keys_differ);
}

TEST_CASE("a single flow with a window of one still classifies") {
  flowgraph::LineGraph g;
  g.feature_dim = 2;
  g.offsets = {0, 0};
  g.neighbors = {};
  g.features = {0.5, -1.5};
  g.labels = {1};
  g.binary_labels = {1};
  g.timestamps = {4.0};
  g.flow_index = {0};
  g.src_endpoint = {0};
  g.dst_endpoint = {1};
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);

  Hyper h = small_gtcn_hyper();
  h.feature_dim = 2;
  h.num_nodes = 1;
  h.window = 1;
  ModelState state = init_model(Arch::kGtcnG, h, 3);
  NodeBlock block = take_all_node_block(sg, {0}, h.layers);
  Tensor logits = gtcn_forward(ctx, {0}, block, state, false, 0);
  REQUIRE(logits.shape() == diffcore::Shape{1, 3});
  for (double v : logits.data()) CHECK(std::isfinite(v));

  flowgraph::LineGraph g2 = g;
  g2.features = {1.5, -1.5};
  Tensor logits2 =
      gtcn_forward(make_line_context(g2), {0}, block, state, false, 0);
  bool changed = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    changed = changed || logits.data()[i] != logits2.data()[i];
  }
  CHECK(changed);
}

TEST_CASE("relabeling line-graph nodes permutes fused logits") {
  flowgraph::LineGraph g = six_node_line_graph();
  // perm[old] = new id.
  std::vector<std::uint32_t> perm = {2, 0, 5, 1, 4, 3};
  flowgraph::LineGraph g2;
  g2.feature_dim = g.feature_dim;
  std::vector<std::uint32_t> inv(6);
  for (std::uint32_t o = 0; o < 6; ++o) inv[perm[o]] = o;
  g2.offsets.assign(1, 0);
  for (std::uint32_t v = 0; v < 6; ++v) {
    std::uint32_t o = inv[v];
    std::vector<std::uint32_t> row;
    for (std::size_t e = g.offsets[o]; e < g.offsets[o + 1]; ++e) {
      row.push_back(perm[g.neighbors[e]]);
    }
    std::sort(row.begin(), row.end());
    for (std::uint32_t w : row) g2.neighbors.push_back(w);
    g2.offsets.push_back(g2.neighbors.size());
    for (std::size_t c = 0; c < 3; ++c) {
      g2.features.push_back(g.features[o * 3 + c]);
    }
    g2.labels.push_back(g.labels[o]);
    g2.binary_labels.push_back(g.binary_labels[o]);
    g2.timestamps.push_back(g.timestamps[o]);
    g2.flow_index.push_back(g.flow_index[o]);
    g2.src_endpoint.push_back(g.src_endpoint[o]);
    g2.dst_endpoint.push_back(g.dst_endpoint[o]);
  }

  Hyper h = small_gtcn_hyper();
  ModelState state = init_model(Arch::kGtcnG, h, 29);
  ModelState state2 = init_model(Arch::kGtcnG, h, 29);
  // Node embeddings are positional: permute their rows alongside.
  for (const char* name : {"adp.E1", "adp.E2"}) {
    const auto& src = state.param(name).data();
    auto& dst = state2.param(name).mutable_data();
    for (std::uint32_t o = 0; o < 6; ++o) {
      for (std::size_t c = 0; c < 2; ++c) {
        dst[perm[o] * 2 + c] = src[o * 2 + c];
      }
    }
  }

  LineGraphContext ctx = make_line_context(g);
  LineGraphContext ctx2 = make_line_context(g2);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  SampleGraph sg2 = SampleGraph::from_line_graph(g2);
  std::vector<std::uint32_t> batch = {0, 3, 5};
  std::vector<std::uint32_t> batch2;
  for (std::uint32_t v : batch) batch2.push_back(perm[v]);

  Tensor l1 = gtcn_forward(ctx, batch, take_all_node_block(sg, batch, h.layers),
                           state, false, 0);
  Tensor l2 = gtcn_forward(ctx2, batch2,
                           take_all_node_block(sg2, batch2, h.layers), state2,
                           false, 0);
  REQUIRE(l1.shape() == l2.shape());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(l2.at(i, c) == doctest::Approx(l1.at(i, c)).epsilon(1e-9));
    }
  }
}

// ---------------------------------------------------------- grad checks

TEST_CASE("gradients check out against finite differences for all models") {
  flowgraph::LineGraph g = six_node_line_graph();
  LineGraphContext ctx = make_line_context(g);
  SampleGraph sg = SampleGraph::from_line_graph(g);
  Hyper h = small_gtcn_hyper();
  std::vector<std::uint32_t> batch = {0, 2, 4};
  NodeBlock nblock = take_all_node_block(sg, batch, h.layers);
  rng::Pcg gen(555);
  Tensor direction = Tensor::uniform({3, 3}, -1, 1, gen);

  SUBCASE("gtcn") {
    ModelState state = init_model(Arch::kGtcnG, h, 101);
    auto f = [&](const std::vector<Tensor>&) {
      return diffcore::sum_all(diffcore::hadamard(
          gtcn_forward(ctx, batch, nblock, state, false, 0), direction));
    };
    double err = diffcore::grad_check(f, all_params(state), 1e-5);
    CHECK(err < 1e-4);
  }

  SUBCASE("gat") {
    ModelState state = init_model(Arch::kGat, h, 102);
    Tensor feats = Tensor::from_data({6, 3}, g.features);
    auto f = [&](const std::vector<Tensor>&) {
      return diffcore::sum_all(diffcore::hadamard(
          gat_forward(nblock, batch, feats, state, false, 0), direction));
    };
    double err = diffcore::grad_check(f, all_params(state), 1e-5);
    CHECK(err < 1e-4);
  }

  SUBCASE("egraphsage") {
    SampleGraph fg = small_flow_graph();
    Hyper he;
    he.feature_dim = 3;
    he.num_classes = 3;
    he.hidden = 4;
    he.sage_layers = 2;
    ModelState state = init_model(Arch::kEGraphSageM, he, 103);
    Tensor feats = random_features(fg.edge_endpoints.size(), 3, 31);
    std::vector<std::uint32_t> edges = {0, 2, 5};
    SampledBlock block = take_all_edge_block(fg, edges, 2);
    Tensor dir_e = Tensor::uniform({3, 3}, -1, 1, gen);
    auto f = [&](const std::vector<Tensor>&) {
      return diffcore::sum_all(diffcore::hadamard(
          egraphsage_forward(block, edges, fg, feats, state), dir_e));
    };
    double err = diffcore::grad_check(f, all_params(state), 1e-5);
    CHECK(err < 1e-4);
  }
}

// ---------------------------------------------------------- checkpoints

TEST_CASE("model initialization is seeded, bounded, and validated") {
  Hyper h = small_gtcn_hyper();
  ModelState a = init_model(Arch::kGtcnG, h, 7);
  ModelState b = init_model(Arch::kGtcnG, h, 7);
  ModelState c = init_model(Arch::kGtcnG, h, 8);
  REQUIRE(a.params.size() == b.params.size());
  bool any_differs = false;
  for (const auto& [name, t] : a.params) {
    const auto& bd = b.param(name).data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(t.data()[i] == bd[i]);
    }
    const auto& cd = c.param(name).data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      any_differs = any_differs || t.data()[i] != cd[i];
    }
  }
  CHECK(any_differs);

  // Spot checks: inventory, Glorot bound, zero biases.
  for (const char* name : {"tcn.l1.filter", "att.l2.h2.a", "diff.k2.W3",
                           "res.W", "fuse.W1", "adp.E2", "cls.b"}) {
    CHECK(a.params.count(name) == 1);
  }
  CHECK(a.param("adp.E1").shape() == diffcore::Shape{6, 2});
  const Tensor& res = a.param("res.W");
  double limit = std::sqrt(6.0 / (3 + 4));
  for (double v : res.data()) {
    CHECK(std::abs(v) <= limit);
    CHECK(v != 0.0);
  }
  for (double v : a.param("cls.b").data()) CHECK(v == 0.0);
  for (double v : a.param("tcn.l1.gbias").data()) CHECK(v == 0.0);
  CHECK(a.param("res.W").requires_grad());

  CHECK_THROWS_AS(arch_from_name("transformer"), ConfigError);
  CHECK(arch_from_name("gtcn_g") == Arch::kGtcnG);
  CHECK(arch_name(Arch::kEGraphSageM) == "egraphsage_m");

  Hyper bad = h;
  bad.layers = 7;
  CHECK_THROWS_AS(init_model(Arch::kGtcnG, bad, 1), ConfigError);
  bad = h;
  bad.num_nodes = 0;
  CHECK_THROWS_AS(init_model(Arch::kGtcnG, bad, 1), ConfigError);
  bad = h;
  bad.num_nodes = bad.adaptive_budget + 1;
  CHECK_THROWS_AS(init_model(Arch::kGtcnG, bad, 1), ResourceError);
  bad = h;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(init_model(Arch::kGtcnG, bad, 1), ConfigError);
  bad = h;
  bad.feature_dim = 0;
  CHECK_THROWS_AS(init_model(Arch::kGat, bad, 1), ConfigError);
}

TEST_CASE("checkpoints round-trip bitwise and reject damage") {
  TempDir tmp;
  Hyper h = small_gtcn_hyper();
  for (Arch arch : {Arch::kEGraphSageM, Arch::kGat, Arch::kGtcnG}) {
    ModelState state = init_model(arch, h, 99);
    std::string path = tmp.file(arch_name(arch) + ".ckpt");
    save_checkpoint(path, state);
    ModelState back = load_checkpoint(path);
    CHECK(back.arch == arch);
    CHECK(back.hyper.hidden == h.hidden);
    CHECK(back.hyper.window == h.window);
    CHECK(back.hyper.dropout == h.dropout);
    REQUIRE(back.params.size() == state.params.size());
    for (const auto& [name, t] : state.params) {
      const Tensor& bt = back.param(name);
      REQUIRE(bt.shape() == t.shape());
      CHECK(bt.requires_grad());
      for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(bt.data()[i] == t.data()[i]);
      }
    }
  }

  std::string path = tmp.file("gtcn_g.ckpt");
  CHECK_THROWS_AS(load_checkpoint(path, Arch::kGat), UsageError);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("nope.ckpt")), DataError);

  auto slurp_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  auto write_bytes = [](const std::string& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  std::string bytes = slurp_bytes(path);

  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    write_bytes(tmp.file("bad.ckpt"), bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("bad.ckpt")),
                         doctest::Contains("bad magic"), DataError);
  }
  SUBCASE("wrong version") {
    std::string bad = bytes;
    bad[4] = 9;
    write_bytes(tmp.file("bad.ckpt"), bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("bad.ckpt")),
                         doctest::Contains("version"), DataError);
  }
  SUBCASE("truncated") {
    write_bytes(tmp.file("bad.ckpt"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(tmp.file("bad.ckpt")), DataError);
  }
  SUBCASE("trailing bytes") {
    write_bytes(tmp.file("bad.ckpt"), bytes + "zz");
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("bad.ckpt")),
                         doctest::Contains("trailing"), DataError);
  }
}
