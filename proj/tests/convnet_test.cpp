#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "support.hpp"

using namespace texsyn;
using texsyn::oracle::naive_forward;
using texsyn::oracle::numeric_gradient;
using texsyn::oracle::random_tensor;
using texsyn::oracle::relative_error;

namespace {

Network<double> identity_net() {
  Network<double> net;
  LayerSpec<double> conv;
  conv.name = "conv";
  conv.kind = LayerKind::conv;
  conv.conv = {3, 3, 1, 1, 1, 0};
  conv.weights = Tensor<double>({3, 3, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) conv.weights[i * 3 + i] = 1.0;
  conv.bias = Tensor<double>({3});
  net.layers.push_back(conv);
  LayerSpec<double> relu;
  relu.name = "relu";
  relu.kind = LayerKind::relu;
  net.layers.push_back(relu);
  net.tap_points = {"relu"};
  return net;
}

// A random small chain exercising stride, padding, rectangular kernels and
// both pooling modes.
Network<double> random_net(Rng& rng, PoolMode mode) {
  Network<double> net;
  auto add_conv = [&](std::string name, std::uint32_t in, std::uint32_t out, std::uint32_t kh,
                      std::uint32_t kw, std::uint32_t stride, std::uint32_t pad) {
    LayerSpec<double> l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.conv = {in, out, kh, kw, stride, pad};
    l.weights = random_tensor({out, in, kh, kw}, rng, 0.5);
    l.bias = random_tensor({out}, rng, 0.1);
    net.layers.push_back(std::move(l));
  };
  auto add = [&](std::string name, LayerKind kind) {
    LayerSpec<double> l;
    l.name = std::move(name);
    l.kind = kind;
    l.pool = {2, 2, mode};
    net.layers.push_back(std::move(l));
  };
  add_conv("c1", 3, 4, 3, 3, 1, 1);
  add("r1", LayerKind::relu);
  add("p1", LayerKind::pool);
  add_conv("c2", 4, 5, 3, 2, 1, 1);
  add("r2", LayerKind::relu);
  add_conv("c3", 5, 3, 3, 3, 2, 1);
  add("r3", LayerKind::relu);
  net.tap_points = {"p1", "r2", "r3"};
  return net;
}

}  // namespace

TEST(Forward, IdentityNetworkPassesInputThrough) {
  const auto net = identity_net();
  Tensor<double> img({3, 4, 4}, 5.0);
  EXPECT_EQ(forward(net, img).at("relu"), img);
}

TEST(Forward, AveragePoolOfTwoByTwo) {
  Network<double> net;
  LayerSpec<double> pool;
  pool.name = "pool";
  pool.kind = LayerKind::pool;
  pool.pool = {2, 2, PoolMode::average};
  net.layers.push_back(pool);
  net.tap_points = {"pool"};
  Tensor<double> img({3, 2, 2}, std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4});
  const auto out = forward(net, img).at("pool");
  EXPECT_EQ(out.shape(), (Shape{3, 1, 1}));
  EXPECT_EQ(out[0], 2.5);
}

TEST(Forward, MatchesDirectConvolutionOracle) {
  Rng rng(7);
  for (auto mode : {PoolMode::average, PoolMode::max}) {
    const auto net = random_net(rng, mode);
    const auto img = random_tensor({3, 11, 9}, rng, 3.0);
    const auto features = forward(net, img);
    for (const auto& tap : net.tap_points) {
      const auto expected = naive_forward(net, img, tap);
      const auto& got = features.at(tap);
      ASSERT_EQ(got.shape(), expected.shape()) << tap;
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12) << tap;
    }
  }
}

TEST(Forward, TinyNetMatchesOracle) {
  const auto net = builtin_tiny_net<double>(3);
  Rng rng(1);
  const auto img = random_tensor({3, 24, 24}, rng, 50.0);
  const auto features = forward(net, img);
  for (const auto& tap : net.tap_points) {
    const auto expected = naive_forward(net, img, tap);
    for (std::size_t i = 0; i < expected.size(); ++i)
      EXPECT_NEAR(features.at(tap)[i], expected[i], 1e-12 * std::max(1.0, std::abs(expected[i])));
  }
}

TEST(Forward, UndersizedImageNamesTheLayer) {
  const auto net = builtin_tiny_net<double>(0);
  Tensor<double> img({3, 5, 5});
  try {
    forward(net, img);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("pool3"), std::string::npos) << e.what();
  }
}

TEST(Forward, DeterministicAcrossThreadCounts) {
  const auto net = builtin_tiny_net<float>(5);
  Rng rng(3);
  const auto img = random_tensor({3, 40, 40}, rng, 60.0).cast<float>();
  set_num_threads(1);
  const auto one = forward(net, img);
  set_num_threads(4);
  const auto four = forward(net, img);
  set_num_threads(0);
  for (const auto& tap : net.tap_points) EXPECT_EQ(one.at(tap), four.at(tap));
}

TEST(Backward, IdentityNetworkReturnsTapGradient) {
  const auto net = identity_net();
  Tensor<double> img({3, 3, 3}, 1.0);
  Rng rng(2);
  FeatureStack<double> g;
  g.entries.push_back({"relu", random_tensor({3, 3, 3}, rng)});
  EXPECT_EQ(backward(net, img, g), g.entries[0].features);
}

TEST(Backward, ZeroTapGradientsGiveZeroImageGradient) {
  const auto net = builtin_tiny_net<double>(0);
  Rng rng(4);
  const auto img = random_tensor({3, 16, 16}, rng, 20.0);
  const auto features = forward(net, img);
  const auto grad = backward(net, img, features.zeros_like());
  for (double v : grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ShapeMismatchIsRejected) {
  const auto net = builtin_tiny_net<double>(0);
  Tensor<double> img({3, 16, 16});
  FeatureStack<double> g;
  g.entries.push_back({"pool1", Tensor<double>({8, 7, 7})});
  EXPECT_THROW(backward(net, img, g), ShapeError);
}

// Scalar probe Σ_taps <R_tap, features_tap>; its gradient is backward(R).
TEST(Backward, MatchesFiniteDifferencesOnRandomNets) {
  Rng rng(99);
  int trials = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    const auto mode = t % 2 ? PoolMode::max : PoolMode::average;
    const auto net = random_net(rng, mode);
    const auto img = random_tensor({3, 6 + t % 4, 7 + t % 3}, rng, 1.0);
    const auto features = forward(net, img);
    FeatureStack<double> probe;
    for (const auto& e : features.entries)
      probe.entries.push_back({e.layer, random_tensor(e.features.shape(), rng)});
    auto f = [&](const Tensor<double>& x) {
      const auto fx = forward(net, x);
      double s = 0.0;
      for (const auto& e : probe.entries) s += inner_product(e.features, fx.at(e.layer));
      return s;
    };
    const auto analytic = backward(net, img, probe);
    const auto numeric = numeric_gradient(f, img);
    EXPECT_LE(relative_error(analytic, numeric), 1e-6) << "trial " << t;
    ++trials;
  }
  EXPECT_EQ(trials, 20);
}

TEST(Backward, TinyNetMatchesFiniteDifferences) {
  const auto net = builtin_tiny_net<double>(12);
  Rng rng(8);
  const auto img = random_tensor({3, 16, 16}, rng, 10.0);
  const auto features = forward(net, img);
  FeatureStack<double> probe;
  for (const auto& e : features.entries) probe.entries.push_back({e.layer, random_tensor(e.features.shape(), rng)});
  auto f = [&](const Tensor<double>& x) {
    const auto fx = forward(net, x);
    double s = 0.0;
    for (const auto& e : probe.entries) s += inner_product(e.features, fx.at(e.layer));
    return s;
  };
  EXPECT_LE(relative_error(backward(net, img, probe), numeric_gradient(f, img)), 1e-6);
}

TEST(Pooling, MaxRoutesToFirstArgmaxOnTies) {
  Network<double> net;
  LayerSpec<double> pool;
  pool.name = "pool";
  pool.kind = LayerKind::pool;
  pool.pool = {2, 2, PoolMode::max};
  net.layers.push_back(pool);
  net.tap_points = {"pool"};
  Tensor<double> img({3, 2, 2}, 7.0);
  FeatureStack<double> g;
  g.entries.push_back({"pool", Tensor<double>({3, 1, 1}, 1.0)});
  const auto grad = backward(net, img, g);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(grad(c, 0, 0), 1.0);
    EXPECT_EQ(grad(c, 0, 1) + grad(c, 1, 0) + grad(c, 1, 1), 0.0);
  }
}

TEST(Pooling, AverageBackwardConservesSums) {
  Network<double> net;
  LayerSpec<double> pool;
  pool.name = "pool";
  pool.kind = LayerKind::pool;
  pool.pool = {2, 2, PoolMode::average};
  net.layers.push_back(pool);
  net.tap_points = {"pool"};
  Rng rng(6);
  const auto img = random_tensor({3, 8, 6}, rng);
  FeatureStack<double> g;
  g.entries.push_back({"pool", random_tensor({3, 4, 3}, rng)});
  const auto grad = backward(net, img, g);
  const auto& out_grad = g.entries[0].features;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t oy = 0; oy < 4; ++oy)
      for (std::size_t ox = 0; ox < 3; ++ox) {
        double window = 0.0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) window += grad(c, 2 * oy + dy, 2 * ox + dx);
        EXPECT_NEAR(window, out_grad(c, oy, ox), 1e-15);
      }
}

TEST(TinyNet, SameSeedSameWeights) {
  const auto a = builtin_tiny_net<float>(17), b = builtin_tiny_net<float>(17);
  const auto c = builtin_tiny_net<float>(18);
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    EXPECT_EQ(a.layers[i].weights, b.layers[i].weights);
    EXPECT_EQ(a.layers[i].bias, b.layers[i].bias);
  }
  EXPECT_NE(a.layers[0].weights, c.layers[0].weights);
}

TEST(TinyNet, TapShapesFor96) {
  const auto net = builtin_tiny_net<float>(0);
  const auto features = forward(net, Tensor<float>({3, 96, 96}));
  EXPECT_EQ(features.at("pool1").shape(), (Shape{8, 48, 48}));
  EXPECT_EQ(features.at("pool2").shape(), (Shape{16, 24, 24}));
  EXPECT_EQ(features.at("pool3").shape(), (Shape{16, 12, 12}));
}

TEST(TinyNet, ZeroImagePropagatesBiasPattern) {
  const auto net = builtin_tiny_net<double>(2);
  const auto features = forward(net, Tensor<double>({3, 32, 32}));
  // With a zero input the pool1 maps are relu(bias) away from the padded
  // border; pool1's interior must equal exactly that.
  const auto& p1 = features.at("pool1");
  const auto& bias = net.layers[0].bias;
  for (std::size_t c = 0; c < p1.extent(0); ++c) {
    const double expected = std::max(0.0, bias[c]);
    for (std::size_t y = 0; y < p1.extent(1); ++y)
      for (std::size_t x = 0; x < p1.extent(2); ++x) EXPECT_EQ(p1(c, y, x), expected);
  }
  // Deeper maps are spatially constant away from the zero-padding border.
  const auto& p3 = features.at("pool3");
  for (std::size_t c = 0; c < p3.extent(0); ++c)
    EXPECT_NEAR(p3(c, 1, 1), p3(c, 2, 2), 1e-12);
}

TEST(Network, ValidationCatchesInconsistentChains) {
  auto net = builtin_tiny_net<double>(0);
  net.layers[3].conv.in_maps = 7;
  EXPECT_THROW(validate(net), ValidationError);
  net = builtin_tiny_net<double>(0);
  net.layers[1].name = "conv1_1";
  EXPECT_THROW(validate(net), ValidationError);
  net = builtin_tiny_net<double>(0);
  net.tap_points.push_back("nope");
  EXPECT_THROW(validate(net), ValidationError);
}
