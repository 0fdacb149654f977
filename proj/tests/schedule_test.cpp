#include <gtest/gtest.h>

#include "support.hpp"

using namespace texsyn;
using Deltas = std::vector<std::size_t>;

TEST(Offsets, PowersOfTwoUpToAThird) {
  EXPECT_EQ(offsets_for_extent(48), (Deltas{2, 4, 8, 16}));
  EXPECT_EQ(offsets_for_extent(47), (Deltas{2, 4, 8}));
  EXPECT_EQ(offsets_for_extent(192), (Deltas{2, 4, 8, 16, 32, 64}));
  EXPECT_EQ(offsets_for_extent(6), (Deltas{2}));
}

TEST(Offsets, SmallExtentsFallBackToTwo) {
  EXPECT_EQ(offsets_for_extent(7), (Deltas{2}));
  EXPECT_EQ(offsets_for_extent(5), (Deltas{2}));
  EXPECT_EQ(offsets_for_extent(3), (Deltas{2}));
  EXPECT_TRUE(offsets_for_extent(2).empty());
  EXPECT_TRUE(offsets_for_extent(1).empty());
}

TEST(Schedule, VggShapedAt384) {
  const auto net = oracle::vgg19_shaped_net<float>(0, 4);
  const auto s = build_delta_schedule(net, 384, 384);
  EXPECT_TRUE(s.at("relu1_1").empty());
  EXPECT_EQ(s.at("pool1"), (Deltas{2, 4, 8, 16, 32, 64}));
  EXPECT_EQ(s.at("pool2"), (Deltas{2, 4, 8, 16, 32}));
  EXPECT_EQ(s.at("pool3"), (Deltas{2, 4, 8, 16}));
  EXPECT_EQ(s.at("pool4"), (Deltas{2, 4, 8}));
}

TEST(Schedule, TinyNetAt96) {
  const auto s = build_delta_schedule(builtin_tiny_net<float>(0), 96, 96);
  EXPECT_EQ(s.at("pool1"), (Deltas{2, 4, 8, 16}));
  EXPECT_EQ(s.at("pool2"), (Deltas{2, 4, 8}));
  EXPECT_EQ(s.at("pool3"), (Deltas{2, 4}));
}

TEST(Schedule, UsesTheShorterSide) {
  const auto s = build_delta_schedule(builtin_tiny_net<float>(0), 48, 200);
  EXPECT_EQ(s.at("pool1"), (Deltas{2, 4, 8}));
}

TEST(Schedule, OffsetsStayBelowTheExtent) {
  const auto net = builtin_tiny_net<float>(0);
  for (std::size_t size = 8; size <= 130; size += 3) {
    const auto shapes = infer_shapes(net, size, size);
    const auto s = build_delta_schedule(net, size, size);
    for (const auto& [layer, deltas] : s.layers) {
      const auto& shape = shapes[net.index_of(layer)];
      for (auto d : deltas) EXPECT_LT(d, std::min(shape[1], shape[2]));
    }
  }
}

TEST(Schedule, FormatsAsBraceList) {
  EXPECT_EQ(format_deltas({2, 4, 8}), "{2,4,8}");
  EXPECT_EQ(format_deltas({}), "{}");
}
