#include <doctest.h>

#include "netadapt/netgraph.hpp"
#include "test_util.hpp"

using namespace netadapt;
using testutil::small_net;

namespace {

NetworkSpec conv_dense_net(int in_ch, int hw, int filters, int classes,
                           int kernel, int stride, Padding padding) {
  return small_net(in_ch, hw, {filters}, {}, classes, 7, kernel, stride,
                   padding);
}

}  // namespace

TEST_CASE("same padding preserves spatial size") {
  const NetworkSpec net = conv_dense_net(3, 8, 8, 10, 3, 1, Padding::Same);
  const auto shapes = infer_shapes(net);
  CHECK(shapes[0].out_h == 8);
  CHECK(shapes[0].out_w == 8);
  CHECK(shapes[0].out_channels == 8);
}

TEST_CASE("valid padding conv arithmetic") {
  const NetworkSpec net = conv_dense_net(3, 9, 8, 10, 3, 2, Padding::Valid);
  const auto shapes = infer_shapes(net);
  CHECK(shapes[0].out_h == 4);  // floor((9-3)/2)+1
  CHECK(shapes[0].out_w == 4);
}

TEST_CASE("flatten feature mismatch is a ChannelMismatch") {
  NetworkSpec net = small_net(4, 5, {}, {}, 10, 1);
  CHECK(net.layers[0].in_channels == 100);  // 4*5*5
  CHECK_NOTHROW(validate_network(net));
  net.layers[0].in_channels = 99;
  net.layers[0].weights.resize(99 * 10);
  CHECK_THROWS_AS(infer_shapes(net), ChannelMismatch);
}

TEST_CASE("empty spatial output") {
  NetworkSpec net = conv_dense_net(3, 2, 4, 10, 3, 1, Padding::Valid);
  CHECK_THROWS_AS(infer_shapes(net), EmptySpatial);
}

TEST_CASE("count_macs single conv layer") {
  const NetworkSpec net = conv_dense_net(3, 8, 8, 10, 3, 1, Padding::Same);
  // conv: 8*8*8*3*3*3 = 13824; dense classifier: 8*8*8 * 10 = 5120
  CHECK(count_macs(net) == 13824 + 8 * 8 * 8 * 10);
}

TEST_CASE("count_macs dense layer") {
  const NetworkSpec net = small_net(4, 5, {}, {}, 10, 1);
  CHECK(count_macs(net) == 1000);  // 100 * 10
}

TEST_CASE("count_macs sums per-layer hand computation") {
  const NetworkSpec net = small_net(3, 8, {6, 12}, {}, 10, 3, 3, 2);
  // layer 0: same padding stride 2 -> 4x4 output: 4*4*6*3*3*3
  const std::uint64_t l0 = 4ull * 4 * 6 * 3 * 3 * 3;
  // layer 1: 4x4 -> 2x2: 2*2*12*6*3*3
  const std::uint64_t l1 = 2ull * 2 * 12 * 6 * 3 * 3;
  // classifier: 12*2*2 -> 10
  const std::uint64_t l2 = 12ull * 2 * 2 * 10;
  CHECK(count_macs(net) == l0 + l1 + l2);
}

TEST_CASE("width multiplier") {
  const NetworkSpec net = small_net(3, 8, {16, 32}, {}, 10, 5);

  SUBCASE("alpha 1.0 keeps the architecture") {
    const NetworkSpec scaled = width_multiplier(net, 1.0, 5);
    REQUIRE(scaled.layers.size() == net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      CHECK(scaled.layers[i].out_filters == net.layers[i].out_filters);
      CHECK(scaled.layers[i].in_channels == net.layers[i].in_channels);
    }
  }

  SUBCASE("alpha 0.5 halves filters, classifier untouched") {
    const NetworkSpec scaled = width_multiplier(net, 0.5, 5);
    CHECK(scaled.layers[0].out_filters == 8);
    CHECK(scaled.layers[1].out_filters == 16);
    CHECK(scaled.layers[2].out_filters == 10);
    CHECK_NOTHROW(validate_network(scaled));
  }

  SUBCASE("tiny alpha floors at one filter") {
    const NetworkSpec scaled = width_multiplier(net, 0.01, 5);
    CHECK(scaled.layers[0].out_filters == 1);
    CHECK(scaled.layers[1].out_filters == 1);
    CHECK(scaled.layers[2].out_filters == 10);
  }

  SUBCASE("alpha outside (0,1] rejected") {
    CHECK_THROWS_AS(width_multiplier(net, 0.0, 5), InvalidAlpha);
    CHECK_THROWS_AS(width_multiplier(net, 1.5, 5), InvalidAlpha);
    CHECK_THROWS_AS(width_multiplier(net, -0.3, 5), InvalidAlpha);
  }

  SUBCASE("macs shrink for alpha < 1") {
    for (double alpha : {0.25, 0.5, 0.75, 0.9}) {
      CHECK(count_macs(width_multiplier(net, alpha, 5)) < count_macs(net));
    }
  }
}

TEST_CASE("serialize round-trips bitwise") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const NetworkSpec net = small_net(3, 6, {5, 7}, {11}, 4, seed);
    const NetworkSpec back = deserialize(serialize(net));
    CHECK(back == net);
  }
}

TEST_CASE("truncated model file is a FormatError") {
  const NetworkSpec net = small_net(2, 4, {3}, {}, 3, 9);
  const std::string bytes = serialize(net);
  CHECK_THROWS_AS(deserialize(bytes.substr(0, bytes.size() / 2)), FormatError);
}

TEST_CASE("unknown model version names the version") {
  const NetworkSpec net = small_net(2, 4, {3}, {}, 3, 9);
  std::string bytes = serialize(net);
  const auto pos = bytes.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 19, "\"format_version\": 7");
  try {
    deserialize(bytes);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
}

TEST_CASE("model save/load through files") {
  const NetworkSpec net = small_net(3, 8, {4}, {6}, 5, 13);
  const auto path = std::filesystem::temp_directory_path() /
                    "netadapt_test_model.netmodel";
  save_model(net, path);
  CHECK(load_model(path) == net);
  std::filesystem::remove(path);
}

TEST_CASE("equal shape keys imply equal layer macs") {
  const NetworkSpec a = conv_dense_net(3, 8, 8, 10, 3, 1, Padding::Same);
  const NetworkSpec b = small_net(3, 8, {8}, {12}, 10, 21);
  const auto sa = infer_shapes(a);
  const auto sb = infer_shapes(b);
  REQUIRE(shape_key(a.layers[0], sa[0]) == shape_key(b.layers[0], sb[0]));
  // strip everything after the shared conv and compare its MAC share
  const std::uint64_t conv_a =
      count_macs(a) - static_cast<std::uint64_t>(sa[1].in_features) * 10;
  const std::uint64_t conv_b =
      count_macs(b) -
      static_cast<std::uint64_t>(sb[1].in_features) * b.layers[1].out_filters -
      12ull * 10;
  CHECK(conv_a == conv_b);
}

TEST_CASE("random valid nets pass validation and shape inference") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 1000);
    std::vector<int> convs;
    const int n_conv = 1 + static_cast<int>(rng.index(3));
    for (int i = 0; i < n_conv; ++i) {
      convs.push_back(1 + static_cast<int>(rng.index(8)));
    }
    std::vector<int> dense;
    if (rng.index(2)) dense.push_back(1 + static_cast<int>(rng.index(10)));
    const NetworkSpec net =
        small_net(1 + static_cast<int>(rng.index(3)), 6 + static_cast<int>(rng.index(4)),
                  convs, dense, 2 + static_cast<int>(rng.index(5)), seed);
    CHECK_NOTHROW(validate_network(net));
    CHECK(infer_shapes(net).size() == net.layers.size());
  }
}
