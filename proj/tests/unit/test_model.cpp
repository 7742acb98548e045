#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "sketchforge/core/errors.hpp"
#include "sketchforge/model/checkpoint.hpp"
#include "sketchforge/model/discriminator.hpp"
#include "sketchforge/model/feature_extractor.hpp"
#include "sketchforge/model/generator.hpp"

using namespace sf;

namespace {

GeneratorConfig small_config(int in = 3) {
  GeneratorConfig c;
  c.input_channels = in;
  c.base_width = 4;
  c.n_down = 2;
  c.n_up = 2;
  c.n_bottleneck_res = 2;
  return c;
}

} // namespace

TEST(GeneratorConfig, RejectsInvalid) {
  auto c = small_config();
  c.n_up = 3;
  EXPECT_THROW(build_generator(c), ConfigError);
  c = small_config();
  c.base_width = 0;
  EXPECT_THROW(build_generator(c), ConfigError);
  c = small_config();
  c.n_bottleneck_res = 0;
  EXPECT_THROW(build_generator(c), ConfigError);
}

TEST(GeneratorConfig, JsonRoundTrip) {
  auto c = GeneratorConfig::standard(4);
  auto back = GeneratorConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.input_channels, 4);
}

TEST(Generator, StandardParamCountInBand) {
  Generator g = build_generator(GeneratorConfig::standard());
  EXPECT_GE(g.param_count(), 7'000'000u);
  EXPECT_LE(g.param_count(), 8'600'000u);
}

TEST(Generator, FullyConvolutionalSizes) {
  Generator g = build_generator(small_config(), 1);
  for (int s : {8, 12, 20, 32}) {
    Tensor x = test::random_tensor({1, 3, s, s + 4}, s);
    Tensor y = g.forward(x);
    EXPECT_EQ(y.shape(), (Shape{1, 3, s, s + 4}));
  }
}

TEST(Generator, ShapeErrorsNameExpectedAndActual) {
  Generator g = build_generator(small_config(), 1);
  try {
    g.forward(Tensor({1, 4, 8, 8}));
    FAIL();
  } catch (const ShapeError &e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
  EXPECT_THROW(g.forward(Tensor({1, 3, 10, 8})), ShapeError);
}

TEST(Generator, ZeroWeightsGiveTanhOfHeadBias) {
  Generator g = build_generator(small_config(), 3);
  auto params = g.parameters();
  Rng rng(5);
  for (nn::Param *p : params) {
    if (p->name.ends_with(".weight"))
      p->value.fill(0.0);
    else
      for (double &v : p->value.values())
        v = rng.uniform(-1, 1);
  }
  const nn::Param *head_bias = params.back();
  ASSERT_EQ(head_bias->name, "head.bias");
  Tensor y = g.forward(test::random_tensor({2, 3, 16, 16}, 9));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
          ASSERT_EQ(y.at(n, c, i, j), std::tanh(head_bias->value[c]));
}

TEST(Generator, DeterministicAndBatchOrderPreserved) {
  Generator g = build_generator(small_config(), 4);
  Tensor a = test::random_tensor({1, 3, 8, 8}, 1);
  Tensor b = test::random_tensor({1, 3, 8, 8}, 2);
  std::vector<Tensor> parts{a, b, a};
  Tensor y = g.forward(concat_batch(parts));
  Tensor ya = g.forward(a), yb = g.forward(b);
  for (std::size_t i = 0; i < ya.size(); ++i) {
    ASSERT_EQ(y.slice(0, 1)[i], ya[i]);
    ASSERT_EQ(y.slice(2, 1)[i], ya[i]);
    ASSERT_EQ(y.slice(1, 1)[i], yb[i]);
  }
}

TEST(Generator, OutputWithinSignedRange) {
  GeneratorConfig c = small_config();
  Generator g = build_generator(c, 11);
  // scale weights up so the head saturates
  for (nn::Param *p : g.parameters())
    p->value.scale(4.0);
  Tensor y = g.forward(test::random_tensor({2, 3, 16, 16}, 3, -1, 1));
  EXPECT_GE(y.min(), -1.0);
  EXPECT_LE(y.max(), 1.0);
}

TEST(Generator, ImageBatchInterface) {
  Generator g = build_generator(small_config(), 4);
  std::vector<ImageBuffer> batch{test::random_image(8, 8, 3, 1), test::random_image(8, 8, 3, 1)};
  auto out = g.forward(batch);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], out[1]);
  EXPECT_EQ(out[0].range(), ValueRange::signed_);
}

TEST(Discriminator, RejectsTooSmallResolution) {
  DiscriminatorConfig c;
  EXPECT_THROW(build_discriminator(8, c), ConfigError);
  EXPECT_NO_THROW(build_discriminator(c.min_resolution(), c));
}

TEST(Discriminator, ZeroLogitsScoreHalf) {
  Tensor logits({2, 1, 3, 3}, 0.0);
  auto s = Discriminator::aggregate(logits);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 0.5);
}

TEST(Discriminator, ScalarIsMeanOfSquashedMap) {
  DiscriminatorConfig c;
  c.base_width = 4;
  c.n_layers = 3;
  Discriminator d = build_discriminator(32, c, 2);
  ImageBuffer img = test::random_image(32, 32, 3, 7, ValueRange::signed_);
  for (const auto &im : {img, flip_horizontal(img)}) {
    Tensor x = to_tensor(im);
    Tensor logits = d.logits(x);
    double acc = 0.0;
    for (double l : logits.values())
      acc += 1.0 / (1.0 + std::exp(-std::clamp(l, -kLogitClamp, kLogitClamp)));
    acc /= static_cast<double>(logits.size());
    EXPECT_NEAR(d.score(x)[0], acc, 1e-15);
  }
}

TEST(Discriminator, ScoresStrictlyInsideUnitInterval) {
  DiscriminatorConfig c;
  c.base_width = 4;
  c.n_layers = 2;
  Discriminator d = build_discriminator(8, c, 1);
  for (double scale : {1.0, 1e3, 1e8}) {
    Tensor x = test::random_tensor({3, 3, 8, 8}, 2);
    x.scale(scale);
    for (double s : d.score(x)) {
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
  }
}

TEST(Discriminator, IndependentPerImageScores) {
  DiscriminatorConfig c;
  c.base_width = 4;
  c.n_layers = 2;
  Discriminator d = build_discriminator(8, c, 1);
  Tensor a = test::random_tensor({1, 3, 8, 8}, 1), b = test::random_tensor({1, 3, 8, 8}, 2);
  std::vector<Tensor> parts{a, b};
  auto both = d.score(concat_batch(parts));
  EXPECT_EQ(both[0], d.score(a)[0]);
  EXPECT_EQ(both[1], d.score(b)[0]);
  EXPECT_NE(both[0], both[1]);
}

TEST(FeatureExtractor, UnknownTapOrBackbone) {
  FeatureExtractorSpec s;
  s.tap = "relu9_9";
  EXPECT_THROW(FeatureExtractor::create(s), ConfigError);
  s = {};
  s.backbone = "resnet";
  EXPECT_THROW(FeatureExtractor::create(s), ConfigError);
  s = {};
  s.backbone = "vgg19";
  EXPECT_THROW(FeatureExtractor::create(s), ConfigError);
}

TEST(FeatureExtractor, TapDownscaleFollowsVggLayout) {
  struct Case {
    const char *tap;
    int down;
  };
  for (auto [tap, down] : {Case{"relu1_2", 1}, Case{"pool1", 2}, Case{"relu2_2", 2},
                           Case{"relu3_1", 4}, Case{"relu4_4", 8}}) {
    FeatureExtractorSpec s;
    s.tap = tap;
    auto fx = FeatureExtractor::create(s);
    EXPECT_EQ(fx.downscale(), down) << tap;
    Tensor f = fx.extract(test::random_tensor({1, 3, 16, 16}, 1));
    EXPECT_EQ(f.shape().h, 16 / down) << tap;
  }
}

TEST(FeatureExtractor, DeterministicAndContinuous) {
  auto fx = FeatureExtractor::create({});
  Tensor x = test::random_tensor({1, 3, 8, 8}, 4);
  Tensor a = fx.extract(x), b = fx.extract(x);
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_EQ(a[i], b[i]);
  double prev = 1e300;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    Tensor y = x;
    for (double &v : y.values())
      v += eps;
    Tensor fy = fx.extract(y);
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      d += (fy[i] - a[i]) * (fy[i] - a[i]);
    d = std::sqrt(d);
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(FeatureExtractor, SameSeedSameWeights) {
  auto a = FeatureExtractor::create({});
  auto b = FeatureExtractor::create({});
  EXPECT_EQ(a.weights_fingerprint(), b.weights_fingerprint());
  FeatureExtractorSpec s;
  s.seed = 99;
  EXPECT_NE(FeatureExtractor::create(s).weights_fingerprint(), a.weights_fingerprint());
}

TEST(FeatureExtractor, BackwardLeavesWeightsUntouched) {
  auto fx = FeatureExtractor::create({});
  const auto before = fx.weights_fingerprint();
  nn::Cache cache;
  Tensor f = fx.extract(test::random_tensor({2, 3, 8, 8}, 1), cache);
  Tensor g = fx.backward(cache, Tensor(f.shape(), 1.0));
  EXPECT_EQ(g.shape(), (Shape{2, 3, 8, 8}));
  EXPECT_EQ(fx.weights_fingerprint(), before);
  for (const nn::Param *p : fx.parameters())
    for (double v : p->grad.values())
      ASSERT_EQ(v, 0.0);
}

TEST(FeatureExtractor, Vgg19WeightsLoadFromArchive) {
  // a vgg19 archive truncated to the tap is enough
  FeatureExtractorSpec tiny;
  tiny.tiny_width = 64;
  tiny.tap = "relu1_2";
  auto src = FeatureExtractor::create(tiny);
  Archive a;
  for (const nn::Param *p : src.parameters())
    a.tensors[p->name] = p->value;
  auto dir = test::temp_dir("vgg");
  a.save(dir / "vgg.skf");
  FeatureExtractorSpec spec;
  spec.backbone = "vgg19";
  spec.tap = "relu1_2";
  spec.weights = dir / "vgg.skf";
  auto fx = FeatureExtractor::create(spec);
  EXPECT_EQ(fx.weights_fingerprint(), src.weights_fingerprint());
  spec.tap = "relu2_2";
  EXPECT_THROW(FeatureExtractor::create(spec), CheckpointError);
}

TEST(Checkpoint, GeneratorRoundTrip) {
  auto dir = test::temp_dir("ckpt");
  Generator g = build_generator(small_config(4), 8);
  CheckpointInfo info;
  info.stage = "content";
  info.mode = "colorization";
  info.init_seed = 8;
  save_generator(dir / "g.skf", g, info);
  LoadedGenerator l = load_generator(dir / "g.skf");
  EXPECT_EQ(l.info.stage, "content");
  EXPECT_EQ(l.info.mode, "colorization");
  EXPECT_EQ(l.generator.config().to_json(), g.config().to_json());
  Tensor x = test::random_tensor({1, 4, 8, 8}, 1);
  Tensor a = g.forward(x), b = l.generator.forward(x);
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_EQ(a[i], b[i]);
}

TEST(Checkpoint, CorruptFileIsCheckpointError) {
  auto dir = test::temp_dir("ckpt_bad");
  {
    std::ofstream f(dir / "bad.skf", std::ios::binary);
    f << "not a checkpoint";
  }
  EXPECT_THROW(load_generator(dir / "bad.skf"), CheckpointError);
}
