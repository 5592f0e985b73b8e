#include <gtest/gtest.h>

#include <filesystem>
#include <vector>

#include "gdse/config.hpp"
#include "gdse/error.hpp"
#include "gdse/weights_io.hpp"

using namespace gdse;

namespace {

WeightsFile sample_weights() {
  const auto s = DiffusionSchedule::linear(7, 1e-3, 0.05);
  WeightsFile w;
  w.fingerprint = s.fingerprint();
  w.kind = "test";
  w.meta = {{"alpha", 1.5}, {"beta", -2.0}};
  Param a("a", {2, 3});
  for (std::size_t i = 0; i < a.value.size(); ++i) a.value[i] = 0.1 * double(i) - 0.2;
  Param b("b.bias", {4}, 0.25);
  w.blocks.push_back(std::move(a));
  w.blocks.push_back(std::move(b));
  return w;
}

}  // namespace

TEST(Weights, EncodeDecodeEncodeIsByteIdentical) {
  const auto bytes = encode_weights(sample_weights());
  const auto back = decode_weights(bytes);
  EXPECT_EQ(encode_weights(back), bytes);
  EXPECT_EQ(back.kind, "test");
  EXPECT_EQ(back.meta_value("beta"), -2.0);
  EXPECT_THROW(back.meta_value("gamma"), InputError);
  ASSERT_EQ(back.blocks.size(), 2u);
  EXPECT_EQ(back.blocks[0].value, sample_weights().blocks[0].value);
}

TEST(Weights, SaveLoadSaveThroughFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "gdse_weights_tests";
  std::filesystem::create_directories(dir);
  save_weights(sample_weights(), dir / "a.gdse");
  save_weights(load_weights(dir / "a.gdse"), dir / "b.gdse");
  EXPECT_EQ(std::filesystem::file_size(dir / "a.gdse"), std::filesystem::file_size(dir / "b.gdse"));
  EXPECT_EQ(encode_weights(load_weights(dir / "a.gdse")), encode_weights(load_weights(dir / "b.gdse")));
  EXPECT_THROW(load_weights(dir / "missing.gdse"), InputError);
}

TEST(Weights, RejectsEveryTruncation) {
  const auto bytes = encode_weights(sample_weights());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(decode_weights(cut), InputError) << "length " << n;
  }
}

TEST(Weights, RejectsBadMagicVersionAndTrailingBytes) {
  auto bytes = encode_weights(sample_weights());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_weights(bad), InputError);
  bad = bytes;
  bad[4] = 99;
  EXPECT_THROW(decode_weights(bad), InputError);
  bytes.push_back(0);
  EXPECT_THROW(decode_weights(bytes), InputError);
}

TEST(Weights, EpsilonNetRoundTrip) {
  const auto s = DiffusionSchedule::linear(9, 1e-3, 0.05);
  Rng rng(1);
  EpsilonNetConfig cfg;
  cfg.layers = 2;
  cfg.channels = 4;
  EpsilonNet net(cfg, rng);
  for (auto& p : net.params())
    for (auto& v : p.value) v += 0.1 * rng.normal();
  const auto loaded = epsilon_net_from(decode_weights(encode_weights(to_weights(net, s.fingerprint()))));
  ASSERT_TRUE(loaded.fingerprint().has_value());
  EXPECT_EQ(*loaded.fingerprint(), s.fingerprint());
  EXPECT_EQ(loaded.config().layers, 2);
  const auto x = rng.normal_vector(50);
  EXPECT_EQ(loaded.predict_noise(x, 4), net.predict_noise(x, 4));
}

TEST(Weights, NoiseModelRoundTripAndKindCheck) {
  const auto s = DiffusionSchedule::linear(3, 1e-3, 0.05);
  Rng rng(2);
  NoiseModelConfig cfg;
  cfg.dilations = {1, 2};
  NoiseModel model(cfg, s.fingerprint(), rng);
  for (auto& p : model.params())
    for (auto& v : p.value) v += 0.1 * rng.normal();
  const auto file = to_weights(model);
  const auto loaded = noise_model_from(decode_weights(encode_weights(file)));
  const auto v = rng.normal_vector(40);
  EXPECT_EQ(loaded.loss(2, v), model.loss(2, v));
  EXPECT_EQ(loaded.config().dilations, cfg.dilations);
  EXPECT_THROW(epsilon_net_from(file), InputError);
}

TEST(Weights, ScheduleRebuiltFromFingerprint) {
  const auto s = DiffusionSchedule::linear(11, 2e-4, 0.07);
  const auto r = schedule_from_fingerprint(s.fingerprint());
  EXPECT_EQ(r.fingerprint(), s.fingerprint());
  auto fp = s.fingerprint();
  fp.alpha_bar_hash ^= 1;
  EXPECT_THROW(schedule_from_fingerprint(fp), InputError);
}

TEST(Config, DefaultsAndOverrides) {
  Config c;
  EXPECT_EQ(c.get_int("schedule.T"), 200);
  EXPECT_DOUBLE_EQ(c.get_double("guidance.lambda_max"), 0.72);
  EXPECT_DOUBLE_EQ(c.get_double("guidance.gamma"), 0.7);
  EXPECT_FALSE(c.get_bool("guidance.ratio_inverted"));
  c.set("schedule.T", "25");
  EXPECT_EQ(schedule_from(c).steps(), 25);
  EXPECT_THROW(c.set("schedule.bogus", "1"), InputError);
}

TEST(Config, ParsesSectionsCommentsAndLists) {
  const auto c = Config::parse(
      "# comment\n"
      "[schedule]\n"
      "T = 30   # trailing\n"
      "\n"
      "[noise_model]\n"
      "dilations = 1, 2, 4\n"
      "[guidance]\n"
      "ratio_inverted = yes\n"
      "[run]\n"
      "seed = 17\n");
  EXPECT_EQ(c.get_int("schedule.T"), 30);
  EXPECT_EQ(c.get_int_list("noise_model.dilations"), (std::vector<int>{1, 2, 4}));
  EXPECT_TRUE(c.get_bool("guidance.ratio_inverted"));
  EXPECT_EQ(c.get_u64("run.seed"), 17u);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    Config::parse("[schedule]\nT = 5\nnope = 1\n", "my.ini");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("my.ini:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse("[schedule]\nT 5\n"), InputError);
  EXPECT_THROW(Config::parse("T = 5\n"), InputError);
}

TEST(Config, BadValuesRejected) {
  Config c;
  c.set("schedule.T", "abc");
  EXPECT_THROW(c.get_int("schedule.T"), InputError);
  c.set("guidance.gamma", "nan");
  EXPECT_THROW(c.get_double("guidance.gamma"), InputError);
  c.set("guidance.unguided", "maybe");
  EXPECT_THROW(c.get_bool("guidance.unguided"), InputError);
  c.set("guidance.gamma", "0");
  EXPECT_THROW(guidance_from(c, DiffusionSchedule::linear(5, 0.01, 0.02)), InputError);
  c = Config{};
  c.set("guidance.sign", "sideways");
  EXPECT_THROW(enhance_options_from(c), InputError);
}

TEST(Config, SeedIsRequired) {
  Config c;
  EXPECT_FALSE(c.is_set("run.seed"));
  EXPECT_THROW(c.get_u64("run.seed"), InputError);
}

TEST(Config, ResolvedTextRoundTrips) {
  Config c;
  c.set("schedule.T", "25");
  c.set("run.seed", "99");
  c.set("io.snr_list", "3,1");
  const auto back = Config::parse(c.resolved());
  EXPECT_EQ(back.resolved(), c.resolved());
  EXPECT_EQ(back.get_int("schedule.T"), 25);
  EXPECT_EQ(back.get_double_list("io.snr_list"), (std::vector<double>{3.0, 1.0}));
}
