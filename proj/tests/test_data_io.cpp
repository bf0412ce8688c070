#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "rapnet/data_io.hpp"
#include "rapnet/experiment_config.hpp"

namespace rapnet {
namespace {

std::string be32(std::uint32_t v) {
  std::string s;
  detail::write_be32(s, v);
  return s;
}

// One 2x2 image with pixels {0, 255, 128, 64}, label 7; built byte by byte.
std::string tiny_images() {
  return be32(2051) + be32(1) + be32(2) + be32(2) + std::string("\x00\xff\x80\x40", 4);
}
std::string tiny_labels() { return be32(2049) + be32(1) + std::string("\x07", 1); }

TEST(Idx, HandCraftedImage) {
  const Dataset d = dataset_from_idx(tiny_images(), tiny_labels());
  ASSERT_EQ(d.size(), 1u);
  ASSERT_EQ(d.dim(), 4u);
  EXPECT_EQ(d.image_rows, 2u);
  EXPECT_EQ(d.image_cols, 2u);
  EXPECT_EQ(d.inputs(0, 0), 0.0);
  EXPECT_EQ(d.inputs(0, 1), 1.0);
  EXPECT_NEAR(d.inputs(0, 2), 0.50196078431372548, 1e-16);
  EXPECT_NEAR(d.inputs(0, 3), 0.25098039215686274, 1e-16);
  EXPECT_EQ(d.labels[0], 7);
}

ParseError::Kind parse_kind(const std::string& images, const std::string& labels) {
  try {
    dataset_from_idx(images, labels);
  } catch (const ParseError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ParseError";
  return ParseError::Kind::kIo;
}

TEST(Idx, LabelFileWithImageMagicIsBadMagic) {
  const std::string labels = be32(2051) + be32(1) + std::string("\x07", 1);
  EXPECT_EQ(parse_kind(tiny_images(), labels), ParseError::Kind::kBadMagic);
  EXPECT_EQ(parse_kind(tiny_labels(), tiny_labels()), ParseError::Kind::kBadMagic);
}

TEST(Idx, TruncatedPayloads) {
  const std::string img = tiny_images();
  EXPECT_EQ(parse_kind(img.substr(0, img.size() - 1), tiny_labels()), ParseError::Kind::kTruncated);
  EXPECT_EQ(parse_kind(img.substr(0, 10), tiny_labels()), ParseError::Kind::kTruncated);
  EXPECT_EQ(parse_kind(img, be32(2049) + be32(2) + "\x01"), ParseError::Kind::kTruncated);
  EXPECT_EQ(parse_kind("", tiny_labels()), ParseError::Kind::kTruncated);
}

TEST(Idx, CountMismatch) {
  const std::string labels = be32(2049) + be32(2) + std::string("\x01\x02", 2);
  EXPECT_EQ(parse_kind(tiny_images(), labels), ParseError::Kind::kCountMismatch);
}

TEST(Idx, RoundTrip) {
  Dataset d = synthetic_dataset(4, 12, 30, 0.3, 5);
  // Snap to the 1/255 grid so the byte encoding is lossless.
  d.inputs = (d.inputs * 255.0).array().round() / 255.0;
  const Dataset back = dataset_from_idx(encode_idx_images(d), encode_idx_labels(d));
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_TRUE(back.inputs == d.inputs);
}

TEST(Idx, FileRoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "rapnet_test_idx";
  std::filesystem::create_directories(dir);
  const Dataset d = dataset_from_idx(tiny_images(), tiny_labels());
  write_idx_pair(d, (dir / "i").string(), (dir / "l").string());
  const Dataset back = load_idx_pair((dir / "i").string(), (dir / "l").string());
  EXPECT_TRUE(back.inputs == d.inputs);
  EXPECT_EQ(back.labels, d.labels);
  try {
    load_idx_pair((dir / "missing").string(), (dir / "l").string());
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kIo);
  }
  std::filesystem::remove_all(dir);
}

TEST(Subset, FullCountIsPermutation) {
  const Dataset d = synthetic_dataset(10, 3, 50, 0.0, 1);
  const Dataset s = subset(d, 50, 9);
  std::multiset<int> a(d.labels.begin(), d.labels.end()), b(s.labels.begin(), s.labels.end());
  EXPECT_EQ(a, b);
  EXPECT_THROW(subset(d, 51, 9), ParameterError);
}

TEST(Subset, ReproducibleAndDisjoint) {
  // Rows carry their own index so membership can be checked.
  Dataset d;
  d.inputs.resize(5000, 1);
  d.labels.assign(5000, 0);
  for (int r = 0; r < 5000; ++r) d.inputs(r, 0) = r;
  const auto [a, b] = disjoint_subsets(d, 2000, 1000, 17);
  const auto [a2, b2] = disjoint_subsets(d, 2000, 1000, 17);
  EXPECT_TRUE(a.inputs == a2.inputs);
  EXPECT_TRUE(b.inputs == b2.inputs);
  std::set<double> ia(a.inputs.data(), a.inputs.data() + a.size());
  EXPECT_EQ(ia.size(), 2000u);
  for (std::size_t r = 0; r < b.size(); ++r) EXPECT_EQ(ia.count(b.inputs(static_cast<Eigen::Index>(r), 0)), 0u);
  EXPECT_FALSE(subset(d, 100, 1).inputs == subset(d, 100, 2).inputs);
  EXPECT_THROW(disjoint_subsets(d, 4000, 1001, 0), ParameterError);
}

TEST(Subset, StratifiedIsBalancedAndDisjoint) {
  Dataset d = synthetic_dataset(10, 1, 3000, 0.0, 3);
  for (int r = 0; r < 3000; ++r) d.inputs(r, 0) = r;
  const auto [a, b] = stratified_disjoint_subsets(d, 2000, 1000, 4);
  EXPECT_EQ(max_class_frequency(a), 0.1);
  EXPECT_EQ(max_class_frequency(b), 0.1);
  std::set<double> ia(a.inputs.data(), a.inputs.data() + a.size());
  for (std::size_t r = 0; r < b.size(); ++r) EXPECT_EQ(ia.count(b.inputs(static_cast<Eigen::Index>(r), 0)), 0u);
  EXPECT_THROW(stratified_disjoint_subsets(d, 2500, 600, 4), ParameterError);
}

TEST(Synthetic, NoiselessExamplesEqualPrototypes) {
  const Dataset d = synthetic_dataset(3, 20, 9, 0.0, 11);
  for (int r = 3; r < 9; ++r) EXPECT_TRUE(d.inputs.row(r) == d.inputs.row(r % 3));
  EXPECT_FALSE(d.inputs.row(0) == d.inputs.row(1));
}

TEST(Synthetic, BalancedLabelsAndRange) {
  const Dataset d = synthetic_dataset(10, 784, 1000, 0.5, 2);
  std::vector<int> counts(10, 0);
  for (int y : d.labels) ++counts[y];
  for (int c : counts) EXPECT_EQ(c, 100);
  EXPECT_GE(d.inputs.minCoeff(), 0.0);
  EXPECT_LE(d.inputs.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(max_class_frequency(d), 0.1);
}

TEST(Synthetic, NearestPrototypeOracle) {
  const Dataset d = synthetic_dataset(10, 784, 1000, 0.05, 8);
  const Dataset proto = synthetic_dataset(10, 784, 10, 0.0, 8);
  std::size_t wrong = 0;
  for (Eigen::Index r = 0; r < d.inputs.rows(); ++r) {
    Eigen::Index best = 0;
    (proto.inputs.rowwise() - d.inputs.row(r)).rowwise().squaredNorm().minCoeff(&best);
    wrong += static_cast<int>(best) != d.labels[static_cast<std::size_t>(r)];
  }
  EXPECT_LT(static_cast<double>(wrong) / 1000.0, 0.05);
}

const char* kFigure5Config = R"(# dropconnect + feedback alignment
arch = 784-100-200-10
epochs = 1000
lr_schedule = 0.1:600,0.005:200,0.001:200
seed = 3
train_size = 5000
test_size = 2000
images = train-images-idx3-ubyte
labels = train-labels-idx1-ubyte
test_images = t10k-images-idx3-ubyte
test_labels = t10k-labels-idx1-ubyte
dropconnect = 1,0.5,1
feedback_layers = 2
feedback_bound = 0.5
inference = gaussian
inference_samples = 100
)";

TEST(Config, LongScheduleAcceptedVerbatim) {
  const auto c = parse_config(kFigure5Config);
  EXPECT_EQ(c.epochs, 1000u);
  ASSERT_EQ(c.lr_schedule.size(), 3u);
  const auto t = c.train_config();
  EXPECT_EQ(t.rate_at(0), 0.1);
  EXPECT_EQ(t.rate_at(599), 0.1);
  EXPECT_EQ(t.rate_at(600), 0.005);
  EXPECT_EQ(t.rate_at(999), 0.001);
  EXPECT_EQ(c.train_size, 5000u);
  EXPECT_EQ(c.test_size, 2000u);
  const auto dc = c.dropconnect_config();
  EXPECT_FALSE(dc.active(0));
  EXPECT_TRUE(dc.active(1));
  EXPECT_EQ(dc.keep(1), 0.5);
  const auto fb = c.feedback_config();
  EXPECT_TRUE(fb.uses(1));
  EXPECT_FALSE(fb.uses(2));
  EXPECT_EQ(fb.matrices[1].rows(), 100);
  EXPECT_EQ(fb.matrices[1].cols(), 200);
  EXPECT_LE(fb.matrices[1].cwiseAbs().maxCoeff(), 0.5);
}

TEST(Config, RoundTrip) {
  auto c = parse_config(kFigure5Config);
  c.synthetic_noise = 0.1 + 0.2;  // not exactly representable in short form
  c.dropconnect[1] = 1.0 / 3.0;
  EXPECT_EQ(parse_config(config_to_text(c)), c);
  c.synthetic = true;
  c.images.clear();
  c.labels.clear();
  c.test_images.clear();
  c.test_labels.clear();
  c.feedback_layers.clear();
  c.stratified = true;
  EXPECT_EQ(parse_config(config_to_text(c)), c);

  const auto path = (std::filesystem::temp_directory_path() / "rapnet_cfg.txt").string();
  write_config(c, path);
  EXPECT_EQ(load_config(path), c);
  std::filesystem::remove(path);
}

TEST(Config, StratifiedSyntheticSplit) {
  auto c = parse_config("arch = 20-5-4\nepochs = 1\nlr_schedule = 0.1:1\nseed = 3\ntrain_size = 40\n"
                        "test_size = 20\nsynthetic = 1\nsynthetic_classes = 4\nstratified = 1\n");
  const auto [train, test] = load_experiment_data(c);
  EXPECT_EQ(train.size(), 40u);
  EXPECT_EQ(test.size(), 20u);
  EXPECT_DOUBLE_EQ(max_class_frequency(test), 0.25);
  EXPECT_DOUBLE_EQ(max_class_frequency(train), 0.25);
}

std::string with(const std::string& line) { return std::string(kFigure5Config) + line + "\n"; }

TEST(Config, Errors) {
  EXPECT_THROW(parse_config(with("dropconnect = 1,1.5,1")), ConfigError);
  EXPECT_THROW(parse_config(with("dropconnect = 1,1")), ConfigError);
  EXPECT_THROW(parse_config(with("learning_rate = 0.1")), ConfigError);
  EXPECT_THROW(parse_config(with("epochs = 999")), ConfigError);
  EXPECT_THROW(parse_config(with("epochs = ten")), ConfigError);
  EXPECT_THROW(parse_config(with("feedback_layers = 4")), ConfigError);
  EXPECT_THROW(parse_config(with("feedback_bound = 0")), ConfigError);
  EXPECT_THROW(parse_config(with("inference = vote")), ConfigError);
  EXPECT_THROW(parse_config(with("arch = 784")), ConfigError);
  EXPECT_THROW(parse_config(with("no equals sign")), ConfigError);
  EXPECT_THROW(parse_config("arch = 4-2\nepochs = 1\nlr_schedule = 0.1:1\nseed = 1\ntrain_size = 1\n"),
               ConfigError);  // test_size missing
  EXPECT_THROW(load_config("/nonexistent/rapnet.cfg"), ConfigError);
}

TEST(Results, EmptyTableIsHeaderOnly) {
  const Table t({"epoch", "train_loss", "test_error"});
  EXPECT_EQ(to_csv(t), "epoch,train_loss,test_error\n");
}

TEST(Results, CsvUsesDotAndLf) {
  Table t({"a", "b"});
  t.add_row() << 0.5 << std::uint64_t{3};
  t.add_row() << -1e-20 << std::uint64_t{0};
  EXPECT_EQ(to_csv(t), "a,b\n0.5,3\n-1e-20,0\n");
}

}  // namespace
}  // namespace rapnet
