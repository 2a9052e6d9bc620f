#include "onorm/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

namespace onorm {
namespace {

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

std::string images_blob(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, const std::string& pixels) {
  return be32(0x803) + be32(count) + be32(rows) + be32(cols) + pixels;
}

std::string labels_blob(std::uint32_t count, const std::string& labels) { return be32(0x801) + be32(count) + labels; }

Dataset read(const std::string& images, const std::string& labels) {
  std::istringstream a(images);
  std::istringstream b(labels);
  return read_idx(a, b);
}

TEST(Dataset, GenerationIsDeterministic) {
  DatasetSpec spec;
  spec.samples = 300;
  const auto a = generate_dataset(spec, 9);
  const auto b = generate_dataset(spec, 9);
  const auto c = generate_dataset(spec, 10);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.inputs, c.inputs);

  spec.kind = DatasetKind::SyntheticImages;
  EXPECT_EQ(generate_dataset(spec, 9).inputs, generate_dataset(spec, 9).inputs);
}

TEST(Dataset, BlobShapesAndBalance) {
  DatasetSpec spec;
  spec.samples = 99;
  const auto d = generate_dataset(spec, 1);
  ASSERT_EQ(d.size(), 99u);
  EXPECT_EQ(d.input_size(), 10u);
  EXPECT_EQ(d.classes, 3u);
  std::vector<int> count(3, 0);
  for (int l : d.labels) ++count[static_cast<std::size_t>(l)];
  EXPECT_EQ(count, (std::vector<int>{33, 33, 33}));
}

TEST(Dataset, ZeroSpreadBlobsSitOnTheirCentres) {
  DatasetSpec spec;
  spec.samples = 30;
  spec.spread = 0.0;
  const auto d = generate_dataset(spec, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < spec.dims; ++j) {
      EXPECT_EQ(d.inputs[i].values()[j], static_cast<int>(j) == d.labels[i] ? spec.radius : 0.0);
    }
  }
}

// Multinomial logistic regression fitted by full-batch gradient descent. An
// independent check that the default blobs are nearly separable.
TEST(Dataset, DefaultBlobsAreLinearlySeparableByLogisticRegression) {
  DatasetSpec spec;
  const auto d = generate_dataset(spec, 3);
  const std::size_t k = d.classes;
  const std::size_t n = d.input_size();
  std::vector<double> w(k * (n + 1), 0.0);
  auto logits = [&](const FeatureMap& x) {
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
      double s = w[c * (n + 1) + n];
      for (std::size_t j = 0; j < n; ++j) s += w[c * (n + 1) + j] * x.values()[j];
      z[c] = s;
    }
    return z;
  };
  for (int it = 0; it < 200; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto z = logits(d.inputs[i]);
      const double m = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (auto& v : z) total += (v = std::exp(v - m));
      for (std::size_t c = 0; c < k; ++c) {
        const double r = z[c] / total - (static_cast<int>(c) == d.labels[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < n; ++j) g[c * (n + 1) + j] += r * d.inputs[i].values()[j];
        g[c * (n + 1) + n] += r;
      }
    }
    for (std::size_t p = 0; p < w.size(); ++p) w[p] -= 0.5 * g[p] / static_cast<double>(d.size());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto z = logits(d.inputs[i]);
    correct += static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) == d.labels[i];
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(d.size()), 0.95);
}

TEST(Dataset, SyntheticImagesHaveImageGeometry) {
  DatasetSpec spec;
  spec.kind = DatasetKind::SyntheticImages;
  spec.classes = 10;
  spec.samples = 40;
  const auto d = generate_dataset(spec, 1);
  EXPECT_EQ(d.height, 8u);
  EXPECT_EQ(d.width, 8u);
  EXPECT_EQ(d.inputs[0].features(), 1u);
  EXPECT_EQ(d.inputs[0].spatial(), 64u);
  EXPECT_EQ(d.labels[13], 3);
}

TEST(Dataset, RejectsDegenerateSpecs) {
  DatasetSpec spec;
  spec.classes = 1;
  EXPECT_THROW(generate_dataset(spec, 1), std::invalid_argument);
  spec = DatasetSpec{};
  spec.dims = 2;
  EXPECT_THROW(generate_dataset(spec, 1), std::invalid_argument);
  spec = DatasetSpec{};
  spec.samples = 0;
  EXPECT_THROW(generate_dataset(spec, 1), std::invalid_argument);
}

TEST(Dataset, KindNamesRoundTrip) {
  for (auto k : {DatasetKind::GaussianBlobs, DatasetKind::SyntheticImages, DatasetKind::IdxFile}) {
    EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_dataset_kind("cifar"), std::invalid_argument);
}

TEST(Idx, ReadsTwoImageFixture) {
  const std::string px{'\x00', '\xff', '\x33', '\x66', '\x99', '\xcc', '\x00', '\x00'};
  const auto d = read(images_blob(2, 2, 2, px), labels_blob(2, std::string{'\x01', '\x04'}));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.height, 2u);
  EXPECT_EQ(d.width, 2u);
  EXPECT_EQ(d.classes, 5u);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 4}));
  EXPECT_EQ(d.inputs[0].values(), (std::vector<double>{0.0, 1.0, 0.2, 0.4}));
  EXPECT_EQ(d.inputs[1].values(), (std::vector<double>{0.6, 0.8, 0.0, 0.0}));
}

TEST(Idx, CountMismatch) {
  EXPECT_THROW(read(images_blob(2, 1, 1, "ab"), labels_blob(3, "abc")), IdxCountError);
}

TEST(Idx, ByteReversedMagic) {
  const std::string reversed = std::string{'\x03', '\x08', '\x00', '\x00'} + be32(1) + be32(1) + be32(1) + "a";
  EXPECT_THROW(read(reversed, labels_blob(1, "a")), IdxMagicError);
  EXPECT_THROW(read(images_blob(1, 1, 1, "a"), std::string{'\x01', '\x08', '\x00', '\x00'} + be32(1) + "a"),
               IdxMagicError);
}

TEST(Idx, Truncation) {
  EXPECT_THROW(read(images_blob(2, 2, 2, "abcde"), labels_blob(2, "ab")), IdxTruncatedError);
  EXPECT_THROW(read(images_blob(1, 1, 1, "a"), labels_blob(1, "")), IdxTruncatedError);
  EXPECT_THROW(read(be32(0x803) + "\x00\x00", labels_blob(1, "a")), IdxTruncatedError);
}

TEST(Idx, MissingFile) { EXPECT_THROW(read_idx("/nonexistent/a", "/nonexistent/b"), IdxError); }

TEST(Split, PartitionsWithoutLoss) {
  DatasetSpec spec;
  spec.samples = 101;
  const auto d = generate_dataset(spec, 1);
  Rng rng(5);
  const auto [train, hold] = split_dataset(d, 0.2, rng);
  EXPECT_EQ(hold.size(), 20u);
  EXPECT_EQ(train.size(), 81u);
  std::vector<std::vector<double>> all;
  for (const auto* part : {&train, &hold}) {
    for (const auto& x : part->inputs) all.push_back(x.values());
  }
  std::vector<std::vector<double>> orig;
  for (const auto& x : d.inputs) orig.push_back(x.values());
  std::sort(all.begin(), all.end());
  std::sort(orig.begin(), orig.end());
  EXPECT_EQ(all, orig);

  Rng again(5);
  EXPECT_EQ(split_dataset(d, 0.2, again).second.labels, hold.labels);
  EXPECT_THROW(split_dataset(d, 1.0, again), std::invalid_argument);
}

}  // namespace
}  // namespace onorm
