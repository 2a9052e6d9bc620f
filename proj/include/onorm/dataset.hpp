#pragma once

// Labelled datasets: synthetic generators and an IDX reader.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onorm/tensor.hpp"

namespace onorm {

struct Dataset {
  std::vector<FeatureMap> inputs;
  std::vector<int> labels;
  std::size_t classes = 0;
  // Image geometry; height == 0 for flat vectors.
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return inputs.size(); }
  std::size_t input_size() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }
};

enum class DatasetKind { GaussianBlobs, SyntheticImages, IdxFile };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianBlobs;
  std::size_t classes = 3;
  std::size_t samples = 6000;
  std::size_t dims = 10;  // blobs
  double radius = 4.0;    // blobs: class k is centred at radius * e_k
  double spread = 1.0;    // blobs: within-class standard deviation
  std::size_t image_size = 8;
  double image_noise = 1.0;
  std::string idx_images;
  std::string idx_labels;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

// Pure function of (spec, seed). Throws std::invalid_argument for degenerate
// specs. IdxFile specs are loaded from disk instead.
Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxMagicError : IdxError {
  using IdxError::IdxError;
};
struct IdxTruncatedError : IdxError {
  using IdxError::IdxError;
};
struct IdxCountError : IdxError {
  using IdxError::IdxError;
};

// Images: magic 0x00000803, u32 count, rows, cols, then uint8 pixels.
// Labels: magic 0x00000801, u32 count, then uint8 labels. All big-endian.
Dataset read_idx(std::istream& images, std::istream& labels);
Dataset read_idx(const std::string& images_path, const std::string& labels_path);

// Shuffles with rng and holds out round(fraction * size) samples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction, Rng& rng);

}  // namespace onorm
