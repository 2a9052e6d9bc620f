#include "onorm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>

namespace onorm {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::GaussianBlobs: return "gaussian-blobs";
    case DatasetKind::SyntheticImages: return "synthetic-images";
    case DatasetKind::IdxFile: return "idx-file";
  }
  return "gaussian-blobs";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian-blobs") return DatasetKind::GaussianBlobs;
  if (name == "synthetic-images") return DatasetKind::SyntheticImages;
  if (name == "idx-file") return DatasetKind::IdxFile;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

namespace {

Dataset blobs(const DatasetSpec& spec, Rng& rng) {
  if (spec.dims < spec.classes) throw std::invalid_argument("gaussian-blobs: dims must be at least classes");
  if (!(spec.spread >= 0.0) || !(spec.radius > 0.0)) throw std::invalid_argument("gaussian-blobs: bad radius/spread");
  Dataset d;
  d.classes = spec.classes;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t k = i % spec.classes;
    std::vector<double> x(spec.dims);
    for (std::size_t j = 0; j < spec.dims; ++j) {
      x[j] = (j == k ? spec.radius : 0.0) + (spec.spread > 0.0 ? rng.normal(0.0, spec.spread) : 0.0);
    }
    d.inputs.emplace_back(spec.dims, 1, std::move(x));
    d.labels.push_back(static_cast<int>(k));
  }
  return d;
}

// Each class gets a smoothed random template; samples add white noise.
Dataset images(const DatasetSpec& spec, Rng& rng) {
  const std::size_t s = spec.image_size;
  if (s < 2) throw std::invalid_argument("synthetic-images: image_size must be at least 2");
  std::vector<std::vector<double>> templates;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    std::vector<double> raw(s * s);
    for (auto& v : raw) v = rng.normal();
    std::vector<double> t(s * s, 0.0);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        double acc = 0.0;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(s) || xx >= static_cast<std::ptrdiff_t>(s)) continue;
            acc += raw[static_cast<std::size_t>(yy) * s + static_cast<std::size_t>(xx)];
            ++count;
          }
        }
        t[y * s + x] = 2.0 * acc / count;
      }
    }
    templates.push_back(std::move(t));
  }
  Dataset d;
  d.classes = spec.classes;
  d.height = s;
  d.width = s;
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t k = i % spec.classes;
    std::vector<double> x = templates[k];
    for (auto& v : x) v += rng.normal(0.0, spec.image_noise);
    d.inputs.emplace_back(1, s * s, std::move(x));
    d.labels.push_back(static_cast<int>(k));
  }
  return d;
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IdxTruncatedError(std::string(what) + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n, const char* what) {
  std::vector<unsigned char> out(n);
  if (n > 0 && !in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n))) {
    throw IdxTruncatedError(std::string(what) + ": truncated payload");
  }
  return out;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == DatasetKind::IdxFile) return read_idx(spec.idx_images, spec.idx_labels);
  if (spec.classes < 2) throw std::invalid_argument("dataset: need at least two classes");
  if (spec.samples == 0) throw std::invalid_argument("dataset: zero samples");
  Rng rng(seed);
  return spec.kind == DatasetKind::GaussianBlobs ? blobs(spec, rng) : images(spec, rng);
}

Dataset read_idx(std::istream& images_in, std::istream& labels_in) {
  if (read_u32(images_in, "idx images") != 0x00000803u) throw IdxMagicError("idx images: bad magic");
  if (read_u32(labels_in, "idx labels") != 0x00000801u) throw IdxMagicError("idx labels: bad magic");
  const std::uint32_t n_images = read_u32(images_in, "idx images");
  const std::uint32_t rows = read_u32(images_in, "idx images");
  const std::uint32_t cols = read_u32(images_in, "idx images");
  const std::uint32_t n_labels = read_u32(labels_in, "idx labels");
  if (n_images != n_labels) {
    throw IdxCountError("idx: " + std::to_string(n_images) + " images but " + std::to_string(n_labels) + " labels");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  const auto img = read_bytes(images_in, pixels * n_images, "idx images");
  const auto lab = read_bytes(labels_in, n_labels, "idx labels");

  Dataset d;
  d.height = rows;
  d.width = cols;
  int max_label = -1;
  for (std::size_t i = 0; i < n_images; ++i) {
    std::vector<double> x(pixels);
    for (std::size_t p = 0; p < pixels; ++p) x[p] = img[i * pixels + p] / 255.0;
    d.inputs.emplace_back(1, pixels, std::move(x));
    d.labels.push_back(lab[i]);
    max_label = std::max(max_label, static_cast<int>(lab[i]));
  }
  d.classes = static_cast<std::size_t>(max_label + 1);
  return d;
}

Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IdxError("cannot open " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IdxError("cannot open " + labels_path);
  return read_idx(images, labels);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction, Rng& rng) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw std::invalid_argument("split: fraction outside (0,1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto held = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(data.size())));
  Dataset a;
  Dataset b;
  for (Dataset* d : {&a, &b}) {
    d->classes = data.classes;
    d->channels = data.channels;
    d->height = data.height;
    d->width = data.width;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = i < order.size() - held ? a : b;
    dst.inputs.push_back(data.inputs[order[i]]);
    dst.labels.push_back(data.labels[order[i]]);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace onorm
