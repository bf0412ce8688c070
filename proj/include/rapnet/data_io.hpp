// Datasets: IDX (MNIST) reading and writing, seeded subsets, and a synthetic
// prototype-plus-noise generator for offline runs.
//
// IDX layout (all integers big-endian):
//   images: u32 magic 0x00000803 (2051), u32 count, u32 rows, u32 cols,
//           then count*rows*cols unsigned bytes, row-major
//   labels: u32 magic 0x00000801 (2049), u32 count, then count bytes
// Pixels are scaled by 1/255.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rapnet/common.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  RowMatrix inputs;         // one example per row, entries in [0,1]
  std::vector<int> labels;  // class index per row
  std::string name;
  std::size_t image_rows = 0;  // IDX geometry; rows*cols == dim()
  std::size_t image_cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
  bool empty() const noexcept { return labels.empty(); }

  /// Largest label + 1 (0 when empty).
  int num_classes() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }

  Eigen::VectorXd one_hot(std::size_t row, int num_classes) const {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(num_classes);
    t[labels[row]] = 1.0;
    return t;
  }
};

/// Fraction of the most frequent label; the accuracy of the best constant
/// predictor.
inline double max_class_frequency(const Dataset& d) {
  if (d.empty()) return 0.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(d.num_classes()), 0);
  for (int y : d.labels) ++counts[static_cast<std::size_t>(y)];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(d.size());
}

// ---------------------------------------------------------------------------
// IDX

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset) {
  return (std::uint32_t{static_cast<unsigned char>(bytes[offset])} << 24) |
         (std::uint32_t{static_cast<unsigned char>(bytes[offset + 1])} << 16) |
         (std::uint32_t{static_cast<unsigned char>(bytes[offset + 2])} << 8) |
         std::uint32_t{static_cast<unsigned char>(bytes[offset + 3])};
}

inline void write_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

inline std::uint32_t checked_magic(const std::string& bytes, std::uint32_t expected,
                                   const char* what) {
  if (bytes.size() < 8)
    throw ParseError(ParseError::Kind::kTruncated, std::string(what) + ": header truncated");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected)
    throw ParseError(ParseError::Kind::kBadMagic, std::string(what) + ": magic " +
                                                      std::to_string(magic) + ", expected " +
                                                      std::to_string(expected));
  return magic;
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  RowMatrix pixels;  // scaled to [0,1]
};

inline IdxImages parse_idx_images(const std::string& bytes) {
  detail::checked_magic(bytes, kIdxImageMagic, "IDX images");
  if (bytes.size() < 16)
    throw ParseError(ParseError::Kind::kTruncated, "IDX images: header truncated");
  IdxImages img;
  img.count = detail::read_be32(bytes, 4);
  img.rows = detail::read_be32(bytes, 8);
  img.cols = detail::read_be32(bytes, 12);
  const std::size_t dim = img.rows * img.cols;
  if (bytes.size() - 16 < img.count * dim)
    throw ParseError(ParseError::Kind::kTruncated,
                     "IDX images: payload shorter than count*rows*cols");
  img.pixels.resize(static_cast<Eigen::Index>(img.count), static_cast<Eigen::Index>(dim));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 16;
  for (std::size_t k = 0; k < img.count * dim; ++k) img.pixels.data()[k] = p[k] / 255.0;
  return img;
}

inline std::vector<int> parse_idx_labels(const std::string& bytes) {
  detail::checked_magic(bytes, kIdxLabelMagic, "IDX labels");
  const std::size_t count = detail::read_be32(bytes, 4);
  if (bytes.size() - 8 < count)
    throw ParseError(ParseError::Kind::kTruncated, "IDX labels: payload shorter than count");
  std::vector<int> labels(count);
  for (std::size_t k = 0; k < count; ++k) labels[k] = static_cast<unsigned char>(bytes[8 + k]);
  return labels;
}

inline Dataset dataset_from_idx(const std::string& image_bytes, const std::string& label_bytes,
                                std::string name = "idx") {
  IdxImages img = parse_idx_images(image_bytes);
  std::vector<int> labels = parse_idx_labels(label_bytes);
  if (labels.size() != img.count)
    throw ParseError(ParseError::Kind::kCountMismatch,
                     "IDX: " + std::to_string(img.count) + " images but " +
                         std::to_string(labels.size()) + " labels");
  Dataset d;
  d.inputs = std::move(img.pixels);
  d.labels = std::move(labels);
  d.name = std::move(name);
  d.image_rows = img.rows;
  d.image_cols = img.cols;
  return d;
}

inline Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  return dataset_from_idx(read_text_file(images_path), read_text_file(labels_path),
                          images_path);
}

/// Pixels are written as round(255 x); values already on the 1/255 grid
/// survive a write/parse cycle exactly.
inline std::string encode_idx_images(const Dataset& d) {
  std::size_t rows = d.image_rows, cols = d.image_cols;
  if (rows * cols != d.dim()) {
    rows = d.dim();
    cols = 1;
  }
  std::string out;
  out.reserve(16 + d.size() * d.dim());
  detail::write_be32(out, kIdxImageMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(d.size()));
  detail::write_be32(out, static_cast<std::uint32_t>(rows));
  detail::write_be32(out, static_cast<std::uint32_t>(cols));
  for (Eigen::Index r = 0; r < d.inputs.rows(); ++r)
    for (Eigen::Index c = 0; c < d.inputs.cols(); ++c)
      out.push_back(static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(d.inputs(r, c), 0.0, 1.0) * 255.0))));
  return out;
}

inline std::string encode_idx_labels(const Dataset& d) {
  std::string out;
  detail::write_be32(out, kIdxLabelMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(d.size()));
  for (int y : d.labels) out.push_back(static_cast<char>(static_cast<unsigned char>(y)));
  return out;
}

inline void write_idx_pair(const Dataset& d, const std::string& images_path,
                           const std::string& labels_path) {
  write_text_file(images_path, encode_idx_images(d));
  write_text_file(labels_path, encode_idx_labels(d));
}

// ---------------------------------------------------------------------------
// Subsets

inline Dataset select_rows(const Dataset& d, std::span<const std::size_t> rows,
                           const std::string& name) {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), d.inputs.cols());
  out.labels.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = d.inputs.row(static_cast<Eigen::Index>(rows[k]));
    out.labels[k] = d.labels[rows[k]];
  }
  out.name = name;
  out.image_rows = d.image_rows;
  out.image_cols = d.image_cols;
  return out;
}

/// Seeded permutation of 0..size-1.
inline std::vector<std::size_t> seeded_permutation(std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "subset"));
  shuffle(std::span(idx), rng);
  return idx;
}

/// Uniform sample of `count` rows without replacement.
inline Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed) {
  if (count > d.size())
    throw ParameterError("subset: requested " + std::to_string(count) + " of " +
                         std::to_string(d.size()) + " examples");
  auto idx = seeded_permutation(d.size(), seed);
  idx.resize(count);
  return select_rows(d, idx, d.name + "[subset]");
}

/// Two subsets that share no row, e.g. a train/test split.
inline std::pair<Dataset, Dataset> disjoint_subsets(const Dataset& d, std::size_t first,
                                                    std::size_t second, std::uint64_t seed) {
  if (first + second > d.size())
    throw ParameterError("disjoint_subsets: " + std::to_string(first + second) +
                         " rows requested from " + std::to_string(d.size()));
  const auto idx = seeded_permutation(d.size(), seed);
  std::span<const std::size_t> all(idx);
  return {select_rows(d, all.first(first), d.name + "[train]"),
          select_rows(d, all.subspan(first, second), d.name + "[test]")};
}

/// Disjoint subsets with (as nearly as possible) equal counts per class:
/// each class contributes size/K rows, and the remainder goes one row each to
/// the lowest class indices. Rows within each subset are in seeded random
/// order.
inline std::pair<Dataset, Dataset> stratified_disjoint_subsets(const Dataset& d, std::size_t first,
                                                               std::size_t second,
                                                               std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(d.num_classes());
  if (k == 0) throw ParameterError("stratified_disjoint_subsets: empty dataset");
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t r : seeded_permutation(d.size(), seed))
    by_class[static_cast<std::size_t>(d.labels[r])].push_back(r);
  std::vector<std::size_t> a, b;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t na = first / k + (c < first % k ? 1 : 0);
    const std::size_t nb = second / k + (c < second % k ? 1 : 0);
    if (na + nb > by_class[c].size())
      throw ParameterError("stratified_disjoint_subsets: class " + std::to_string(c) + " has only " +
                           std::to_string(by_class[c].size()) + " examples");
    a.insert(a.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(na));
    b.insert(b.end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(na),
             by_class[c].begin() + static_cast<std::ptrdiff_t>(na + nb));
  }
  Rng rng(derive_seed(seed, "stratified-order"));
  shuffle(std::span(a), rng);
  shuffle(std::span(b), rng);
  return {select_rows(d, a, d.name + "[train]"), select_rows(d, b, d.name + "[test]")};
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Class prototypes uniform in [0,1]^dim; example k has label k mod
/// num_classes and equals its prototype plus N(0, noise_std^2) per pixel,
/// clamped to [0,1].
inline Dataset synthetic_dataset(int num_classes, std::size_t dim, std::size_t size,
                                 double noise_std, std::uint64_t seed) {
  if (num_classes < 1 || dim < 1 || size < 1)
    throw ParameterError("synthetic_dataset: classes, dim and size must be positive");
  if (!(noise_std >= 0.0)) throw ParameterError("synthetic_dataset: noise_std must be >= 0");
  Rng proto_rng(derive_seed(seed, "prototypes"));
  RowMatrix proto(num_classes, static_cast<Eigen::Index>(dim));
  for (Eigen::Index k = 0; k < proto.size(); ++k) proto.data()[k] = uniform01(proto_rng);

  Rng noise_rng(derive_seed(seed, "noise"));
  Dataset d;
  d.inputs.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(dim));
  d.labels.resize(size);
  for (std::size_t r = 0; r < size; ++r) {
    const int y = static_cast<int>(r % static_cast<std::size_t>(num_classes));
    d.labels[r] = y;
    for (std::size_t c = 0; c < dim; ++c) {
      double x = proto(y, static_cast<Eigen::Index>(c));
      if (noise_std > 0.0) x = std::clamp(x + noise_std * standard_normal(noise_rng), 0.0, 1.0);
      d.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
    }
  }
  d.name = "synthetic";
  d.image_rows = dim;
  d.image_cols = 1;
  return d;
}

}  // namespace rapnet
