#pragma once

// Image-classification datasets in their distribution formats: IDX (MNIST,
// FashionMNIST) and the CIFAR-10 binary version. Pixels are scaled to [0,1].

#include "tdca/error.hpp"
#include "tdca/linalg.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tdca {

enum class DatasetId { MNIST, FashionMNIST, CIFAR10 };
enum class Split { Train, Test };

inline constexpr std::size_t kClassCount = 10;

inline std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::MNIST: return "mnist";
    case DatasetId::FashionMNIST: return "fashion";
    case DatasetId::CIFAR10: return "cifar10";
  }
  return "?";
}

inline DatasetId dataset_id_from_string(std::string_view s) {
  if (s == "mnist") return DatasetId::MNIST;
  if (s == "fashion" || s == "fashion-mnist" || s == "fashionmnist") return DatasetId::FashionMNIST;
  if (s == "cifar10" || s == "cifar-10") return DatasetId::CIFAR10;
  throw ValueError("unknown dataset '" + std::string(s) + "' (expected mnist, fashion or cifar10)");
}

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

/// Size of the official distribution split; subsets (e.g. locally bundled
/// extracts) are accepted by the loaders and simply differ from this.
inline std::size_t canonical_count(DatasetId id, Split split) {
  if (split == Split::Test) return 10000;
  return id == DatasetId::CIFAR10 ? 50000 : 60000;
}

inline std::size_t input_dim(DatasetId id) { return id == DatasetId::CIFAR10 ? 3072 : 784; }

struct Dataset {
  Matrix inputs;                     // count x dim, values in [0,1]
  std::vector<std::uint8_t> labels;  // one per row, in [0,9]
  DatasetId id = DatasetId::MNIST;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }
  bool empty() const { return labels.empty(); }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

inline void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected,
                        const std::filesystem::path& path) {
  if (bytes.size() < 4) throw FormatError(path.string() + ": truncated IDX header");
  const std::uint32_t actual = read_be32(bytes, 0);
  if (actual != expected) {
    throw FormatError(path.string() + ": bad IDX magic, expected " + hex32(expected) + ", got " +
                      hex32(actual));
  }
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3072;

/// Parse an IDX image/label file pair.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, DatasetId id = DatasetId::MNIST,
                        Split split = Split::Train) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  detail::check_magic(img, kIdxImagesMagic, images_path);
  detail::check_magic(lab, kIdxLabelsMagic, labels_path);
  if (img.size() < 16) throw FormatError(images_path.string() + ": truncated IDX header");
  if (lab.size() < 8) throw FormatError(labels_path.string() + ": truncated IDX header");

  const std::size_t count = detail::read_be32(img, 4);
  const std::size_t rows = detail::read_be32(img, 8);
  const std::size_t cols = detail::read_be32(img, 12);
  const std::size_t label_count = detail::read_be32(lab, 4);
  if (count != label_count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }
  const std::size_t dim = rows * cols;
  if (img.size() != 16 + count * dim) {
    throw FormatError(images_path.string() + ": expected " + std::to_string(16 + count * dim) +
                      " bytes, found " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + count) {
    throw FormatError(labels_path.string() + ": expected " + std::to_string(8 + count) +
                      " bytes, found " + std::to_string(lab.size()));
  }

  Dataset ds;
  ds.id = id;
  ds.split = split;
  ds.inputs.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  ds.labels.assign(lab.begin() + 8, lab.end());
  const std::uint8_t* px = img.data() + 16;
  double* out = ds.inputs.data();
  for (std::size_t i = 0; i < count * dim; ++i) out[i] = px[i] / 255.0;
  for (std::size_t i = 0; i < count; ++i) {
    if (ds.labels[i] >= kClassCount) {
      throw FormatError(labels_path.string() + ": label " + std::to_string(ds.labels[i]) +
                        " out of range at record " + std::to_string(i));
    }
  }
  return ds;
}

/// Concatenate CIFAR-10 binary batch files (1 label byte + 3072 pixel bytes
/// per record).
inline Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths,
                            Split split = Split::Train) {
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t count = 0;
  for (const auto& p : batch_paths) {
    auto bytes = detail::read_file(p);
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw FormatError(p.string() + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of " + std::to_string(kCifarRecordBytes));
    }
    count += bytes.size() / kCifarRecordBytes;
    files.push_back(std::move(bytes));
  }

  Dataset ds;
  ds.id = DatasetId::CIFAR10;
  ds.split = split;
  ds.inputs.resize(static_cast<Eigen::Index>(count), 3072);
  ds.labels.reserve(count);
  Eigen::Index row = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& bytes = files[f];
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes, ++row) {
      const std::uint8_t label = bytes[off];
      if (label >= kClassCount) {
        throw FormatError(batch_paths[f].string() + ": label byte " + std::to_string(label) +
                          " > 9 at record " + std::to_string(off / kCifarRecordBytes));
      }
      ds.labels.push_back(label);
      for (Eigen::Index c = 0; c < 3072; ++c) {
        ds.inputs(row, c) = bytes[off + 1 + static_cast<std::size_t>(c)] / 255.0;
      }
    }
  }
  return ds;
}

/// Class-stratified deterministic subset: n/10 per class, the remainder going
/// one each to the lowest class indices. A class with too few examples gives
/// up its deficit to the next classes in index order. Rows keep their original
/// relative order.
inline Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  detail::require_value(n <= ds.size(), "subsample: n=" + std::to_string(n) +
                                            " exceeds dataset size " + std::to_string(ds.size()));
  std::array<std::vector<std::size_t>, kClassCount> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

  std::array<std::size_t, kClassCount> quota{};
  for (std::size_t c = 0; c < kClassCount; ++c) {
    quota[c] = n / kClassCount + (c < n % kClassCount ? 1 : 0);
  }
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (quota[c] > by_class[c].size()) {
      deficit += quota[c] - by_class[c].size();
      quota[c] = by_class[c].size();
    }
  }
  for (std::size_t c = 0; c < kClassCount && deficit > 0; ++c) {
    const std::size_t take = std::min(deficit, by_class[c].size() - quota[c]);
    quota[c] += take;
    deficit -= take;
  }

  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    auto& idx = by_class[c];
    // partial Fisher-Yates: the first quota[c] slots become the sample
    for (std::size_t i = 0; i < quota[c]; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(picked.begin(), picked.end());

  Dataset out;
  out.id = ds.id;
  out.split = ds.split;
  out.inputs.resize(static_cast<Eigen::Index>(picked.size()), ds.inputs.cols());
  out.labels.reserve(picked.size());
  for (std::size_t r = 0; r < picked.size(); ++r) {
    out.inputs.row(static_cast<Eigen::Index>(r)) = ds.inputs.row(static_cast<Eigen::Index>(picked[r]));
    out.labels.push_back(ds.labels[picked[r]]);
  }
  return out;
}

}  // namespace tdca
