#pragma once

// Dataset files under a data directory:
//   mnist/ and fashion/   train-images-idx3-ubyte, train-labels-idx1-ubyte,
//                         t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
//   cifar10/              data_batch_1.bin .. data_batch_5.bin, test_batch.bin

#include "tdca/dataset.hpp"
#include "tdca/error.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace tdca::harness {

class MissingDataError : public Error {
 public:
  using Error::Error;
};

/// --data-dir if given, else $TDCA_DATA_DIR, else ./data.
inline std::filesystem::path resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TDCA_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

inline std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& root, DatasetId id,
                                                        Split split) {
  const auto dir = root / std::string(to_string(id));
  if (id == DatasetId::CIFAR10) {
    if (split == Split::Test) return {dir / "test_batch.bin"};
    std::vector<std::filesystem::path> out;
    for (int i = 1; i <= 5; ++i) out.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    return out;
  }
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  return {dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte")};
}

inline bool dataset_available(const std::filesystem::path& root, DatasetId id) {
  for (Split s : {Split::Train, Split::Test}) {
    for (const auto& f : dataset_files(root, id, s)) {
      if (!std::filesystem::exists(f)) return false;
    }
  }
  return true;
}

inline Dataset load_split(const std::filesystem::path& root, DatasetId id, Split split) {
  const auto files = dataset_files(root, id, split);
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) {
      throw MissingDataError("missing data file " + f.string() +
                             " (run scripts/fetch_data.py --data-dir " + root.string() + ")");
    }
  }
  if (id == DatasetId::CIFAR10) return load_cifar10(files, split);
  return load_idx(files[0], files[1], id, split);
}

struct PreparedData {
  DatasetId id = DatasetId::MNIST;
  Dataset train;
  Dataset test;
  std::size_t train_available = 0;  // size of the full training split on disk
  std::vector<std::filesystem::path> files;
};

/// Stratified training subset of `train_size` (the whole split when it is not
/// larger) and the first `test_size` test examples (0 = all).
inline PreparedData prepare_data(const std::filesystem::path& root, DatasetId id, std::size_t train_size,
                                 std::size_t test_size, std::uint64_t subsample_seed) {
  PreparedData d;
  d.id = id;
  Dataset full = load_split(root, id, Split::Train);
  d.train_available = full.size();
  if (train_size > full.size()) {
    throw MissingDataError(std::string(to_string(id)) + " training split on disk has " +
                           std::to_string(full.size()) + " examples, config asks for " +
                           std::to_string(train_size));
  }
  d.train = train_size == full.size() ? std::move(full) : subsample(full, train_size, subsample_seed);
  d.test = load_split(root, id, Split::Test);
  if (test_size > 0 && test_size < d.test.size()) {
    d.test.inputs.conservativeResize(static_cast<Eigen::Index>(test_size), Eigen::NoChange);
    d.test.labels.resize(test_size);
  }
  for (Split s : {Split::Train, Split::Test}) {
    for (const auto& f : dataset_files(root, id, s)) d.files.push_back(f);
  }
  return d;
}

}  // namespace tdca::harness
