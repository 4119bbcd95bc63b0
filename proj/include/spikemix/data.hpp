#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikemix/tensor.hpp"

namespace spikemix {

struct Dataset {
  Tensor images;            // [N, C, H, W], values in [0,1]
  std::vector<int> labels;  // length N
  std::string split;

  int64_t count() const { return images.empty() ? 0 : images.dim(0); }
  void validate(int num_classes) const;
  // [C,H,W] copy of one sample
  Tensor sample(int64_t i) const;
};

struct DatasetPair {
  Dataset train;
  Dataset eval;
};

// IDX (big-endian header) parsing. Image magic 0x00000803, label magic
// 0x00000801. Images come back as [N,1,H,W] in [0,1].
Tensor parse_idx_images(const std::string& path);
std::vector<int> parse_idx_labels(const std::string& path, int num_classes = 10);

// One CIFAR-10 binary file: records of 1 label byte + 3072 pixel bytes.
Dataset load_cifar_binary(const std::string& path);

struct SyntheticSpec {
  int classes = 2;
  int64_t n_train = 512;
  int64_t n_eval = 128;
  int hw = 16;
  double sep = 2.0;    // class-signal scale
  double noise = 0.1;  // pixel noise sigma
  uint64_t seed = 1;
};

// K Gaussian-blob classes on a [0,1] canvas, 3 channels, deterministic by
// seed. Large `sep` with small `noise` yields linearly separable classes.
Dataset make_synthetic(const SyntheticSpec& spec, int64_t n, uint64_t seed, const std::string& split);

// "synthetic:k=v,...", "cifar10:<dir-or-file>", "idx:<dir>"
DatasetPair load_source(const std::string& source);
SyntheticSpec parse_synthetic_spec(const std::string& args);

}  // namespace spikemix
