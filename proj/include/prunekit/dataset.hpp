#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prunekit/rng.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// Images as flat [n, channels, height, width] f32 in [0,1].
struct RawDataset {
  int channels = 0, height = 0, width = 0;
  std::vector<float> images;
  std::vector<std::uint8_t> labels;

  int count() const { return static_cast<int>(labels.size()); }
  std::size_t image_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
};

// MNIST IDX pair: big-endian headers, magic 0x00000803 for images and
// 0x00000801 for labels. Parse failures carry the byte offset.
RawDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072 pixel
// bytes in row-major R,G,B planes.
RawDataset load_cifar10_batches(const std::vector<std::string>& batch_paths);

// Loads `split` ("train" or "test") of dataset `id` ("mnist" or "cifar10")
// from the conventional file names under root. limit_per_class > 0 keeps the
// first n examples of each class in file order.
RawDataset load_dataset(const std::string& id, const std::string& root, const std::string& split,
                        int limit_per_class = 0);

std::vector<float> channel_means(const RawDataset& data);
std::vector<float> channel_stds(const RawDataset& data, const std::vector<float>& means);

struct BatchOptions {
  int batch_size = 64;
  bool shuffle = false;
  bool augment = false;  // zero-pad by `pad`, random crop back to full size
  bool hflip = false;    // random horizontal flip (CIFAR-style augmentation)
  int pad = 4;
};

// One pass over the data in batches; x is [B,C,H,W], normalized per channel.
// Deterministic given the rng state.
void for_each_batch(const RawDataset& data, const std::vector<float>& mean,
                    const std::vector<float>& stddev, const BatchOptions& opt, Rng& rng,
                    const std::function<void(const TensorPtr&, const std::vector<int>&)>& fn);

// Writes a synthetic 10-class dataset in MNIST IDX layout: translated class
// prototypes (sums of Gaussian bumps) with pixel noise. CPU-learnable in a
// few epochs, so the full pipeline can run at desk scale without downloads.
void generate_synth_dataset(const std::string& root, int train_per_class, int test_per_class,
                            unsigned seed);

}  // namespace prunekit
