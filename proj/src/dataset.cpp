#include "prunekit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "prunekit/errors.hpp"

namespace prunekit {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(0, "cannot open dataset file '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t pos,
                        const std::string& what) {
  if (pos + 4 > buf.size()) {
    throw IngestError(pos, "truncated file while reading " + what);
  }
  return (static_cast<std::uint32_t>(buf[pos]) << 24) |
         (static_cast<std::uint32_t>(buf[pos + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[pos + 2]) << 8) |
         static_cast<std::uint32_t>(buf[pos + 3]);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3*1024 pixels

}  // namespace

RawDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const std::uint32_t img_magic = read_be32(img, 0, "image magic");
  if (img_magic != kIdxImagesMagic) {
    throw IngestError(0, "bad IDX image magic 0x" + std::to_string(img_magic) + " in '" +
                             images_path + "'");
  }
  const std::uint32_t n = read_be32(img, 4, "image count");
  const std::uint32_t rows = read_be32(img, 8, "row count");
  const std::uint32_t cols = read_be32(img, 12, "column count");
  const std::size_t need = 16 + static_cast<std::size_t>(n) * rows * cols;
  if (img.size() < need) {
    throw IngestError(img.size(), "IDX image file shorter than header promises (" +
                                      std::to_string(need) + " bytes needed)");
  }

  const auto lab = read_file(labels_path);
  const std::uint32_t lab_magic = read_be32(lab, 0, "label magic");
  if (lab_magic != kIdxLabelsMagic) {
    throw IngestError(0, "bad IDX label magic 0x" + std::to_string(lab_magic) + " in '" +
                             labels_path + "'");
  }
  const std::uint32_t n_labels = read_be32(lab, 4, "label count");
  if (n_labels != n) {
    throw IngestError(4, "label count " + std::to_string(n_labels) + " != image count " +
                             std::to_string(n));
  }
  if (lab.size() < 8 + n_labels) {
    throw IngestError(lab.size(), "IDX label file shorter than header promises");
  }

  RawDataset out;
  out.channels = 1;
  out.height = static_cast<int>(rows);
  out.width = static_cast<int>(cols);
  out.images.resize(static_cast<std::size_t>(n) * rows * cols);
  for (std::size_t i = 0; i < out.images.size(); ++i) {
    out.images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  out.labels.assign(lab.begin() + 8, lab.begin() + 8 + n_labels);
  return out;
}

RawDataset load_cifar10_batches(const std::vector<std::string>& batch_paths) {
  RawDataset out;
  out.channels = 3;
  out.height = 32;
  out.width = 32;
  for (const auto& path : batch_paths) {
    const auto buf = read_file(path);
    if (buf.empty() || buf.size() % kCifarRecord != 0) {
      throw IngestError(buf.size(), "CIFAR batch '" + path + "' is not a multiple of " +
                                        std::to_string(kCifarRecord) + " bytes");
    }
    const std::size_t n = buf.size() / kCifarRecord;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = i * kCifarRecord;
      const std::uint8_t label = buf[base];
      if (label > 9) {
        throw IngestError(base, "CIFAR label byte " + std::to_string(label) + " out of range");
      }
      out.labels.push_back(label);
      for (std::size_t j = 0; j < 3072; ++j) {
        out.images.push_back(static_cast<float>(buf[base + 1 + j]) / 255.0f);
      }
    }
  }
  return out;
}

namespace {

RawDataset limit_dataset(const RawDataset& data, int limit_per_class) {
  if (limit_per_class <= 0) return data;
  RawDataset out;
  out.channels = data.channels;
  out.height = data.height;
  out.width = data.width;
  std::vector<int> taken(256, 0);
  const std::size_t sz = data.image_size();
  for (int i = 0; i < data.count(); ++i) {
    const auto label = data.labels[static_cast<std::size_t>(i)];
    if (taken[label] >= limit_per_class) continue;
    ++taken[label];
    out.labels.push_back(label);
    out.images.insert(out.images.end(), data.images.begin() + i * sz,
                      data.images.begin() + (i + 1) * sz);
  }
  return out;
}

}  // namespace

RawDataset load_dataset(const std::string& id, const std::string& root, const std::string& split,
                        int limit_per_class) {
  namespace fs = std::filesystem;
  const bool train = split == "train";
  if (!train && split != "test") {
    throw ConfigError("load_dataset: split must be 'train' or 'test', got '" + split + "'");
  }
  RawDataset data;
  if (id == "mnist") {
    const char* img = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
    const char* lab = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
    data = load_mnist_idx((fs::path(root) / img).string(), (fs::path(root) / lab).string());
  } else if (id == "cifar10") {
    std::vector<std::string> files;
    if (train) {
      for (int i = 1; i <= 5; ++i) {
        files.push_back((fs::path(root) / ("data_batch_" + std::to_string(i) + ".bin")).string());
      }
    } else {
      files.push_back((fs::path(root) / "test_batch.bin").string());
    }
    data = load_cifar10_batches(files);
  } else {
    throw ConfigError("load_dataset: unknown dataset id '" + id + "'");
  }
  return limit_dataset(data, limit_per_class);
}

std::vector<float> channel_means(const RawDataset& data) {
  std::vector<double> acc(static_cast<std::size_t>(data.channels), 0.0);
  const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
  for (int i = 0; i < data.count(); ++i) {
    for (int c = 0; c < data.channels; ++c) {
      const float* p = data.images.data() + (static_cast<std::size_t>(i) * data.channels + c) *
                                                plane;
      for (std::size_t s = 0; s < plane; ++s) acc[static_cast<std::size_t>(c)] += p[s];
    }
  }
  std::vector<float> out(static_cast<std::size_t>(data.channels));
  const double n = static_cast<double>(data.count()) * static_cast<double>(plane);
  for (int c = 0; c < data.channels; ++c) {
    out[static_cast<std::size_t>(c)] = n > 0 ? static_cast<float>(acc[c] / n) : 0.0f;
  }
  return out;
}

std::vector<float> channel_stds(const RawDataset& data, const std::vector<float>& means) {
  std::vector<double> acc(static_cast<std::size_t>(data.channels), 0.0);
  const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
  for (int i = 0; i < data.count(); ++i) {
    for (int c = 0; c < data.channels; ++c) {
      const float* p = data.images.data() + (static_cast<std::size_t>(i) * data.channels + c) *
                                                plane;
      for (std::size_t s = 0; s < plane; ++s) {
        const double d = p[s] - means[static_cast<std::size_t>(c)];
        acc[static_cast<std::size_t>(c)] += d * d;
      }
    }
  }
  std::vector<float> out(static_cast<std::size_t>(data.channels));
  const double n = static_cast<double>(data.count()) * static_cast<double>(plane);
  for (int c = 0; c < data.channels; ++c) {
    // Constant channels normalize to zero instead of dividing by zero.
    out[static_cast<std::size_t>(c)] =
        n > 0 ? std::max(1e-6f, static_cast<float>(std::sqrt(acc[c] / n))) : 1.0f;
  }
  return out;
}

void for_each_batch(const RawDataset& data, const std::vector<float>& mean,
                    const std::vector<float>& stddev, const BatchOptions& opt, Rng& rng,
                    const std::function<void(const TensorPtr&, const std::vector<int>&)>& fn) {
  if (static_cast<int>(mean.size()) != data.channels ||
      static_cast<int>(stddev.size()) != data.channels) {
    throw ShapeError("for_each_batch: normalization stats do not match channel count");
  }
  std::vector<int> order(static_cast<std::size_t>(data.count()));
  std::iota(order.begin(), order.end(), 0);
  if (opt.shuffle) rng.shuffle(order);

  const int c = data.channels, h = data.height, w = data.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int start = 0; start < data.count(); start += opt.batch_size) {
    const int b = std::min(opt.batch_size, data.count() - start);
    auto x = make_tensor({b, c, h, w});
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
      const int idx = order[static_cast<std::size_t>(start + i)];
      labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(idx)];
      int dy = 0, dx = 0;
      bool flip = false;
      if (opt.augment) {
        dy = rng.below(2 * opt.pad + 1) - opt.pad;
        dx = rng.below(2 * opt.pad + 1) - opt.pad;
      }
      if (opt.hflip) flip = rng.coin();
      for (int ch = 0; ch < c; ++ch) {
        const float* src =
            data.images.data() + (static_cast<std::size_t>(idx) * c + ch) * plane;
        float* dst = x->data.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
        const float m = mean[static_cast<std::size_t>(ch)];
        const float inv = 1.0f / stddev[static_cast<std::size_t>(ch)];
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          for (int xx = 0; xx < w; ++xx) {
            const int sx0 = flip ? (w - 1 - xx) : xx;
            const int sx = sx0 + dx;
            const float v =
                (sy < 0 || sy >= h || sx < 0 || sx >= w) ? 0.0f : src[sy * w + sx];
            dst[y * w + xx] = (v - m) * inv;
          }
        }
      }
    }
    fn(x, labels);
  }
}

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  out.write(bytes, 4);
}

// 10 class prototypes, each a sum of signed Gaussian bumps.
struct Bump {
  float cy, cx, sigma, amp;
};

std::vector<std::vector<Bump>> make_prototypes(Rng& rng) {
  std::vector<std::vector<Bump>> protos(10);
  for (auto& bumps : protos) {
    const int n = 3 + rng.below(2);
    for (int i = 0; i < n; ++i) {
      bumps.push_back({6.0f + rng.uniform(0.0f, 16.0f), 6.0f + rng.uniform(0.0f, 16.0f),
                       rng.uniform(2.0f, 4.5f), rng.uniform(0.5f, 1.0f) * (rng.coin() ? 1 : -1)});
    }
  }
  return protos;
}

void render(const std::vector<Bump>& bumps, int dy, int dx, float gain, Rng& noise,
            std::uint8_t* out) {
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      float v = 0.0f;
      for (const auto& b : bumps) {
        const float ry = static_cast<float>(y) - (b.cy + static_cast<float>(dy));
        const float rx = static_cast<float>(x) - (b.cx + static_cast<float>(dx));
        v += b.amp * std::exp(-(ry * ry + rx * rx) / (2.0f * b.sigma * b.sigma));
      }
      v = 0.5f + 0.5f * gain * v + noise.normal(0.0f, 0.06f);
      v = std::clamp(v, 0.0f, 1.0f);
      out[y * 28 + x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
}

void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                    const std::vector<std::vector<Bump>>& protos, int per_class, Rng& rng) {
  const int n = per_class * 10;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(n) * 28 * 28);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
  // Interleave classes so any prefix of the file stays balanced.
  for (int i = 0; i < n; ++i) {
    const int cls = i % 10;
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(cls);
    const int dy = rng.below(9) - 4;
    const int dx = rng.below(9) - 4;
    const float gain = rng.uniform(0.8f, 1.2f);
    render(protos[static_cast<std::size_t>(cls)], dy, dx, gain, rng,
           pixels.data() + static_cast<std::size_t>(i) * 28 * 28);
  }

  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  if (!img) throw Error("generate_synth_dataset: cannot write '" + images_path + "'");
  write_be32(img, 0x00000803);
  write_be32(img, static_cast<std::uint32_t>(n));
  write_be32(img, 28);
  write_be32(img, 28);
  img.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));

  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  if (!lab) throw Error("generate_synth_dataset: cannot write '" + labels_path + "'");
  write_be32(lab, 0x00000801);
  write_be32(lab, static_cast<std::uint32_t>(n));
  lab.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

}  // namespace

void generate_synth_dataset(const std::string& root, int train_per_class, int test_per_class,
                            unsigned seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  Rng rng(seed);
  const auto protos = make_prototypes(rng);
  write_idx_pair((fs::path(root) / "train-images-idx3-ubyte").string(),
                 (fs::path(root) / "train-labels-idx1-ubyte").string(), protos, train_per_class,
                 rng);
  write_idx_pair((fs::path(root) / "t10k-images-idx3-ubyte").string(),
                 (fs::path(root) / "t10k-labels-idx1-ubyte").string(), protos, test_per_class,
                 rng);
}

}  // namespace prunekit
