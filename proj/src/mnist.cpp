#include "bnn/mnist.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

#include "bnn/random.hpp"

namespace bnn::mnist {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw IdxError(IdxError::Kind::kTruncated, "IDX header truncated", bytes.size());
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::uint32_t got, std::uint32_t want, const char* what) {
  if (got != want) {
    throw IdxError(IdxError::Kind::kBadMagic,
                   std::string(what) + ": bad magic " + std::to_string(got) + " (expected " +
                       std::to_string(want) + ")",
                   0);
  }
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& name : {stem, stem + ".gz"}) {
    const auto p = dir / name;
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("missing " + stem + "[.gz] in " + dir.string());
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, Split split) {
  check_magic(read_be32(image_bytes, 0), kImagesMagic, "images file");
  check_magic(read_be32(label_bytes, 0), kLabelsMagic, "labels file");

  const std::uint32_t count = read_be32(image_bytes, 4);
  const std::uint32_t rows = read_be32(image_bytes, 8);
  const std::uint32_t cols = read_be32(image_bytes, 12);
  if (rows != kImageSide || cols != kImageSide) {
    throw IdxError(IdxError::Kind::kBadDimensions,
                   "images file: expected 28x28, got " + std::to_string(rows) + "x" +
                       std::to_string(cols),
                   8);
  }
  const std::uint32_t label_count = read_be32(label_bytes, 4);
  if (label_count != count) {
    throw IdxError(IdxError::Kind::kCountMismatch,
                   "labels file holds " + std::to_string(label_count) + " items, images file " +
                       std::to_string(count),
                   4);
  }

  constexpr std::size_t kImageHeader = 16;
  constexpr std::size_t kLabelHeader = 8;
  const std::size_t image_need = kImageHeader + std::size_t{count} * kImagePixels;
  if (image_bytes.size() < image_need) {
    throw IdxError(IdxError::Kind::kTruncated,
                   "images payload truncated: need " + std::to_string(image_need) + " bytes",
                   image_bytes.size());
  }
  if (label_bytes.size() < kLabelHeader + count) {
    throw IdxError(IdxError::Kind::kTruncated,
                   "labels payload truncated: need " + std::to_string(kLabelHeader + count) +
                       " bytes",
                   label_bytes.size());
  }
  if (image_bytes.size() != image_need) {
    throw IdxError(IdxError::Kind::kCountMismatch, "images file has trailing bytes", image_need);
  }
  if (label_bytes.size() != kLabelHeader + count) {
    throw IdxError(IdxError::Kind::kCountMismatch, "labels file has trailing bytes",
                   kLabelHeader + count);
  }

  Dataset data;
  data.split = split;
  data.images.resize(count);
  data.labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto* src = image_bytes.data() + kImageHeader + n * kImagePixels;
    std::copy(src, src + kImagePixels, data.images[n].begin());
    const std::uint8_t label = label_bytes[kLabelHeader + n];
    if (label >= kClasses) {
      throw IdxError(IdxError::Kind::kBadLabel, "label " + std::to_string(label) + " out of range",
                     kLabelHeader + n);
    }
    data.labels[n] = label;
  }
  return data;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes non-gzip input through unchanged.
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  for (;;) {
    const int got = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (got < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw IoError("read failed: " + path.string() + ": " + msg);
    }
    if (got == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + got);
  }
  gzclose(f);
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, Split split) {
  const auto images = read_file_bytes(images_path);
  const auto labels = read_file_bytes(labels_path);
  return parse_idx(images, labels, split);
}

Dataset load_mnist_dir(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  return load_idx(find_file(dir, prefix + "-images-idx3-ubyte"),
                  find_file(dir, prefix + "-labels-idx1-ubyte"), split);
}

std::vector<std::uint8_t> encode_idx_images(std::span<const Image> images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size() * kImagePixels);
  put_be32(out, kImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.size()));
  put_be32(out, kImageSide);
  put_be32(out, kImageSide);
  for (const Image& img : images) out.insert(out.end(), img.begin(), img.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  write_bytes(images_path, encode_idx_images(data.images));
  write_bytes(labels_path, encode_idx_labels(data.labels));
}

std::array<double, kImagePixels> normalize(const Image& image) {
  std::array<double, kImagePixels> out{};
  for (std::size_t i = 0; i < kImagePixels; ++i) out[i] = image[i] / 127.5 - 1.0;
  return out;
}

BitVector binarize_image(const Image& image) {
  const auto normalized = normalize(image);
  return binarize_real(normalized);
}

std::vector<std::size_t> select_verification_set(const Dataset& test, std::size_t per_digit) {
  std::array<std::vector<std::size_t>, kClasses> by_digit;
  for (std::size_t n = 0; n < test.size(); ++n) {
    auto& bucket = by_digit[test.labels[n]];
    if (bucket.size() < per_digit) bucket.push_back(n);
  }
  std::vector<std::size_t> out;
  out.reserve(per_digit * kClasses);
  for (std::size_t d = 0; d < kClasses; ++d) {
    if (by_digit[d].size() < per_digit) {
      throw ValueError("verification set: digit " + std::to_string(d) + " has only " +
                       std::to_string(by_digit[d].size()) + " samples");
    }
    out.insert(out.end(), by_digit[d].begin(), by_digit[d].end());
  }
  return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.split = data.split;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    out.images.push_back(data.images.at(idx));
    out.labels.push_back(data.labels.at(idx));
  }
  return out;
}

BatchPlan::BatchPlan(std::size_t sample_count, std::size_t batch_size, std::uint64_t seed)
    : sample_count_(sample_count), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ValueError("batch size must be positive");
}

std::size_t BatchPlan::batches_per_epoch() const {
  return (sample_count_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchPlan::order(std::size_t epoch) const {
  std::vector<std::size_t> perm(sample_count_);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(mix_seed(seed_, epoch));
  rng.shuffle(std::span<std::size_t>(perm));
  return perm;
}

std::span<const std::size_t> BatchPlan::batch(std::span<const std::size_t> order,
                                              std::size_t b) const {
  const std::size_t begin = b * batch_size_;
  const std::size_t end = std::min(begin + batch_size_, order.size());
  return order.subspan(begin, end - begin);
}

}  // namespace bnn::mnist
