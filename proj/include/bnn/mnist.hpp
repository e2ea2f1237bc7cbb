#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bnn/bitcore.hpp"
#include "bnn/error.hpp"

namespace bnn::mnist {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::size_t kClasses = 10;

inline constexpr std::uint32_t kImagesMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;  // 2049

// Row-major 28x28 grayscale image.
using Image = std::array<std::uint8_t, kImagePixels>;

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<Image> images;
  std::vector<std::uint8_t> labels;
  Split split = Split::kTest;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Raised while parsing IDX containers; position() is the byte offset at
// which the problem was detected.
class IdxError : public FormatError {
 public:
  enum class Kind { kBadMagic, kTruncated, kBadDimensions, kCountMismatch, kBadLabel };

  IdxError(Kind kind, const std::string& what, std::size_t offset)
      : FormatError(what, offset), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Parses in-memory IDX payloads (already decompressed).
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, Split split);

// Reads a file fully; gzip-compressed files are detected by magic and
// inflated transparently. Throws IoError if the file cannot be read.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, Split split);

// Loads the canonical file pair from a directory, accepting either the plain
// names (train-images-idx3-ubyte, ...) or the same names with a .gz suffix.
Dataset load_mnist_dir(const std::filesystem::path& dir, Split split);

std::vector<std::uint8_t> encode_idx_images(std::span<const Image> images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Maps pixel p to p / 127.5 - 1, flattened row-major. Every value is in [-1, 1].
std::array<double, kImagePixels> normalize(const Image& image);

// Sign of the normalized image; bit i is set iff pixel i >= 128.
BitVector binarize_image(const Image& image);

// First 10 test-set occurrences of each digit, ordered by digit then index.
// Throws ValueError naming the first digit with fewer than 10 samples.
std::vector<std::size_t> select_verification_set(const Dataset& test,
                                                 std::size_t per_digit = 10);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// Deterministic per-epoch shuffling. The permutation for an epoch depends
// only on (seed, epoch), so any epoch can be regenerated independently.
class BatchPlan {
 public:
  BatchPlan(std::size_t sample_count, std::size_t batch_size, std::uint64_t seed);

  std::size_t sample_count() const { return sample_count_; }
  std::size_t batch_size() const { return batch_size_; }
  std::uint64_t seed() const { return seed_; }
  // The final batch of an epoch may be short.
  std::size_t batches_per_epoch() const;

  std::vector<std::size_t> order(std::size_t epoch) const;
  // Indices of batch b within the given epoch order.
  std::span<const std::size_t> batch(std::span<const std::size_t> order, std::size_t b) const;

 private:
  std::size_t sample_count_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace bnn::mnist
