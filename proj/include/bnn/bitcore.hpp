#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bnn {

// Packed vector of ±1 values. Bit value 1 encodes +1 and 0 encodes -1.
// Logical bit i lives in word i / kWordBits at position i % kWordBits.
// Padding bits past size() are always zero.
class BitVector {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  BitVector() = default;
  // All bits cleared (every element -1). Throws ValueError if length == 0.
  explicit BitVector(std::size_t length);

  // Bits from a '0'/'1' string, leftmost character is index 0.
  static BitVector from_string(std::string_view bits);
  static BitVector from_bools(std::span<const bool> bits);

  std::size_t size() const { return length_; }
  bool empty() const { return length_ == 0; }

  bool get(std::size_t i) const {
    return ((words_[i / kWordBits] >> (i % kWordBits)) & Word{1}) != 0;
  }
  void set(std::size_t i, bool value);
  // ±1 view of bit i.
  int sign_at(std::size_t i) const { return get(i) ? 1 : -1; }

  std::span<const Word> words() const { return words_; }
  std::size_t popcount() const;
  BitVector complement() const;
  std::string to_string() const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  void clear_padding();

  std::size_t length_ = 0;
  std::vector<Word> words_;
};

// One BitVector per output neuron. Row j holds neuron j's weights over all
// inputs, i.e. the transposed ROM-row layout used by the accelerator.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols);
  // Throws DimensionError if the rows disagree in length.
  explicit BitMatrix(std::vector<BitVector> rows);

  std::size_t rows() const { return data_.size(); }
  std::size_t cols() const { return cols_; }

  const BitVector& row(std::size_t j) const { return data_[j]; }
  bool get(std::size_t j, std::size_t i) const { return data_[j].get(i); }
  void set(std::size_t j, std::size_t i, bool value) { data_[j].set(i, value); }

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::size_t cols_ = 0;
  std::vector<BitVector> data_;
};

// Sign binarization: bit i = 1 iff values[i] >= 0 (zero maps to +1).
// Throws ValueError naming the first non-finite index, or on empty input.
BitVector binarize_real(std::span<const double> values);
BitVector binarize_real(std::span<const float> values);

// Number of positions where x and w agree. Word-parallel.
// Throws DimensionError on length mismatch.
std::size_t xnor_popcount(const BitVector& x, const BitVector& w);

// ±1 dot product: 2 * xnor_popcount(x, w) - n.
std::int64_t binary_dot(const BitVector& x, const BitVector& w);

// Bit-at-a-time versions of the two kernels above. Same contract; used as the
// scalar baseline and for differential testing.
std::size_t xnor_popcount_serial(const BitVector& x, const BitVector& w);
std::int64_t binary_dot_serial(const BitVector& x, const BitVector& w);

}  // namespace bnn
