#include "bnn/bitcore.hpp"

#include <bit>
#include <cmath>

#include "bnn/error.hpp"

namespace bnn {

namespace {

std::size_t word_count(std::size_t bits) {
  return (bits + BitVector::kWordBits - 1) / BitVector::kWordBits;
}

// Mask selecting the live bits of the final word.
BitVector::Word tail_mask(std::size_t bits) {
  const std::size_t rem = bits % BitVector::kWordBits;
  return rem == 0 ? ~BitVector::Word{0} : ((BitVector::Word{1} << rem) - 1);
}

void check_same_length(const BitVector& x, const BitVector& w) {
  if (x.size() != w.size()) {
    throw DimensionError("xnor_popcount length mismatch", x.size(), w.size());
  }
}

template <typename Real>
BitVector binarize_impl(std::span<const Real> values) {
  if (values.empty()) throw ValueError("binarize_real: empty input");
  BitVector out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValueError("binarize_real: non-finite value at index " + std::to_string(i));
    }
    if (values[i] >= Real{0}) out.set(i, true);
  }
  return out;
}

}  // namespace

BitVector::BitVector(std::size_t length) : length_(length), words_(word_count(length), 0) {
  if (length == 0) throw ValueError("BitVector length must be at least 1");
}

BitVector BitVector::from_string(std::string_view bits) {
  BitVector out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') {
      out.set(i, true);
    } else if (bits[i] != '0') {
      throw ValueError("BitVector::from_string: illegal character at index " + std::to_string(i));
    }
  }
  return out;
}

BitVector BitVector::from_bools(std::span<const bool> bits) {
  BitVector out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out.set(i, bits[i]);
  return out;
}

void BitVector::set(std::size_t i, bool value) {
  const Word bit = Word{1} << (i % kWordBits);
  if (value) {
    words_[i / kWordBits] |= bit;
  } else {
    words_[i / kWordBits] &= ~bit;
  }
}

std::size_t BitVector::popcount() const {
  std::size_t total = 0;
  for (Word w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

BitVector BitVector::complement() const {
  BitVector out = *this;
  for (Word& w : out.words_) w = ~w;
  out.clear_padding();
  return out;
}

std::string BitVector::to_string() const {
  std::string s(length_, '0');
  for (std::size_t i = 0; i < length_; ++i) {
    if (get(i)) s[i] = '1';
  }
  return s;
}

void BitVector::clear_padding() {
  if (!words_.empty()) words_.back() &= tail_mask(length_);
}

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols) : cols_(cols) {
  data_.reserve(rows);
  for (std::size_t j = 0; j < rows; ++j) data_.emplace_back(cols);
}

BitMatrix::BitMatrix(std::vector<BitVector> rows) : data_(std::move(rows)) {
  if (data_.empty()) return;
  cols_ = data_.front().size();
  for (const BitVector& r : data_) {
    if (r.size() != cols_) throw DimensionError("BitMatrix row length", cols_, r.size());
  }
}

BitVector binarize_real(std::span<const double> values) { return binarize_impl(values); }
BitVector binarize_real(std::span<const float> values) { return binarize_impl(values); }

std::size_t xnor_popcount(const BitVector& x, const BitVector& w) {
  check_same_length(x, w);
  const auto xw = x.words();
  const auto ww = w.words();
  const std::size_t n = xw.size();
  if (n == 0) return 0;
  std::size_t matches = 0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    matches += static_cast<std::size_t>(std::popcount(~(xw[k] ^ ww[k])));
  }
  matches += static_cast<std::size_t>(
      std::popcount(~(xw[n - 1] ^ ww[n - 1]) & tail_mask(x.size())));
  return matches;
}

std::int64_t binary_dot(const BitVector& x, const BitVector& w) {
  const auto m = static_cast<std::int64_t>(xnor_popcount(x, w));
  return 2 * m - static_cast<std::int64_t>(x.size());
}

std::size_t xnor_popcount_serial(const BitVector& x, const BitVector& w) {
  check_same_length(x, w);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.get(i) == w.get(i)) ++matches;
  }
  return matches;
}

std::int64_t binary_dot_serial(const BitVector& x, const BitVector& w) {
  const auto m = static_cast<std::int64_t>(xnor_popcount_serial(x, w));
  return 2 * m - static_cast<std::int64_t>(x.size());
}

}  // namespace bnn
