#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bnn/bitcore.hpp"
#include "bnn/folding.hpp"
#include "bnn/mnist.hpp"

namespace bnn {

struct InferenceResult {
  std::vector<std::int64_t> logits;  // raw output-layer sums
  std::size_t predicted = 0;

  friend bool operator==(const InferenceResult&, const InferenceResult&) = default;
};

// Index of the largest value; the first one wins on ties.
template <typename T>
std::size_t argmax_lowest(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

// Integer inference: per hidden neuron, activation = (binary_dot >= T);
// the output layer returns raw sums. Throws DimensionError if the input
// length differs from the model's input size.
InferenceResult infer(const FoldedModel& model, const BitVector& input);

// Same as infer() but also returns every hidden layer's activation vector.
struct InferenceTrace {
  std::vector<BitVector> hidden;
  InferenceResult result;
};
InferenceTrace infer_trace(const FoldedModel& model, const BitVector& input);

// Same semantics as infer(), one bit per step with no word packing. This is
// the scalar baseline for throughput comparisons.
InferenceResult infer_bit_serial(const FoldedModel& model, const BitVector& input);

// The folded model expanded to ±1 reals with real-valued thresholds.
struct ReferenceModel {
  struct Layer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major, entries ±1
    std::optional<std::vector<double>> thresholds;
  };
  std::vector<Layer> layers;
};

ReferenceModel to_reference(const FoldedModel& model);

// Dot products in floating point over ±1 values. `input` holds ±1 entries.
// Returns the output-layer sums.
std::vector<double> infer_float_reference(const ReferenceModel& model, std::span<const double> input);

// ±1 expansion of a bit vector.
std::vector<double> to_signs(const BitVector& bits);

struct Classification {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::array<std::size_t, mnist::kClasses> per_class_total{};
  std::array<std::size_t, mnist::kClasses> per_class_correct{};
  // confusion[truth][predicted]
  std::array<std::array<std::size_t, mnist::kClasses>, mnist::kClasses> confusion{};
  std::vector<std::uint8_t> predictions;
};

// Binarizes every image and runs infer(). Throws ValueError on an empty
// dataset or a model whose output size is not 10.
Classification classify_dataset(const FoldedModel& model, const mnist::Dataset& data);

}  // namespace bnn
