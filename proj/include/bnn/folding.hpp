#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "bnn/bitcore.hpp"
#include "bnn/trainer.hpp"

namespace bnn {

// Thresholds are stored as 11-bit two's-complement integers.
inline constexpr int kThresholdBits = 11;
inline constexpr std::int32_t kThresholdMin = -(1 << (kThresholdBits - 1));
inline constexpr std::int32_t kThresholdMax = (1 << (kThresholdBits - 1)) - 1;

// One layer of the hardware-facing model. Hidden layers carry one threshold
// per neuron; the output layer carries none and emits raw sums.
struct FoldedLayer {
  BitMatrix weights;
  std::optional<std::vector<std::int32_t>> thresholds;

  std::size_t inputs() const { return weights.cols(); }
  std::size_t outputs() const { return weights.rows(); }
  bool thresholded() const { return thresholds.has_value(); }

  friend bool operator==(const FoldedLayer&, const FoldedLayer&) = default;
};

struct FoldedModel {
  std::vector<FoldedLayer> layers;

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().inputs(); }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().outputs(); }

  // Checks dimension chaining, that exactly the last layer lacks thresholds,
  // and the 11-bit range. Throws DimensionError or ValueError.
  void validate() const;

  friend bool operator==(const FoldedModel&, const FoldedModel&) = default;
};

// The normalized pre-activation of an integer sum z under unit-scale batch
// normalization: (z - mean) / sqrt(var + eps) + beta.
double bn_value(double z, double mean, double var, double beta, double eps);

struct FoldedThreshold {
  std::int32_t value = 0;    // after clamping
  double real = 0.0;         // mean - beta * sqrt(var + eps)
  bool clamped = false;
};

// Smallest integer T with bn_value(T) >= 0, saturated to the 11-bit range.
// When not clamped, z >= T  <=>  bn_value(z) >= 0 for every integer z.
// Throws ValueError on non-finite statistics, var < 0 or eps <= 0.
FoldedThreshold fold_threshold(double mean, double var, double beta, double eps);

// bit (j, i) = 1 iff latent(j, i) >= 0; rows are output neurons.
BitMatrix binarize_weights(const train::Matrix& latent);

struct FoldReport {
  // (layer, neuron) pairs whose threshold saturated.
  std::vector<std::pair<std::size_t, std::size_t>> clamped;
};

// Binarizes every layer and folds the batch normalization of each hidden
// layer into thresholds. The output layer keeps raw sums.
FoldedModel fold_model(const train::TrainableNetwork& net, FoldReport* report = nullptr);

}  // namespace bnn
