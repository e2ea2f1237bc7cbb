#include "bnn/folding.hpp"

#include <cmath>
#include <string>

#include "bnn/error.hpp"

namespace bnn {

void FoldedModel::validate() const {
  if (layers.empty()) throw ValueError("folded model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const FoldedLayer& layer = layers[l];
    if (layer.outputs() == 0 || layer.inputs() == 0) {
      throw ValueError("folded layer " + std::to_string(l) + " is empty");
    }
    if (l > 0 && layers[l - 1].outputs() != layer.inputs()) {
      throw DimensionError("folded layer " + std::to_string(l) + " inputs", layers[l - 1].outputs(),
                           layer.inputs());
    }
    const bool last = l + 1 == layers.size();
    if (last && layer.thresholded()) throw ValueError("output layer must not carry thresholds");
    if (!last && !layer.thresholded()) {
      throw ValueError("hidden layer " + std::to_string(l) + " is missing thresholds");
    }
    if (layer.thresholded()) {
      const auto& t = *layer.thresholds;
      if (t.size() != layer.outputs()) {
        throw DimensionError("threshold count of layer " + std::to_string(l), layer.outputs(), t.size());
      }
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (t[j] < kThresholdMin || t[j] > kThresholdMax) {
          throw ValueError("threshold of layer " + std::to_string(l) + " neuron " +
                           std::to_string(j) + " outside the 11-bit range");
        }
      }
    }
  }
}

double bn_value(double z, double mean, double var, double beta, double eps) {
  return (z - mean) * (1.0 / std::sqrt(var + eps)) + beta;
}

FoldedThreshold fold_threshold(double mean, double var, double beta, double eps) {
  if (!std::isfinite(mean) || !std::isfinite(var) || !std::isfinite(beta) || !std::isfinite(eps)) {
    throw ValueError("fold_threshold: non-finite batch-norm statistics");
  }
  if (var < 0.0) throw ValueError("fold_threshold: negative variance");
  if (eps <= 0.0) throw ValueError("fold_threshold: eps must be positive");

  FoldedThreshold out;
  out.real = mean - beta * std::sqrt(var + eps);

  // Outside the representable range the exact integer is irrelevant.
  if (out.real > kThresholdMax) {
    out.value = kThresholdMax;
    out.clamped = true;
    return out;
  }
  if (out.real < kThresholdMin - 1.0) {
    out.value = kThresholdMin;
    out.clamped = true;
    return out;
  }

  // ceil() gives the boundary in exact arithmetic; rounding in the two
  // floating-point routes can disagree by one near integers, so settle the
  // boundary against bn_value itself.
  auto t = static_cast<std::int64_t>(std::ceil(out.real));
  while (bn_value(static_cast<double>(t - 1), mean, var, beta, eps) >= 0.0) --t;
  while (bn_value(static_cast<double>(t), mean, var, beta, eps) < 0.0) ++t;

  if (t > kThresholdMax) {
    out.value = kThresholdMax;
    out.clamped = true;
  } else if (t < kThresholdMin) {
    out.value = kThresholdMin;
    out.clamped = true;
  } else {
    out.value = static_cast<std::int32_t>(t);
  }
  return out;
}

BitMatrix binarize_weights(const train::Matrix& latent) {
  if (!latent.allFinite()) throw ValueError("binarize_weights: non-finite latent weight");
  BitMatrix out(static_cast<std::size_t>(latent.rows()), static_cast<std::size_t>(latent.cols()));
  for (Eigen::Index j = 0; j < latent.rows(); ++j) {
    for (Eigen::Index i = 0; i < latent.cols(); ++i) {
      if (latent(j, i) >= 0.0) out.set(static_cast<std::size_t>(j), static_cast<std::size_t>(i), true);
    }
  }
  return out;
}

FoldedModel fold_model(const train::TrainableNetwork& net, FoldReport* report) {
  if (net.layers.empty()) throw ValueError("fold_model: network has no layers");
  FoldedModel model;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const bool last = l + 1 == net.layers.size();
    if ((layer.kind == train::LayerKind::kOutput) != last) {
      throw ValueError("fold_model: only the final layer may be an output layer");
    }
    FoldedLayer folded;
    folded.weights = binarize_weights(layer.weights);
    if (!last) {
      std::vector<std::int32_t> thresholds(layer.outputs());
      for (std::size_t j = 0; j < layer.outputs(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const FoldedThreshold t =
            fold_threshold(layer.bn.mean(jj), layer.bn.var(jj), layer.bn.beta(jj), layer.bn.eps);
        thresholds[j] = t.value;
        if (t.clamped && report != nullptr) report->clamped.emplace_back(l, j);
      }
      folded.thresholds = std::move(thresholds);
    }
    model.layers.push_back(std::move(folded));
  }
  model.validate();
  return model;
}

}  // namespace bnn
