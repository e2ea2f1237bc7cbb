#include "bnn/engine.hpp"

#include "bnn/error.hpp"

namespace bnn {

namespace {

void check_input(const FoldedModel& model, std::size_t length) {
  if (model.layers.empty()) throw ValueError("infer: model has no layers");
  if (length != model.input_size()) throw DimensionError("infer input length", model.input_size(), length);
}

template <typename Dot>
InferenceTrace run(const FoldedModel& model, const BitVector& input, Dot dot) {
  check_input(model, input.size());
  InferenceTrace trace;
  BitVector activations = input;
  for (const FoldedLayer& layer : model.layers) {
    if (layer.thresholded()) {
      const auto& thresholds = *layer.thresholds;
      BitVector next(layer.outputs());
      for (std::size_t j = 0; j < layer.outputs(); ++j) {
        next.set(j, dot(activations, layer.weights.row(j)) >= thresholds[j]);
      }
      trace.hidden.push_back(next);
      activations = std::move(next);
    } else {
      auto& logits = trace.result.logits;
      logits.resize(layer.outputs());
      for (std::size_t j = 0; j < layer.outputs(); ++j) logits[j] = dot(activations, layer.weights.row(j));
    }
  }
  trace.result.predicted = argmax_lowest<std::int64_t>(trace.result.logits);
  return trace;
}

}  // namespace

InferenceResult infer(const FoldedModel& model, const BitVector& input) {
  return infer_trace(model, input).result;
}

InferenceTrace infer_trace(const FoldedModel& model, const BitVector& input) {
  return run(model, input, [](const BitVector& x, const BitVector& w) { return binary_dot(x, w); });
}

InferenceResult infer_bit_serial(const FoldedModel& model, const BitVector& input) {
  return run(model, input,
             [](const BitVector& x, const BitVector& w) { return binary_dot_serial(x, w); })
      .result;
}

std::vector<double> to_signs(const BitVector& bits) {
  std::vector<double> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = bits.get(i) ? 1.0 : -1.0;
  return out;
}

ReferenceModel to_reference(const FoldedModel& model) {
  model.validate();
  ReferenceModel ref;
  for (const FoldedLayer& layer : model.layers) {
    ReferenceModel::Layer r;
    r.inputs = layer.inputs();
    r.outputs = layer.outputs();
    r.weights.reserve(r.inputs * r.outputs);
    for (std::size_t j = 0; j < r.outputs; ++j) {
      for (std::size_t i = 0; i < r.inputs; ++i) r.weights.push_back(layer.weights.get(j, i) ? 1.0 : -1.0);
    }
    if (layer.thresholded()) r.thresholds.emplace(layer.thresholds->begin(), layer.thresholds->end());
    ref.layers.push_back(std::move(r));
  }
  return ref;
}

std::vector<double> infer_float_reference(const ReferenceModel& model, std::span<const double> input) {
  if (model.layers.empty()) throw ValueError("reference model has no layers");
  if (input.size() != model.layers.front().inputs) {
    throw DimensionError("reference input length", model.layers.front().inputs, input.size());
  }
  std::vector<double> x(input.begin(), input.end());
  for (const auto& layer : model.layers) {
    std::vector<double> z(layer.outputs, 0.0);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += layer.weights[j * layer.inputs + i] * x[i];
      z[j] = acc;
    }
    if (layer.thresholds) {
      for (std::size_t j = 0; j < layer.outputs; ++j) z[j] = z[j] >= (*layer.thresholds)[j] ? 1.0 : -1.0;
    }
    x = std::move(z);
  }
  return x;
}

Classification classify_dataset(const FoldedModel& model, const mnist::Dataset& data) {
  if (data.empty()) throw ValueError("classify_dataset: empty dataset");
  if (model.output_size() != mnist::kClasses) {
    throw DimensionError("classify_dataset output classes", mnist::kClasses, model.output_size());
  }
  Classification c;
  c.total = data.size();
  c.predictions.reserve(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const InferenceResult r = infer(model, mnist::binarize_image(data.images[n]));
    const std::size_t truth = data.labels[n];
    c.predictions.push_back(static_cast<std::uint8_t>(r.predicted));
    ++c.per_class_total[truth];
    ++c.confusion[truth][r.predicted];
    if (r.predicted == truth) {
      ++c.correct;
      ++c.per_class_correct[truth];
    }
  }
  c.accuracy = static_cast<double>(c.correct) / static_cast<double>(c.total);
  return c;
}

}  // namespace bnn
