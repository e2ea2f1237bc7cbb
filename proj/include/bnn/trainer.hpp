#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "bnn/mnist.hpp"

namespace bnn::train {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Batch normalization with the scale fixed at 1. Only the offset `beta` is
// learned; `mean` and `var` are the running statistics used at inference.
struct BNStats {
  Vector mean;
  Vector var;
  Vector beta;
  double eps = 1e-3;
  double momentum = 0.99;

  static BNStats identity(std::size_t neurons, double eps = 1e-3, double momentum = 0.99);
  std::size_t size() const { return static_cast<std::size_t>(beta.size()); }
};

enum class LayerKind { kHidden, kOutput };

// Fully connected layer without bias. `weights` is outputs x inputs and holds
// the real-valued latent weights; the forward pass only sees their signs.
struct DenseBinaryLayer {
  Matrix weights;
  BNStats bn;
  LayerKind kind = LayerKind::kHidden;

  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
};

// First and second Adam moments, shaped like the parameters they track.
struct AdamState {
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_beta, v_beta;
  std::int64_t step = 0;
};

struct TrainableNetwork {
  std::vector<DenseBinaryLayer> layers;
  AdamState optimizer;

  std::vector<std::size_t> sizes() const;
};

struct TrainConfig {
  std::vector<std::size_t> layer_sizes{784, 128, 64, 10};
  std::size_t batch_size = 64;
  std::size_t epochs = 15;
  double lr0 = 0.001;
  double decay = 0.96;
  std::int64_t decay_steps = 1000;
  bool staircase = true;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-7;
  double bn_eps = 1e-3;
  double bn_momentum = 0.99;

  // Throws ValueError when a rate is non-positive or the layer list is too short.
  void validate() const;
};

// Forward nonlinearity used in place of sign(). kSign is the real training
// path. kHardTanh replaces sign by clip(x, -1, 1), whose true derivative is
// the straight-through gradient; it exists so that finite differences can
// check the backward pass.
enum class Binarizer { kSign, kHardTanh };

// sign(x) with +1 at zero, elementwise.
Matrix ste_sign_forward(const Matrix& x);
// Upstream gradient gated by |x| <= 1.
Matrix ste_sign_backward(const Matrix& x, const Matrix& upstream);

// Glorot-uniform latent weights, zero beta, identity running statistics.
TrainableNetwork make_network(std::span<const std::size_t> sizes, std::uint64_t seed,
                              double bn_eps = 1e-3, double bn_momentum = 0.99);

enum class BNMode { kTrain, kInfer };

// Per-layer intermediates kept for the backward pass.
struct LayerCache {
  Matrix input;         // activations feeding the layer, inputs x batch
  Matrix bin_weights;   // binarized weights actually used
  Matrix pre_bn;        // z = bin_weights * input
  Matrix normalized;    // (z - mean) / sqrt(var + eps)
  Vector batch_mean;
  Vector batch_var;
  Vector inv_std;
  Matrix post_bn;       // normalized + beta
};

struct ForwardResult {
  Matrix logits;  // classes x batch
  std::vector<LayerCache> layers;
};

// Batch normalization of z (neurons x batch). kTrain uses batch statistics,
// kInfer the running ones. Running statistics are never modified here.
Matrix batchnorm_forward(const Matrix& z, const BNStats& bn, BNMode mode, LayerCache* cache = nullptr);

// Moves the running statistics toward the batch statistics recorded in `fwd`.
void update_running_stats(TrainableNetwork& net, const ForwardResult& fwd);

// `inputs` is features x batch with values already normalized to [-1, 1].
ForwardResult forward(const TrainableNetwork& net, const Matrix& inputs, BNMode mode,
                      Binarizer binarizer = Binarizer::kSign);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> beta;
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

// Mean softmax cross-entropy of logits (classes x batch).
double cross_entropy(const Matrix& logits, std::span<const std::uint8_t> labels);

// Loss plus gradients with respect to every latent weight and beta. Requires a
// forward pass in kTrain mode.
LossAndGrad loss_and_grad(const TrainableNetwork& net, const ForwardResult& fwd,
                          std::span<const std::uint8_t> labels);

// Staircase (or smooth) exponential decay: lr0 * decay^(step / decay_steps).
double lr_at(const TrainConfig& cfg, std::int64_t step);

// One bias-corrected Adam update at lr_at(net.optimizer.step), followed by
// clipping every latent weight to [-1, 1]. Increments the step counter.
void adam_step(TrainableNetwork& net, const Gradients& grads, const TrainConfig& cfg);

// Normalized images as a features x batch matrix.
Matrix make_inputs(const mnist::Dataset& data, std::span<const std::size_t> indices);

// Argmax over the output-layer batch-normalized logits using running
// statistics. Ties go to the lowest class index.
double evaluate_float(const TrainableNetwork& net, const mnist::Dataset& data);
std::vector<std::uint8_t> predict_float(const TrainableNetwork& net, const mnist::Dataset& data);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  TrainableNetwork net;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full quantization-aware training run. Deterministic for a given config,
// seed and data.
TrainResult train(const TrainConfig& cfg, const mnist::Dataset& train_set,
                  const mnist::Dataset& test_set, const EpochCallback& on_epoch = {});

// Checkpoint directory: `manifest.txt` plus one raw little-endian float64
// array per tensor. See docs/formats.md for the byte layout.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

void save_checkpoint(const TrainableNetwork& net, const CheckpointInfo& info,
                     const std::filesystem::path& dir);
TrainableNetwork load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace bnn::train
