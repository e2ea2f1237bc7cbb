#include "bnn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bnn/error.hpp"
#include "bnn/random.hpp"

namespace bnn::train {

namespace {

Matrix hardtanh(const Matrix& x) { return x.cwiseMax(-1.0).cwiseMin(1.0); }

Matrix binarize(const Matrix& x, Binarizer b) {
  return b == Binarizer::kSign ? ste_sign_forward(x) : hardtanh(x);
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ValueError(std::string(what) + " contains non-finite values");
}

}  // namespace

BNStats BNStats::identity(std::size_t neurons, double eps, double momentum) {
  const auto n = static_cast<Eigen::Index>(neurons);
  BNStats bn;
  bn.mean = Vector::Zero(n);
  bn.var = Vector::Ones(n);
  bn.beta = Vector::Zero(n);
  bn.eps = eps;
  bn.momentum = momentum;
  return bn;
}

std::vector<std::size_t> TrainableNetwork::sizes() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().inputs());
  for (const auto& l : layers) out.push_back(l.outputs());
  return out;
}

void TrainConfig::validate() const {
  if (layer_sizes.size() < 2) throw ValueError("need at least an input and an output size");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ValueError("layer sizes must be positive");
  }
  if (batch_size == 0) throw ValueError("batch_size must be positive");
  if (!(lr0 > 0) || !(decay > 0) || decay_steps <= 0) {
    throw ValueError("learning-rate schedule parameters must be positive");
  }
  if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1) ||
      !(adam_eps > 0)) {
    throw ValueError("Adam parameters out of range");
  }
  if (!(bn_eps > 0) || !(bn_momentum >= 0 && bn_momentum < 1)) {
    throw ValueError("batch-norm parameters out of range");
  }
}

Matrix ste_sign_forward(const Matrix& x) {
  return x.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

Matrix ste_sign_backward(const Matrix& x, const Matrix& upstream) {
  return upstream.cwiseProduct(
      x.unaryExpr([](double v) { return std::abs(v) <= 1.0 ? 1.0 : 0.0; }));
}

TrainableNetwork make_network(std::span<const std::size_t> sizes, std::uint64_t seed,
                              double bn_eps, double bn_momentum) {
  if (sizes.size() < 2) throw ValueError("make_network: need at least two sizes");
  Rng rng(seed);
  TrainableNetwork net;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseBinaryLayer layer;
    layer.weights.resize(out, in);
    // Row-major fill order keeps the stream independent of Eigen's storage order.
    for (Eigen::Index j = 0; j < out; ++j) {
      for (Eigen::Index i = 0; i < in; ++i) layer.weights(j, i) = rng.uniform(-limit, limit);
    }
    layer.bn = BNStats::identity(sizes[l + 1], bn_eps, bn_momentum);
    layer.kind = (l + 2 == sizes.size()) ? LayerKind::kOutput : LayerKind::kHidden;
    net.layers.push_back(std::move(layer));
  }
  for (const auto& layer : net.layers) {
    net.optimizer.m_weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    net.optimizer.v_weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    net.optimizer.m_beta.push_back(Vector::Zero(layer.bn.beta.size()));
    net.optimizer.v_beta.push_back(Vector::Zero(layer.bn.beta.size()));
  }
  return net;
}

Matrix batchnorm_forward(const Matrix& z, const BNStats& bn, BNMode mode, LayerCache* cache) {
  const Eigen::Index batch = z.cols();
  if (z.rows() != bn.beta.size()) {
    throw DimensionError("batchnorm neurons", static_cast<std::size_t>(bn.beta.size()),
                         static_cast<std::size_t>(z.rows()));
  }
  Vector mean;
  Vector var;
  if (mode == BNMode::kTrain) {
    if (batch == 0) throw ValueError("batchnorm: empty batch in train mode");
    mean = z.rowwise().mean();
    var = (z.colwise() - mean).array().square().rowwise().mean();
  } else {
    mean = bn.mean;
    var = bn.var;
  }
  const Vector inv_std = (var.array() + bn.eps).rsqrt();
  Matrix normalized = (z.colwise() - mean).array().colwise() * inv_std.array();
  Matrix out = normalized.colwise() + bn.beta;
  if (cache != nullptr) {
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->inv_std = inv_std;
    cache->normalized = std::move(normalized);
  }
  return out;
}

void update_running_stats(TrainableNetwork& net, const ForwardResult& fwd) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    BNStats& bn = net.layers[l].bn;
    const LayerCache& c = fwd.layers[l];
    bn.mean = bn.momentum * bn.mean + (1.0 - bn.momentum) * c.batch_mean;
    bn.var = bn.momentum * bn.var + (1.0 - bn.momentum) * c.batch_var;
  }
}

ForwardResult forward(const TrainableNetwork& net, const Matrix& inputs, BNMode mode,
                      Binarizer binarizer) {
  if (net.layers.empty()) throw ValueError("forward: network has no layers");
  if (static_cast<std::size_t>(inputs.rows()) != net.layers.front().inputs()) {
    throw DimensionError("forward input features", net.layers.front().inputs(),
                         static_cast<std::size_t>(inputs.rows()));
  }
  ForwardResult fwd;
  fwd.layers.resize(net.layers.size());
  Matrix activations = binarize(inputs, binarizer);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseBinaryLayer& layer = net.layers[l];
    LayerCache& c = fwd.layers[l];
    c.input = std::move(activations);
    c.bin_weights = binarize(layer.weights, binarizer);
    c.pre_bn.noalias() = c.bin_weights * c.input;
    c.post_bn = batchnorm_forward(c.pre_bn, layer.bn, mode, &c);
    if (layer.kind == LayerKind::kHidden) {
      activations = binarize(c.post_bn, binarizer);
    } else {
      fwd.logits = c.post_bn;
    }
  }
  return fwd;
}

double cross_entropy(const Matrix& logits, std::span<const std::uint8_t> labels) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw DimensionError("cross_entropy labels", static_cast<std::size_t>(logits.cols()),
                         labels.size());
  }
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double peak = logits.col(b).maxCoeff();
    const double log_sum = std::log((logits.col(b).array() - peak).exp().sum()) + peak;
    total += log_sum - logits(labels[static_cast<std::size_t>(b)], b);
  }
  return total / static_cast<double>(logits.cols());
}

LossAndGrad loss_and_grad(const TrainableNetwork& net, const ForwardResult& fwd,
                          std::span<const std::uint8_t> labels) {
  LossAndGrad out;
  out.loss = cross_entropy(fwd.logits, labels);

  const Eigen::Index batch = fwd.logits.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  // d loss / d logits = (softmax - onehot) / batch
  Matrix upstream(fwd.logits.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double peak = fwd.logits.col(b).maxCoeff();
    Vector p = (fwd.logits.col(b).array() - peak).exp();
    p /= p.sum();
    p(labels[static_cast<std::size_t>(b)]) -= 1.0;
    upstream.col(b) = p * inv_batch;
  }

  const std::size_t n_layers = net.layers.size();
  out.grads.weights.resize(n_layers);
  out.grads.beta.resize(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseBinaryLayer& layer = net.layers[l];
    const LayerCache& c = fwd.layers[l];

    Matrix d_post = layer.kind == LayerKind::kHidden ? ste_sign_backward(c.post_bn, upstream)
                                                     : std::move(upstream);
    out.grads.beta[l] = d_post.rowwise().sum();

    // Batch-norm backward with batch statistics and unit scale.
    const Vector sum_d = d_post.rowwise().sum();
    const Vector sum_dx = d_post.cwiseProduct(c.normalized).rowwise().sum();
    Matrix d_pre = d_post;
    d_pre.colwise() -= sum_d * inv_batch;
    d_pre -= (c.normalized.array().colwise() * (sum_dx * inv_batch).array()).matrix();
    d_pre = (d_pre.array().colwise() * c.inv_std.array()).matrix();

    Matrix d_bin_weights = d_pre * c.input.transpose();
    out.grads.weights[l] = ste_sign_backward(layer.weights, d_bin_weights);
    if (l > 0) upstream.noalias() = c.bin_weights.transpose() * d_pre;
  }
  return out;
}

double lr_at(const TrainConfig& cfg, std::int64_t step) {
  if (step < 0) throw ValueError("lr_at: negative step");
  const double ratio = static_cast<double>(step) / static_cast<double>(cfg.decay_steps);
  const double exponent = cfg.staircase ? std::floor(ratio) : ratio;
  return cfg.lr0 * std::pow(cfg.decay, exponent);
}

void adam_step(TrainableNetwork& net, const Gradients& grads, const TrainConfig& cfg) {
  AdamState& s = net.optimizer;
  const double lr = lr_at(cfg, s.step);
  const double t = static_cast<double>(s.step + 1);
  const double correct1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.adam_beta2, t);
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double eps = cfg.adam_eps;

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / correct1) / ((v.array() / correct2).sqrt() + eps);
  };

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseBinaryLayer& layer = net.layers[l];
    update(layer.weights, s.m_weights[l], s.v_weights[l], grads.weights[l]);
    layer.weights = layer.weights.cwiseMax(-1.0).cwiseMin(1.0);
    update(layer.bn.beta, s.m_beta[l], s.v_beta[l], grads.beta[l]);
  }
  ++s.step;
}

Matrix make_inputs(const mnist::Dataset& data, std::span<const std::size_t> indices) {
  Matrix x(static_cast<Eigen::Index>(mnist::kImagePixels), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = data.images[indices[b]];
    for (std::size_t i = 0; i < mnist::kImagePixels; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = img[i] / 127.5 - 1.0;
    }
  }
  return x;
}

std::vector<std::uint8_t> predict_float(const TrainableNetwork& net, const mnist::Dataset& data) {
  constexpr std::size_t kChunk = 500;
  std::vector<std::uint8_t> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, data.size());
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const ForwardResult fwd = forward(net, make_inputs(data, idx), BNMode::kInfer);
    for (Eigen::Index b = 0; b < fwd.logits.cols(); ++b) {
      Eigen::Index best = 0;
      // Strictly-greater scan keeps the lowest index on ties.
      for (Eigen::Index k = 1; k < fwd.logits.rows(); ++k) {
        if (fwd.logits(k, b) > fwd.logits(best, b)) best = k;
      }
      out.push_back(static_cast<std::uint8_t>(best));
    }
  }
  return out;
}

double evaluate_float(const TrainableNetwork& net, const mnist::Dataset& data) {
  if (data.empty()) throw ValueError("evaluate_float: empty dataset");
  const auto predictions = predict_float(net, data);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    if (predictions[n] == data.labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const TrainConfig& cfg, const mnist::Dataset& train_set,
                  const mnist::Dataset& test_set, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.layer_sizes.front() != mnist::kImagePixels) {
    throw DimensionError("input layer size", mnist::kImagePixels, cfg.layer_sizes.front());
  }
  if (train_set.empty()) throw ValueError("train: empty training set");

  TrainResult result;
  result.net = make_network(cfg.layer_sizes, cfg.seed, cfg.bn_eps, cfg.bn_momentum);
  const mnist::BatchPlan plan(train_set.size(), cfg.batch_size, mix_seed(cfg.seed, 0x5eed));

  std::vector<std::uint8_t> labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = plan.order(epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < plan.batches_per_epoch(); ++b) {
      const auto idx = plan.batch(order, b);
      labels.clear();
      for (std::size_t n : idx) labels.push_back(train_set.labels[n]);

      const ForwardResult fwd = forward(result.net, make_inputs(train_set, idx), BNMode::kTrain);
      update_running_stats(result.net, fwd);
      const LossAndGrad lg = loss_and_grad(result.net, fwd, labels);
      adam_step(result.net, lg.grads, cfg);
      loss_sum += lg.loss * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.test_accuracy = test_set.empty() ? 0.0 : evaluate_float(result.net, test_set);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (const auto& layer : result.net.layers) check_finite(layer.weights, "latent weights");
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "bnn-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_f64(const std::filesystem::path& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t k = 0; k < count; ++k) {
    auto bits = std::bit_cast<std::uint64_t>(data[k]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> read_f64(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != count * 8) {
    throw FormatError(path.string() + ": expected " + std::to_string(count * 8) + " bytes, found " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), count * 8));
  }
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[k * 8 + b]} << (8 * b);
    out[k] = std::bit_cast<double>(bits);
  }
  return out;
}

std::string tensor_name(std::size_t layer, const char* what) {
  return "layer" + std::to_string(layer) + "." + what + ".f64";
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const TrainableNetwork& net, const CheckpointInfo& info,
                     const std::filesystem::path& dir) {
  if (net.layers.empty()) throw ValueError("save_checkpoint: empty network");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream manifest;
  manifest << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  manifest << "layers " << net.layers.size() << '\n';
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    manifest << "layer " << l << ' ' << layer.inputs() << ' ' << layer.outputs() << ' '
             << (layer.kind == LayerKind::kHidden ? "hidden" : "output") << '\n';
  }
  manifest << "bn_eps " << format_double(net.layers.front().bn.eps) << '\n';
  manifest << "bn_momentum " << format_double(net.layers.front().bn.momentum) << '\n';
  manifest << "seed " << info.seed << '\n';
  manifest << "epoch " << info.epoch << '\n';
  manifest << "step " << net.optimizer.step << '\n';
  {
    std::ofstream out(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.str();
  }

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    // Row-major: neuron j's weights are contiguous.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = layer.weights;
    write_f64(dir / tensor_name(l, "weights"), w.data(), static_cast<std::size_t>(w.size()));
    write_f64(dir / tensor_name(l, "bn_mean"), layer.bn.mean.data(), layer.bn.size());
    write_f64(dir / tensor_name(l, "bn_var"), layer.bn.var.data(), layer.bn.size());
    write_f64(dir / tensor_name(l, "bn_beta"), layer.bn.beta.data(), layer.bn.size());
  }
}

TrainableNetwork load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("cannot open " + (dir / "manifest.txt").string());

  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw FormatError("manifest: missing '" + key + "'", line_no + 1);
    ++line_no;
    std::istringstream is(line);
    std::string got;
    is >> got;
    if (got != key) throw FormatError("manifest: expected '" + key + "', found '" + got + "'", line_no);
    return is.str().substr(got.size());
  };

  {
    std::istringstream is(next(kCheckpointMagic));
    int version = 0;
    is >> version;
    if (version != kCheckpointVersion) throw FormatError("manifest: unsupported version", 1);
  }
  std::size_t n_layers = 0;
  std::istringstream(next("layers")) >> n_layers;
  if (n_layers == 0) throw FormatError("manifest: zero layers", line_no);

  struct Dim {
    std::size_t in, out;
    LayerKind kind;
  };
  std::vector<Dim> dims;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::istringstream is(next("layer"));
    std::size_t idx = 0;
    Dim d{};
    std::string kind;
    if (!(is >> idx >> d.in >> d.out >> kind) || idx != l || d.in == 0 || d.out == 0 ||
        (kind != "hidden" && kind != "output")) {
      throw FormatError("manifest: malformed layer line", line_no);
    }
    d.kind = kind == "hidden" ? LayerKind::kHidden : LayerKind::kOutput;
    if (!dims.empty() && dims.back().out != d.in) {
      throw DimensionError("checkpoint layer chaining", dims.back().out, d.in);
    }
    dims.push_back(d);
  }
  double eps = 0;
  double momentum = 0;
  std::istringstream(next("bn_eps")) >> eps;
  std::istringstream(next("bn_momentum")) >> momentum;
  CheckpointInfo meta;
  std::istringstream(next("seed")) >> meta.seed;
  std::istringstream(next("epoch")) >> meta.epoch;
  std::int64_t step = 0;
  std::istringstream(next("step")) >> step;
  if (info != nullptr) *info = meta;

  std::vector<std::size_t> sizes{dims.front().in};
  for (const auto& d : dims) sizes.push_back(d.out);
  TrainableNetwork net = make_network(sizes, 0, eps, momentum);
  net.optimizer.step = step;
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto& layer = net.layers[l];
    layer.kind = dims[l].kind;
    const auto w = read_f64(dir / tensor_name(l, "weights"), dims[l].in * dims[l].out);
    layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), static_cast<Eigen::Index>(dims[l].out), static_cast<Eigen::Index>(dims[l].in));
    const auto mean = read_f64(dir / tensor_name(l, "bn_mean"), dims[l].out);
    const auto var = read_f64(dir / tensor_name(l, "bn_var"), dims[l].out);
    const auto beta = read_f64(dir / tensor_name(l, "bn_beta"), dims[l].out);
    layer.bn.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    layer.bn.var = Eigen::Map<const Vector>(var.data(), static_cast<Eigen::Index>(var.size()));
    layer.bn.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  }
  return net;
}

}  // namespace bnn::train
