// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "bnn/engine.hpp"
#include "bnn/folding.hpp"
#include "bnn/hwsim.hpp"
#include "bnn/memfmt.hpp"
#include "bnn/mnist.hpp"
#include "bnn/random.hpp"
#include "bnn/trainer.hpp"

using namespace bnn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  std::printf("criterion %2d: %s  %s | %s\n", id, pass ? "PASS" : "FAIL", title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_directory_bytes(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t count_b = std::distance(fs::directory_iterator(b), fs::directory_iterator{});
  if (names.size() != count_b) return false;
  for (const auto& n : names) {
    if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) return false;
  }
  return true;
}

FoldedModel random_model(Rng& rng, const std::vector<std::size_t>& sizes) {
  FoldedModel m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    BitMatrix w(sizes[l + 1], sizes[l]);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      for (std::size_t i = 0; i < w.cols(); ++i) w.set(j, i, rng.coin());
    }
    FoldedLayer layer{std::move(w), std::nullopt};
    if (l + 2 < sizes.size()) {
      std::vector<std::int32_t> t(sizes[l + 1]);
      for (auto& v : t) v = static_cast<std::int32_t>(rng.below(7)) - 3;
      layer.thresholds = std::move(t);
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

// ±1 floating point forward pass written independently of the library.
std::vector<double> float_oracle(const FoldedModel& m, const BitVector& x) {
  std::vector<double> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x.get(i) ? 1.0 : -1.0;
  for (const auto& layer : m.layers) {
    std::vector<double> z(layer.outputs(), 0.0);
    for (std::size_t j = 0; j < layer.outputs(); ++j) {
      for (std::size_t i = 0; i < layer.inputs(); ++i) z[j] += (layer.weights.get(j, i) ? 1.0 : -1.0) * a[i];
      if (layer.thresholded()) z[j] = z[j] >= (*layer.thresholds)[j] ? 1.0 : -1.0;
    }
    a = std::move(z);
  }
  return a;
}

std::size_t oracle_mismatches(const FoldedModel& m, const BitVector& x) {
  const auto expect = float_oracle(m, x);
  const InferenceResult got = infer(m, x);
  std::size_t bad = 0;
  for (std::size_t k = 0; k < expect.size(); ++k) bad += static_cast<double>(got.logits[k]) != expect[k];
  return bad;
}

// Criterion 8 on one batch: fraction of parameters whose analytic gradient
// is within 1e-3 relative of a central difference.
std::pair<std::size_t, std::size_t> gradient_agreement(std::uint64_t seed) {
  const std::vector<std::size_t> sizes{6, 4, 3, 2};
  train::TrainableNetwork net = train::make_network(sizes, seed);
  Rng rng(mix_seed(seed, 1));
  for (auto& layer : net.layers) {
    for (Eigen::Index j = 0; j < layer.bn.beta.size(); ++j) layer.bn.beta(j) = rng.uniform(-0.3, 0.3);
  }
  train::Matrix x(6, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> y(16);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(2));

  auto loss = [&] {
    return train::cross_entropy(train::forward(net, x, train::BNMode::kTrain, train::Binarizer::kHardTanh).logits, y);
  };
  const auto fwd = train::forward(net, x, train::BNMode::kTrain, train::Binarizer::kHardTanh);
  const auto grads = train::loss_and_grad(net, fwd, y).grads;
  const double h = 1e-4;
  std::size_t ok = 0, total = 0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    ok += std::abs(numeric - analytic) <= 1e-3 * scale + 1e-9;
    ++total;
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < net.layers[l].weights.size(); ++i) check(net.layers[l].weights(i), grads.weights[l](i));
    for (Eigen::Index j = 0; j < net.layers[l].bn.beta.size(); ++j) check(net.layers[l].bn.beta(j), grads.beta[l](j));
  }
  return {ok, total};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bnn acceptance suite"};
  std::string data_dir = "data";
  std::string golden_dir = "tests/golden";
  app.add_option("--data", data_dir, "MNIST directory")->capture_default_str();
  app.add_option("--golden", golden_dir, "Golden .mem directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::temp_directory_path() / "bnn_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const auto train_set = mnist::load_mnist_dir(data_dir, mnist::Split::kTrain);
  const auto test_set = mnist::load_mnist_dir(data_dir, mnist::Split::kTest);
  const auto suite_idx = mnist::select_verification_set(test_set);
  const auto suite = mnist::subset(test_set, suite_idx);

  // 1. Training reproduction.
  const train::TrainConfig cfg;
  const auto t_train = Clock::now();
  const train::TrainResult run1 = train::train(cfg, train_set, test_set);
  const double train_s = seconds_since(t_train);
  const double float_acc = run1.history.back().test_accuracy;
  report(1, float_acc >= 0.82 && train_s <= 15 * 60, "training reproduction",
         fmt("float test accuracy %.4f (>= 0.82), %.0f s (<= 900 s)", float_acc, train_s));

  // 2. Hardware-path accuracy.
  const FoldedModel model = fold_model(run1.net);
  const Classification full = classify_dataset(model, test_set);
  const Classification sub = classify_dataset(model, suite);
  const auto suite_gap = std::abs(static_cast<long>(sub.correct) - 84L);
  report(2, full.accuracy >= 0.80 && suite_gap <= 5, "hardware-path accuracy",
         fmt("integer test accuracy %.4f (>= 0.80); suite %.0f/100 (84 +/- 5)", full.accuracy,
             static_cast<double>(sub.correct)));

  // 3. Oracle equivalence.
  {
    Rng rng(2024);
    const FoldedModel toy = random_model(rng, {12, 8, 6, 4});
    std::size_t toy_bad = 0;
    for (std::uint32_t pattern = 0; pattern < 4096; ++pattern) {
      BitVector x(12);
      for (std::size_t i = 0; i < 12; ++i) x.set(i, (pattern >> i) & 1U);
      toy_bad += oracle_mismatches(toy, x);
    }
    std::size_t mnist_bad = 0;
    for (const auto& img : test_set.images) mnist_bad += oracle_mismatches(model, mnist::binarize_image(img));
    report(3, toy_bad == 0 && mnist_bad == 0, "oracle equivalence",
           fmt("toy 4096 inputs: %.0f logit mismatches; MNIST %.0f images: %.0f mismatches",
               static_cast<double>(toy_bad), static_cast<double>(test_set.size()), static_cast<double>(mnist_bad)));
  }

  // 4. Folding equivalence.
  {
    std::size_t neurons = 0, sums = 0, bad = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      if (!model.layers[l].thresholded()) continue;
      const auto& bn = run1.net.layers[l].bn;
      const auto n = static_cast<long>(model.layers[l].inputs());
      for (std::size_t j = 0; j < model.layers[l].outputs(); ++j) {
        const auto e = static_cast<Eigen::Index>(j);
        const double inv_std = 1.0 / std::sqrt(bn.var(e) + bn.eps);
        const std::int32_t t = (*model.layers[l].thresholds)[j];
        for (long z = -n; z <= n; z += 2) {
          const bool direct = (static_cast<double>(z) - bn.mean(e)) * inv_std + bn.beta(e) >= 0.0;
          bad += (z >= t) != direct;
          ++sums;
        }
        ++neurons;
      }
    }
    report(4, bad == 0, "folding equivalence",
           fmt("%.0f hidden neurons, %.0f sums checked, %.0f mismatches", static_cast<double>(neurons),
               static_cast<double>(sums), static_cast<double>(bad)));
  }

  // 5. Table 1 reproduction.
  {
    const auto rows = hw::reference_latency_rows();
    const auto shapes = hw::paper_shapes();
    bool ok = true;
    std::string detail;
    try {
      const auto fit = hw::calibrate(rows, shapes);
      const auto cfgs = hw::reference_configs(fit.overheads);
      const auto swept = hw::sweep(hw::blank_model(shapes), BitVector(784), cfgs);
      double worst_latency = 0, worst_speedup = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        worst_latency = std::max(worst_latency, std::abs(swept[k].latency_ns - rows[k].latency_ns) / rows[k].latency_ns);
        worst_speedup = std::max(worst_speedup, std::abs(swept[k].speedup - rows[k].speedup) / rows[k].speedup);
      }
      bool gap_ok = true;
      for (const auto& b : swept) {
        for (const auto& l : swept) {
          if (b.memory == hw::MemoryStyle::kBram && l.memory == hw::MemoryStyle::kLut && b.parallelism == l.parallelism) {
            gap_ok = gap_ok && b.latency_ns - l.latency_ns == cfgs.front().clock_period_ns;
          }
        }
      }
      ok = worst_latency <= 0.02 && worst_speedup <= 0.02 && gap_ok;
      detail = "fit g_group=" + std::to_string(fit.overheads.g_group) + " c_fixed=" +
               std::to_string(fit.overheads.c_fixed) + fmt(" t0=%.1f ns; worst latency error %.2f%%, worst speedup error %.2f%%",
                                                            fit.overheads.t0_ns, worst_latency * 100, worst_speedup * 100) +
               (gap_ok ? "; LUT-BRAM gap = 1 clock" : "; LUT-BRAM gap wrong");
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    report(5, ok, "latency table reproduction", detail);
  }

  // 6. Co-simulation.
  {
    std::vector<BitVector> inputs;
    for (const auto& img : suite.images) inputs.push_back(mnist::binarize_image(img));
    std::size_t comparisons = 0, bad = 0;
    for (std::size_t p : hw::kSupportedParallelism) {
      for (auto m : {hw::MemoryStyle::kBram, hw::MemoryStyle::kLut}) {
        hw::HwConfig hc;
        hc.parallelism = p;
        hc.memory = m;
        const auto rep = hw::cosim_check(model, inputs, hc);
        comparisons += rep.samples;
        bad += rep.mismatches.size();
      }
    }
    report(6, comparisons == 1400 && bad == 0, "co-simulation",
           fmt("%.0f comparisons, %.0f mismatches", static_cast<double>(comparisons), static_cast<double>(bad)));
  }

  // 7. Format fidelity.
  {
    Rng rng(77);
    std::size_t payloads = 0, bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t rows = 1 + rng.below(16), cols = 1 + rng.below(300);
      BitMatrix w(rows, cols);
      for (std::size_t j = 0; j < rows; ++j) {
        for (std::size_t i = 0; i < cols; ++i) w.set(j, i, rng.coin());
      }
      std::vector<std::int32_t> t(rows);
      for (auto& v : t) v = static_cast<std::int32_t>(rng.below(2048)) - 1024;
      BitVector img(784);
      for (std::size_t i = 0; i < 784; ++i) img.set(i, rng.coin());

      const fs::path dir = work / "mem";
      fs::create_directories(dir);
      mem::write_weights(w, dir / "w.mem");
      mem::write_thresholds(t, dir / "t.mem");
      mem::write_image(img, dir / "i.mem");
      const BitMatrix w2 = mem::read_weights(dir / "w.mem");
      bool same_w = w2.rows() == rows && w2.cols() == cols;
      for (std::size_t j = 0; same_w && j < rows; ++j) same_w = w2.row(j) == w.row(j);
      bad += !same_w;
      bad += mem::read_thresholds(dir / "t.mem") != t;
      bad += !(mem::read_image(dir / "i.mem") == img);
      payloads += 3;
    }
    // Two's complement oracle: value mod 2^11, printed MSB first.
    std::size_t tc_bad = 0;
    for (std::int32_t v = -1024; v <= 1023; ++v) {
      const std::uint32_t word = static_cast<std::uint32_t>(v + 2048) % 2048;
      std::string expect;
      for (int b = 10; b >= 0; --b) expect.push_back(((word >> b) & 1U) ? '1' : '0');
      tc_bad += mem::threshold_to_bits(v) != expect;
    }
    bool golden_ok = false;
    try {
      const FoldedModel g = mem::load_folded_model(golden_dir);
      const fs::path out = work / "golden";
      mem::save_folded_model(g, out);
      golden_ok = true;
      for (const char* f : {"model.txt", "layer0_weights.mem", "layer0_thresholds.mem", "layer1_weights.mem"}) {
        golden_ok = golden_ok && slurp(out / f) == slurp(fs::path(golden_dir) / f);
      }
      golden_ok = golden_ok && mem::read_thresholds(fs::path(golden_dir) / "thresholds_mixed.mem") ==
                                   std::vector<std::int32_t>{37, -1, -1024, 1023};
    } catch (const std::exception&) {
      golden_ok = false;
    }
    report(7, bad == 0 && tc_bad == 0 && golden_ok, "format fidelity",
           fmt("%.0f random payloads, %.0f round-trip failures; 2048 threshold words, %.0f mismatches", static_cast<double>(payloads),
               static_cast<double>(bad), static_cast<double>(tc_bad)) +
               (golden_ok ? "; golden files match" : "; golden files differ"));
  }

  // 8. Gradient correctness.
  {
    std::size_t ok = 0, total = 0;
    for (std::uint64_t b = 0; b < 5; ++b) {
      const auto [o, t] = gradient_agreement(100 + b);
      ok += o;
      total += t;
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(total);
    report(8, frac >= 0.99, "gradient correctness",
           fmt("%.0f/%.0f parameter gradients within 1e-3 (%.2f%%, need >= 99%%)", static_cast<double>(ok),
               static_cast<double>(total), frac * 100));
  }

  // 9. Determinism.
  {
    const train::TrainResult run2 = train::train(cfg, train_set, test_set);
    train::save_checkpoint(run1.net, {cfg.seed, cfg.epochs}, work / "ckpt1");
    train::save_checkpoint(run2.net, {cfg.seed, cfg.epochs}, work / "ckpt2");
    const bool ckpt_same = same_directory_bytes(work / "ckpt1", work / "ckpt2");
    const auto cfgs = hw::reference_configs();
    const BitVector first = mnist::binarize_image(suite.images.front());
    const std::string a = hw::render_csv(hw::sweep(model, first, cfgs)) + hw::render_text(hw::sweep(model, first, cfgs));
    const std::string b = hw::render_csv(hw::sweep(model, first, cfgs)) + hw::render_text(hw::sweep(model, first, cfgs));
    report(9, ckpt_same && a == b, "determinism",
           std::string(ckpt_same ? "checkpoints byte-identical" : "checkpoints differ") +
               (a == b ? "; sweep reports byte-identical" : "; sweep reports differ"));
  }

  // 10. Performance.
  {
    std::vector<BitVector> images;
    for (const auto& img : test_set.images) images.push_back(mnist::binarize_image(img));
    std::size_t sink = 0;
    auto time_all = [&](auto&& fn) {
      for (std::size_t k = 0; k < 200; ++k) sink += fn(model, images[k]).predicted;  // warm-up
      double best = 1e30;
      for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = Clock::now();
        for (const auto& x : images) sink += fn(model, x).predicted;
        best = std::min(best, seconds_since(t0));
      }
      return best;
    };
    const double packed = time_all([](const FoldedModel& m, const BitVector& x) { return infer(m, x); });
    const double serial = time_all([](const FoldedModel& m, const BitVector& x) { return infer_bit_serial(m, x); });
    report(10, serial / packed >= 8.0, "performance",
           fmt("10000 images: packed %.3f s, bit-serial %.3f s, speedup %.1fx (>= 8x)", packed, serial, serial / packed) +
               (sink == 1 ? " " : ""));
  }

  fs::remove_all(work);
  std::printf("acceptance: %d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
