#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "bnn/engine.hpp"
#include "bnn/error.hpp"
#include "bnn/folding.hpp"
#include "bnn/hwsim.hpp"
#include "bnn/memfmt.hpp"
#include "bnn/mnist.hpp"
#include "bnn/trainer.hpp"

namespace bnn::cli {

namespace fs = std::filesystem;

namespace {

// Raised when a check subcommand (cosim) finds disagreements.
class CheckFailed : public Error {
 public:
  using Error::Error;
};

struct HwFlags {
  std::size_t parallelism = 1;
  std::string memory = "bram";
  double clock_ns = 10.0;
  std::int64_t g_group = hw::Overheads{}.g_group;
  std::int64_t c_fixed = hw::Overheads{}.c_fixed;
  double t0_ns = hw::Overheads{}.t0_ns;

  hw::Overheads overheads() const { return {g_group, c_fixed, t0_ns}; }

  hw::HwConfig config() const {
    hw::HwConfig cfg;
    cfg.parallelism = parallelism;
    const auto style = hw::parse_memory_style(memory);
    if (!style) throw ValueError("memory style must be 'bram' or 'lut', got '" + memory + "'");
    cfg.memory = *style;
    cfg.clock_period_ns = clock_ns;
    cfg.overheads = overheads();
    cfg.validate();
    return cfg;
  }
};

void add_overhead_flags(CLI::App* sub, HwFlags& hw) {
  sub->add_option("--clock-ns", hw.clock_ns, "Clock period in ns")->capture_default_str();
  sub->add_option("--g-group", hw.g_group, "Overhead cycles per neuron group")->capture_default_str();
  sub->add_option("--c-fixed", hw.c_fixed, "Fixed control cycles (start, argmax, done)")
      ->capture_default_str();
  sub->add_option("--t0-ns", hw.t0_ns, "Constant latency offset in ns")->capture_default_str();
}

void add_hw_flags(CLI::App* sub, HwFlags& hw) {
  sub->add_option("-p,--parallelism", hw.parallelism, "Neurons processed concurrently")
      ->capture_default_str();
  sub->add_option("--memory", hw.memory, "Weight memory style: bram | lut")->capture_default_str();
  add_overhead_flags(sub, hw);
}

void attach_config(CLI::App* sub) {
  sub->add_option("--config", "Read options from a key = value file (command-line flags win)");
}

bool given_on_command_line(const CLI::Option* opt, const std::vector<std::string>& args) {
  for (const auto& a : args) {
    for (const auto& l : opt->get_lnames()) {
      if (a == "--" + l || a.rfind("--" + l + "=", 0) == 0) return true;
    }
    for (const auto& s : opt->get_snames()) {
      if (a.rfind("-" + s, 0) == 0) return true;
    }
  }
  return false;
}

// Appends `--key=value` for every config file entry not already given on the
// command line, so that flags take precedence over the file.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  std::size_t sub_pos = 0;
  const CLI::App* sub = nullptr;
  for (std::size_t k = 1; k < args.size() && sub == nullptr; ++k) {
    sub = app.get_subcommand_no_throw(args[k]);
    sub_pos = k;
  }
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t k = sub_pos + 1; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) path = args[k].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  const auto items = CLI::ConfigINI().from_config(in);
  std::vector<std::string> out = args;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub->get_name())) {
      throw CLI::ConfigError::Extras(item.fullname());
    }
    const CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr || item.name == "config") throw CLI::ConfigError::Extras(item.name);
    if (given_on_command_line(opt, args)) continue;
    for (const auto& v : item.inputs) out.push_back("--" + item.name + "=" + v);
  }
  return out;
}

void echo_config(const CLI::App* sub, std::ostream& err) {
  std::istringstream lines(sub->config_to_str(true, false));
  err << "# " << sub->get_name() << " resolved config\n";
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) err << "#   " << line << '\n';
  }
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void print_logits(std::ostream& out, const InferenceResult& r) {
  out << "predicted " << r.predicted << '\n' << "logits";
  for (auto z : r.logits) out << ' ' << z;
  out << '\n';
}

mnist::Dataset load_test(const std::string& dir) { return mnist::load_mnist_dir(dir, mnist::Split::kTest); }

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string data = "data";
  std::string out;
  train::TrainConfig cfg;
};

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  f.cfg.validate();
  const auto train_set = mnist::load_mnist_dir(f.data, mnist::Split::kTrain);
  const auto test_set = load_test(f.data);
  err << "# loaded " << train_set.size() << " training and " << test_set.size() << " test images\n";
  out << "epoch,train_loss,test_accuracy\n";
  const auto result = train::train(f.cfg, train_set, test_set, [&](const train::EpochRecord& r) {
    out << r.epoch << ',' << fixed(r.train_loss, 6) << ',' << fixed(r.test_accuracy, 4) << '\n';
    out.flush();
  });
  train::save_checkpoint(result.net, {f.cfg.seed, f.cfg.epochs}, f.out);
  err << "# checkpoint written to " << f.out << '\n';
  return kOk;
}

struct EvalFlags {
  std::string data = "data";
  std::string model;
};

int cmd_eval(const EvalFlags& f, std::ostream& out, std::ostream&) {
  const auto net = train::load_checkpoint(f.model);
  const auto test = load_test(f.data);
  const double float_acc = train::evaluate_float(net, test);
  const FoldedModel folded = fold_model(net);
  const Classification full = classify_dataset(folded, test);
  const auto suite_idx = mnist::select_verification_set(test);
  const Classification suite = classify_dataset(folded, mnist::subset(test, suite_idx));

  out << "float_accuracy " << fixed(float_acc, 4) << '\n';
  out << "integer_accuracy " << fixed(full.accuracy, 4) << '\n';
  out << "suite_correct " << suite.correct << '/' << suite.total << '\n';
  out << "confusion (rows = true digit, columns = predicted)\n";
  for (std::size_t t = 0; t < mnist::kClasses; ++t) {
    out << t << ':';
    for (std::size_t p = 0; p < mnist::kClasses; ++p) out << std::setw(6) << full.confusion[t][p];
    out << '\n';
  }
  return kOk;
}

struct FoldFlags {
  std::string model;
  std::string out;
};

int cmd_fold(const FoldFlags& f, std::ostream& out, std::ostream& err) {
  const auto net = train::load_checkpoint(f.model);
  FoldReport report;
  const FoldedModel folded = fold_model(net, &report);
  mem::save_folded_model(folded, f.out);
  for (std::size_t l = 0; l < folded.layers.size(); ++l) {
    const auto& layer = folded.layers[l];
    out << "layer " << l << ' ' << layer.inputs() << "->" << layer.outputs();
    if (layer.thresholded()) {
      const auto [lo, hi] = std::minmax_element(layer.thresholds->begin(), layer.thresholds->end());
      out << " thresholds " << layer.thresholds->size() << " range [" << *lo << ", " << *hi << "]";
    } else {
      out << " raw sums";
    }
    out << '\n';
  }
  out << "clamped_thresholds " << report.clamped.size() << '\n';
  for (const auto& [l, j] : report.clamped) err << "# warning: layer " << l << " neuron " << j << " clamped\n";
  return kOk;
}

struct ExportFlags {
  std::string data = "data";
  std::string out;
  std::vector<std::size_t> indices;
};

int cmd_export_mem(const ExportFlags& f, std::ostream& out, std::ostream&) {
  const auto test = load_test(f.data);
  std::vector<std::size_t> indices = f.indices;
  if (indices.empty()) indices = mnist::select_verification_set(test);
  std::error_code ec;
  fs::create_directories(f.out, ec);
  if (ec) throw IoError("cannot create " + f.out + ": " + ec.message());

  std::ostringstream listing;
  listing << "file,test_index,label\n";
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t idx = indices[k];
    if (idx >= test.size()) throw ValueError("test index " + std::to_string(idx) + " out of range");
    std::ostringstream name;
    name << "image_" << std::setw(3) << std::setfill('0') << k << ".mem";
    mem::write_image(mnist::binarize_image(test.images[idx]), fs::path(f.out) / name.str());
    listing << name.str() << ',' << idx << ',' << int{test.labels[idx]} << '\n';
  }
  mem::write_text(fs::path(f.out) / "images.csv", listing.str());
  out << "exported " << indices.size() << " images to " << f.out << '\n';
  return kOk;
}

struct ImportFlags {
  std::string kind = "image";
  std::string in;
  std::string out;
};

int cmd_import_mem(const ImportFlags& f, std::ostream& out, std::ostream&) {
  const std::string text = mem::read_text(f.in);
  std::string canonical;
  if (f.kind == "image") {
    const BitVector img = mem::decode_image(text);
    out << "image bits " << img.size() << " set " << img.popcount() << '\n';
    for (std::size_t r = 0; r < mnist::kImageSide; ++r) {
      for (std::size_t c = 0; c < mnist::kImageSide; ++c) out << (img.get(r * mnist::kImageSide + c) ? '#' : '.');
      out << '\n';
    }
    canonical = mem::encode_image(img);
  } else if (f.kind == "weights") {
    const BitMatrix w = mem::decode_weights(text);
    out << "weights rows " << w.rows() << " cols " << w.cols() << '\n';
    canonical = mem::encode_weights(w);
  } else if (f.kind == "thresholds") {
    const auto t = mem::decode_thresholds(text);
    out << "thresholds " << t.size() << '\n';
    for (std::size_t j = 0; j < t.size(); ++j) out << j << ' ' << t[j] << '\n';
    canonical = mem::encode_thresholds(t);
  } else {
    throw CLI::ValidationError("--kind", "must be image, weights or thresholds");
  }
  if (!f.out.empty()) mem::write_text(f.out, canonical);
  return kOk;
}

struct InferFlags {
  std::string model;
  std::string image;
  std::string out;
};

int cmd_infer(const InferFlags& f, std::ostream& out, std::ostream&) {
  const FoldedModel model = mem::load_folded_model(f.model);
  const BitVector input = mem::read_image(f.image);
  const InferenceResult r = infer(model, input);
  std::ostringstream report;
  print_logits(report, r);
  out << report.str();
  if (!f.out.empty()) mem::write_text(f.out, report.str());
  return kOk;
}

struct SimFlags {
  std::string model;
  std::string image;
  std::string format = "text";
  std::string out;
  HwFlags hw;
};

std::pair<FoldedModel, BitVector> sim_inputs(const std::string& model_dir, const std::string& image) {
  FoldedModel model = model_dir.empty() ? hw::blank_model(hw::paper_shapes()) : mem::load_folded_model(model_dir);
  BitVector input = image.empty() ? BitVector(model.input_size()) : mem::read_image(image);
  return {std::move(model), std::move(input)};
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    mem::write_text(path, text);
  }
}

int cmd_simulate(const SimFlags& f, std::ostream& out, std::ostream&) {
  const hw::HwConfig cfg = f.hw.config();
  const auto [model, input] = sim_inputs(f.model, f.image);
  const hw::CycleReport rep = hw::simulate(model, input, cfg);
  std::ostringstream os;
  if (f.format == "csv") {
    os << "stage,cycles\n";
    for (std::size_t s = 0; s < hw::kFsmStates; ++s) {
      os << hw::to_string(static_cast<hw::FsmState>(s)) << ',' << rep.stage_cycles[s] << '\n';
    }
    os << "TOTAL," << rep.total_cycles << '\n';
  } else {
    os << "parallelism " << cfg.parallelism << " memory " << hw::to_string(cfg.memory) << '\n';
    for (std::size_t s = 0; s < hw::kFsmStates; ++s) {
      os << std::left << std::setw(8) << hw::to_string(static_cast<hw::FsmState>(s)) << std::right
         << std::setw(10) << rep.stage_cycles[s] << '\n';
    }
    os << "total_cycles " << rep.total_cycles << '\n';
    os << "latency_ns " << rep.latency_ns << '\n';
    print_logits(os, rep.functional_result);
  }
  emit(os.str(), f.out, out);
  return kOk;
}

int cmd_sweep(const SimFlags& f, std::ostream& out, std::ostream&) {
  const auto [model, input] = sim_inputs(f.model, f.image);
  const auto cfgs = hw::reference_configs(f.hw.overheads(), f.hw.clock_ns);
  const auto rows = hw::sweep(model, input, cfgs);
  emit(f.format == "csv" ? hw::render_csv(rows) : hw::render_text(rows), f.out, out);
  return kOk;
}

struct CalibrateFlags {
  double clock_ns = 10.0;
  double tolerance = 0.02;
};

int cmd_calibrate(const CalibrateFlags& f, std::ostream& out, std::ostream&) {
  const auto rows = hw::reference_latency_rows();
  const auto shapes = hw::paper_shapes();
  const auto fit = hw::calibrate(rows, shapes, f.clock_ns, f.tolerance);
  out << "g_group " << fit.overheads.g_group << '\n';
  out << "c_fixed " << fit.overheads.c_fixed << '\n';
  out << "t0_ns " << fit.overheads.t0_ns << '\n';
  out << "max_abs_residual " << fixed(fit.max_abs_residual * 100.0, 3) << "%\n";
  out << "parallelism,memory_style,measured_ns,model_ns,residual_pct\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double model_ns = rows[k].latency_ns * (1.0 + fit.relative_residuals[k]);
    out << rows[k].parallelism << ',' << hw::to_string(rows[k].memory) << ',' << fixed(rows[k].latency_ns, 0) << ','
        << std::llround(model_ns) << ',' << fixed(fit.relative_residuals[k] * 100.0, 3) << '\n';
  }
  return kOk;
}

struct CosimFlags {
  std::string model;
  std::string data = "data";
  bool all = false;
  HwFlags hw;
};

int cmd_cosim(const CosimFlags& f, std::ostream& out, std::ostream&) {
  const FoldedModel model = mem::load_folded_model(f.model);
  const auto test = load_test(f.data);
  const auto suite = mnist::subset(test, mnist::select_verification_set(test));

  std::vector<hw::HwConfig> cfgs;
  if (f.all) {
    for (std::size_t p : hw::kSupportedParallelism) {
      for (auto m : {hw::MemoryStyle::kBram, hw::MemoryStyle::kLut}) {
        hw::HwConfig cfg = f.hw.config();
        cfg.parallelism = p;
        cfg.memory = m;
        cfgs.push_back(cfg);
      }
    }
  } else {
    cfgs.push_back(f.hw.config());
  }
  std::size_t failures = 0;
  for (const auto& cfg : cfgs) {
    const hw::CosimReport rep = hw::cosim_check(model, suite, cfg);
    out << "P=" << cfg.parallelism << ' ' << hw::to_string(cfg.memory) << ' ' << rep.agreements << '/'
        << rep.samples << (rep.passed() ? " PASS" : " FAIL") << '\n';
    for (const auto& m : rep.mismatches) {
      out << "  mismatch sample " << m.sample << " stage " << hw::to_string(m.stage) << " engine "
          << m.engine_prediction << " sim " << m.sim_prediction << '\n';
    }
    failures += rep.mismatches.size();
  }
  if (failures > 0) throw CheckFailed(std::to_string(failures) + " co-simulation mismatches");
  return kOk;
}

struct BenchFlags {
  std::string model;
  std::string data = "data";
  std::size_t runs = 100;
  std::size_t warmup = 10;
};

struct Stats {
  double mean = 0, min = 0, max = 0, stddev = 0;
};

Stats summarize(const std::vector<double>& xs) {
  Stats s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

int cmd_bench(const BenchFlags& f, std::ostream& out, std::ostream&) {
  if (f.runs == 0) throw ValueError("--runs must be positive");
  const FoldedModel model = mem::load_folded_model(f.model);
  const auto test = load_test(f.data);
  std::vector<BitVector> images;
  for (std::size_t idx : mnist::select_verification_set(test)) images.push_back(mnist::binarize_image(test.images[idx]));

  using Clock = std::chrono::steady_clock;
  std::size_t sink = 0;
  auto time_runs = [&](auto&& fn) {
    std::vector<double> per_image_us;
    for (std::size_t r = 0; r < f.warmup + f.runs; ++r) {
      const auto t0 = Clock::now();
      for (const auto& img : images) sink += fn(model, img).predicted;
      const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
      if (r >= f.warmup) per_image_us.push_back(us / static_cast<double>(images.size()));
    }
    return summarize(per_image_us);
  };
  const Stats packed = time_runs([](const FoldedModel& m, const BitVector& x) { return infer(m, x); });
  const Stats serial = time_runs([](const FoldedModel& m, const BitVector& x) { return infer_bit_serial(m, x); });

  out << "kernel,runs,images_per_run,mean_us,min_us,max_us,stddev_us\n";
  auto row = [&](const char* name, const Stats& s) {
    out << name << ',' << f.runs << ',' << images.size() << ',' << fixed(s.mean, 3) << ',' << fixed(s.min, 3)
        << ',' << fixed(s.max, 3) << ',' << fixed(s.stddev, 3) << '\n';
  };
  row("packed", packed);
  row("bit_serial", serial);
  out << "speedup " << fixed(serial.mean / packed.mean, 2) << '\n';
  if (sink == 0xFFFFFFFF) out << '\n';  // keeps the timed calls observable
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binarized neural network toolkit: training, folding, .mem export, inference, "
               "and accelerator simulation",
               "bnn"};
  app.require_subcommand(1);

  TrainFlags train_f;
  auto* train = app.add_subcommand("train", "Quantization-aware training; writes a checkpoint directory");
  train->add_option("--data", train_f.data, "MNIST directory")->capture_default_str();
  train->add_option("--out", train_f.out, "Checkpoint directory")->required();
  train->add_option("--epochs", train_f.cfg.epochs)->capture_default_str();
  train->add_option("--batch-size", train_f.cfg.batch_size)->capture_default_str();
  train->add_option("--lr", train_f.cfg.lr0, "Initial learning rate")->capture_default_str();
  train->add_option("--decay", train_f.cfg.decay)->capture_default_str();
  train->add_option("--decay-steps", train_f.cfg.decay_steps)->capture_default_str();
  train->add_option("--seed", train_f.cfg.seed)->capture_default_str();
  train->add_option("--bn-eps", train_f.cfg.bn_eps)->capture_default_str();
  train->add_option("--bn-momentum", train_f.cfg.bn_momentum)->capture_default_str();
  attach_config(train);

  EvalFlags eval_f;
  auto* eval = app.add_subcommand("eval", "Float and folded-integer accuracy of a checkpoint");
  eval->add_option("--model", eval_f.model, "Checkpoint directory")->required();
  eval->add_option("--data", eval_f.data, "MNIST directory")->capture_default_str();
  attach_config(eval);

  FoldFlags fold_f;
  auto* fold = app.add_subcommand("fold", "Fold a checkpoint into binary weights and integer thresholds (.mem)");
  fold->add_option("--model", fold_f.model, "Checkpoint directory")->required();
  fold->add_option("--out", fold_f.out, "Folded model directory")->required();
  attach_config(fold);

  ExportFlags export_f;
  auto* exp = app.add_subcommand("export-mem", "Write binarized test images as .mem files");
  exp->add_option("--data", export_f.data, "MNIST directory")->capture_default_str();
  exp->add_option("--out", export_f.out, "Output directory")->required();
  exp->add_option("--index", export_f.indices, "Test-set indices (default: 10 per digit)");
  attach_config(exp);

  ImportFlags import_f;
  auto* imp = app.add_subcommand("import-mem", "Parse and validate a .mem file");
  imp->add_option("--kind", import_f.kind, "image | weights | thresholds")
      ->check(CLI::IsMember({"image", "weights", "thresholds"}))
      ->capture_default_str();
  imp->add_option("--in", import_f.in, ".mem file to read")->required();
  imp->add_option("--out", import_f.out, "Write the canonical re-encoding here");
  attach_config(imp);

  InferFlags infer_f;
  auto* inf = app.add_subcommand("infer", "Integer inference of one .mem image");
  inf->add_option("--model", infer_f.model, "Folded model directory")->required();
  inf->add_option("--image", infer_f.image, "Image .mem file")->required();
  inf->add_option("--out", infer_f.out, "Write the result here");
  attach_config(inf);

  SimFlags sim_f;
  auto* sim = app.add_subcommand("simulate", "Cycle-level accelerator simulation of one image");
  sim->add_option("--model", sim_f.model, "Folded model directory (default: blank 784-128-64-10)");
  sim->add_option("--image", sim_f.image, "Image .mem file (default: all zeros)");
  sim->add_option("--format", sim_f.format)->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  sim->add_option("--out", sim_f.out, "Write the report here instead of stdout");
  add_hw_flags(sim, sim_f.hw);
  attach_config(sim);

  SimFlags sweep_f;
  auto* swp = app.add_subcommand("sweep", "Latency/speedup table over the reference configurations");
  swp->add_option("--model", sweep_f.model, "Folded model directory (default: blank 784-128-64-10)");
  swp->add_option("--image", sweep_f.image, "Image .mem file (default: all zeros)");
  swp->add_option("--format", sweep_f.format)->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  swp->add_option("--out", sweep_f.out, "Write the report here instead of stdout");
  add_overhead_flags(swp, sweep_f.hw);
  attach_config(swp);

  CalibrateFlags cal_f;
  auto* cal = app.add_subcommand("calibrate", "Fit the overhead constants to the reference latencies");
  cal->add_option("--clock-ns", cal_f.clock_ns)->capture_default_str();
  cal->add_option("--tolerance", cal_f.tolerance, "Largest allowed relative residual")->capture_default_str();
  attach_config(cal);

  CosimFlags cosim_f;
  auto* cos = app.add_subcommand("cosim", "Compare simulator and engine on the 100-image suite");
  cos->add_option("--model", cosim_f.model, "Folded model directory")->required();
  cos->add_option("--data", cosim_f.data, "MNIST directory")->capture_default_str();
  cos->add_flag("--all", cosim_f.all, "Every supported parallelism and both memory styles");
  add_hw_flags(cos, cosim_f.hw);
  attach_config(cos);

  BenchFlags bench_f;
  auto* bench = app.add_subcommand("bench", "Per-image CPU inference latency statistics");
  bench->add_option("--model", bench_f.model, "Folded model directory")->required();
  bench->add_option("--data", bench_f.data, "MNIST directory")->capture_default_str();
  bench->add_option("--runs", bench_f.runs, "Timed runs")->capture_default_str();
  bench->add_option("--warmup", bench_f.warmup, "Untimed warm-up runs")->capture_default_str();
  attach_config(bench);

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(app, args);
  } catch (const IoError& e) {
    err << "bnn: error[io]: " << e.what() << '\n';
    return kIo;
  } catch (const CLI::ParseError& e) {
    err << "bnn: error[usage]: config: " << e.what() << '\n';
    return kUsage;
  }
  std::vector<const char*> argv;
  argv.reserve(expanded.size());
  for (const auto& a : expanded) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help surfaces here as well.
    if (e.get_exit_code() == 0) {
      const CLI::App* target = &app;
      for (const auto* sub : app.get_subcommands()) target = sub;
      out << target->help();
      return kOk;
    }
    err << "bnn: error[usage]: " << e.what() << '\n';
    return kUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  echo_config(chosen, err);

  try {
    if (chosen == train) return cmd_train(train_f, out, err);
    if (chosen == eval) return cmd_eval(eval_f, out, err);
    if (chosen == fold) return cmd_fold(fold_f, out, err);
    if (chosen == exp) return cmd_export_mem(export_f, out, err);
    if (chosen == imp) return cmd_import_mem(import_f, out, err);
    if (chosen == inf) return cmd_infer(infer_f, out, err);
    if (chosen == sim) return cmd_simulate(sim_f, out, err);
    if (chosen == swp) return cmd_sweep(sweep_f, out, err);
    if (chosen == cal) return cmd_calibrate(cal_f, out, err);
    if (chosen == cos) return cmd_cosim(cosim_f, out, err);
    if (chosen == bench) return cmd_bench(bench_f, out, err);
  } catch (const IoError& e) {
    err << "bnn: error[io]: " << e.what() << '\n';
    return kIo;
  } catch (const CalibrationError& e) {
    err << "bnn: error[calibration]: " << e.what() << '\n';
    return kCalibration;
  } catch (const CheckFailed& e) {
    err << "bnn: error[check]: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const Error& e) {
    err << "bnn: error[validation]: " << e.what() << '\n';
    return kValidation;
  } catch (const CLI::ValidationError& e) {
    err << "bnn: error[usage]: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "bnn: error[internal]: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace bnn::cli
