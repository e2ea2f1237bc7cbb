#include "bnn/hwsim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "bnn/error.hpp"

namespace bnn::hw {

const char* to_string(FsmState s) {
  switch (s) {
    case FsmState::kIdle: return "IDLE";
    case FsmState::kLayer1: return "LAYER1";
    case FsmState::kLayer2: return "LAYER2";
    case FsmState::kLayer3: return "LAYER3";
    case FsmState::kArgmax: return "ARGMAX";
    case FsmState::kDone: return "DONE";
  }
  return "?";
}

const char* to_string(MemoryStyle m) { return m == MemoryStyle::kBram ? "BRAM" : "LUT"; }

std::optional<MemoryStyle> parse_memory_style(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "bram") return MemoryStyle::kBram;
  if (lower == "lut") return MemoryStyle::kLut;
  return std::nullopt;
}

void HwConfig::validate() const {
  if (std::find(kSupportedParallelism.begin(), kSupportedParallelism.end(), parallelism) ==
      kSupportedParallelism.end()) {
    throw ValueError("unsupported parallelism " + std::to_string(parallelism) +
                     " (supported: 1, 4, 8, 16, 32, 64, 128)");
  }
  if (!(clock_period_ns > 0.0) || !std::isfinite(clock_period_ns)) {
    throw ValueError("clock period must be positive");
  }
  if (overheads.g_group < 0 || overheads.c_fixed < 0 || !(overheads.t0_ns >= 0.0)) {
    throw ValueError("overhead constants must be non-negative");
  }
}

std::vector<LayerShape> shapes_of(const FoldedModel& model) {
  std::vector<LayerShape> out;
  for (const auto& l : model.layers) out.push_back({l.inputs(), l.outputs()});
  return out;
}

std::vector<LayerShape> paper_shapes() { return {{784, 128}, {128, 64}, {64, 10}}; }

namespace {

std::int64_t groups(std::size_t neurons, std::size_t p) {
  return static_cast<std::int64_t>((neurons + p - 1) / p);
}

FsmState layer_state(std::size_t l) {
  return static_cast<FsmState>(static_cast<std::size_t>(FsmState::kLayer1) + l);
}

// Register-level state of the accelerator. tick() advances exactly one clock.
class Accelerator {
 public:
  Accelerator(const FoldedModel& model, const BitVector& input, const HwConfig& cfg)
      : model_(model), cfg_(cfg), activations_(input), lanes_(cfg.parallelism, 0) {
    const std::size_t outputs = model.output_size();
    const auto reserved = static_cast<std::int64_t>(outputs) + 1;  // argmax scan + done
    if (cfg.overheads.c_fixed < reserved) {
      throw ValueError("c_fixed must be at least " + std::to_string(reserved) +
                       " (argmax scan plus done cycle) for this model");
    }
    idle_remaining_ = cfg.overheads.c_fixed - reserved + (cfg.memory == MemoryStyle::kBram ? 1 : 0);
    state_ = idle_remaining_ > 0 ? FsmState::kIdle : FsmState::kLayer1;
    logits_.assign(outputs, 0);
  }

  bool halted() const { return halted_; }
  const std::array<std::int64_t, kFsmStates>& stage_cycles() const { return stage_cycles_; }
  const std::vector<std::int64_t>& logits() const { return logits_; }
  std::size_t best() const { return best_; }
  std::vector<BitVector>& hidden() { return hidden_; }

  void tick() {
    ++stage_cycles_[static_cast<std::size_t>(state_)];
    switch (state_) {
      case FsmState::kIdle:
        if (--idle_remaining_ == 0) state_ = FsmState::kLayer1;
        break;
      case FsmState::kLayer1:
      case FsmState::kLayer2:
      case FsmState::kLayer3:
        layer_tick();
        break;
      case FsmState::kArgmax:
        // Replace only on strictly greater: ties keep the earlier class.
        if (scan_ > 0 && logits_[scan_] > logits_[best_]) best_ = scan_;
        if (++scan_ == logits_.size()) state_ = FsmState::kDone;
        break;
      case FsmState::kDone:
        halted_ = true;
        break;
    }
  }

 private:
  const FoldedLayer& layer() const { return model_.layers[layer_]; }

  void layer_tick() {
    const FoldedLayer& L = layer();
    const std::size_t p = cfg_.parallelism;
    if (in_overhead_ == 0) {
      // One input bit per lane per cycle.
      const bool x = activations_.get(bit_);
      for (std::size_t lane = 0; lane < p; ++lane) {
        const std::size_t neuron = group_ * p + lane;
        if (neuron >= L.outputs()) break;
        if (L.weights.get(neuron, bit_) == x) ++lanes_[lane];
      }
      if (++bit_ < L.inputs()) return;
      if (cfg_.overheads.g_group == 0) {
        writeback();
        next_group();
      } else {
        in_overhead_ = cfg_.overheads.g_group;
      }
      return;
    }
    if (in_overhead_ == cfg_.overheads.g_group) writeback();
    if (--in_overhead_ == 0) next_group();
  }

  // z = 2 * matches - n, then threshold (hidden) or latch the raw sum (output).
  void writeback() {
    const FoldedLayer& L = layer();
    const std::size_t p = cfg_.parallelism;
    if (L.thresholded() && !next_) next_.emplace(L.outputs());
    for (std::size_t lane = 0; lane < p; ++lane) {
      const std::size_t neuron = group_ * p + lane;
      if (neuron >= L.outputs()) break;
      const std::int64_t z = 2 * lanes_[lane] - static_cast<std::int64_t>(L.inputs());
      if (L.thresholded()) {
        next_->set(neuron, z >= (*L.thresholds)[neuron]);
      } else {
        logits_[neuron] = z;
      }
    }
  }

  void next_group() {
    std::fill(lanes_.begin(), lanes_.end(), 0);
    bit_ = 0;
    ++group_;
    const FoldedLayer& L = layer();
    if (group_ < static_cast<std::size_t>(groups(L.outputs(), cfg_.parallelism))) return;
    group_ = 0;
    if (L.thresholded()) {
      hidden_.push_back(*next_);
      activations_ = std::move(*next_);
      next_.reset();
    }
    ++layer_;
    state_ = layer_ < model_.layers.size() ? layer_state(layer_) : FsmState::kArgmax;
  }

  const FoldedModel& model_;
  const HwConfig& cfg_;
  FsmState state_ = FsmState::kIdle;
  bool halted_ = false;
  std::array<std::int64_t, kFsmStates> stage_cycles_{};

  std::int64_t idle_remaining_ = 0;

  std::size_t layer_ = 0;
  std::size_t group_ = 0;
  std::size_t bit_ = 0;
  std::int64_t in_overhead_ = 0;
  BitVector activations_;
  std::optional<BitVector> next_;
  std::vector<std::int64_t> lanes_;
  std::vector<BitVector> hidden_;

  std::vector<std::int64_t> logits_;
  std::size_t scan_ = 0;
  std::size_t best_ = 0;
};

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

CycleReport simulate(const FoldedModel& model, const BitVector& input, const HwConfig& cfg) {
  cfg.validate();
  model.validate();
  if (model.layers.size() > 3) throw ValueError("the accelerator FSM supports at most three layers");
  if (input.size() != model.input_size()) {
    throw DimensionError("simulate input length", model.input_size(), input.size());
  }

  Accelerator acc(model, input, cfg);
  // Generous bound so a broken transition cannot spin forever.
  const std::int64_t limit = 4 * expected_cycles(shapes_of(model), cfg) + 64;
  std::int64_t cycles = 0;
  while (!acc.halted()) {
    acc.tick();
    if (++cycles > limit) throw Error("simulate: FSM did not reach DONE");
  }

  CycleReport report;
  report.stage_cycles = acc.stage_cycles();
  for (auto c : report.stage_cycles) report.total_cycles += c;
  report.latency_ns = static_cast<double>(report.total_cycles) * cfg.clock_period_ns + cfg.overheads.t0_ns;
  report.functional_result.logits = acc.logits();
  report.functional_result.predicted = acc.best();
  report.hidden = std::move(acc.hidden());
  return report;
}

std::int64_t expected_cycles(std::span<const LayerShape> shapes, const HwConfig& cfg) {
  std::int64_t total = 0;
  for (const auto& s : shapes) {
    total += groups(s.neurons, cfg.parallelism) *
             (static_cast<std::int64_t>(s.inputs) + cfg.overheads.g_group);
  }
  total += cfg.overheads.c_fixed;
  if (cfg.memory == MemoryStyle::kBram) ++total;
  return total;
}

double expected_latency_ns(std::span<const LayerShape> shapes, const HwConfig& cfg) {
  return static_cast<double>(expected_cycles(shapes, cfg)) * cfg.clock_period_ns + cfg.overheads.t0_ns;
}

FoldedModel blank_model(std::span<const LayerShape> shapes) {
  FoldedModel model;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    FoldedLayer layer;
    layer.weights = BitMatrix(shapes[l].neurons, shapes[l].inputs);
    if (l + 1 < shapes.size()) layer.thresholds = std::vector<std::int32_t>(shapes[l].neurons, 0);
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

std::vector<LatencyRow> reference_latency_rows() {
  using M = MemoryStyle;
  return {
      {1, M::kBram, 1096045, 1.00},  {1, M::kLut, 1096035, 1.00},   {4, M::kBram, 274465, 4.00},
      {4, M::kLut, 274455, 4.00},    {8, M::kBram, 137645, 7.96},   {8, M::kLut, 137635, 7.96},
      {16, M::kBram, 68905, 15.90},  {16, M::kLut, 68895, 15.90},   {32, M::kBram, 34865, 31.43},
      {32, M::kLut, 34855, 31.45},   {64, M::kBram, 17845, 61.42},  {64, M::kLut, 17835, 61.45},
      {128, M::kLut, 9865, 111.10},
  };
}

CalibrationResult calibrate(std::span<const LatencyRow> rows, std::span<const LayerShape> shapes,
                            double clock_period_ns, double tolerance) {
  if (rows.size() < 3) {
    throw ValueError("calibrate: need at least 3 rows to fit 3 constants, got " +
                     std::to_string(rows.size()));
  }
  if (!(clock_period_ns > 0.0)) throw ValueError("calibrate: clock period must be positive");
  for (const auto& r : rows) {
    if (!(r.latency_ns > 0.0)) throw ValueError("calibrate: latencies must be positive");
  }

  if (shapes.empty()) throw ValueError("calibrate: no layer shapes");
  constexpr std::int64_t kMaxGroupOverhead = 64;
  const auto min_fixed = static_cast<std::int64_t>(shapes.back().neurons) + 1;
  CalibrationResult best;
  best.max_abs_residual = std::numeric_limits<double>::infinity();
  double best_total = std::numeric_limits<double>::infinity();
  bool best_feasible = false;

  for (std::int64_t g = 0; g <= kMaxGroupOverhead; ++g) {
    // Latency not yet accounted for by the datapath, per row.
    std::vector<double> offsets;
    for (const auto& r : rows) {
      HwConfig cfg;
      cfg.parallelism = r.parallelism;
      cfg.memory = r.memory;
      cfg.clock_period_ns = clock_period_ns;
      cfg.overheads = {g, 0, 0.0};
      offsets.push_back(r.latency_ns - static_cast<double>(expected_cycles(shapes, cfg)) * clock_period_ns);
    }
    std::vector<double> sorted = offsets;
    std::sort(sorted.begin(), sorted.end());
    const double offset = sorted[(sorted.size() - 1) / 2];

    // The walked FSM needs c_fixed >= N_out + 1 (argmax scan plus done).
    Overheads oh;
    oh.g_group = g;
    oh.c_fixed = static_cast<std::int64_t>(std::floor(std::max(offset, 0.0) / clock_period_ns));
    oh.t0_ns = std::max(offset, 0.0) - static_cast<double>(oh.c_fixed) * clock_period_ns;
    if (oh.c_fixed < min_fixed) {
      oh.c_fixed = min_fixed;
      oh.t0_ns = 0.0;
    }

    CalibrationResult candidate;
    candidate.overheads = oh;
    for (const auto& r : rows) {
      HwConfig cfg;
      cfg.parallelism = r.parallelism;
      cfg.memory = r.memory;
      cfg.clock_period_ns = clock_period_ns;
      cfg.overheads = oh;
      const double rel = (expected_latency_ns(shapes, cfg) - r.latency_ns) / r.latency_ns;
      candidate.relative_residuals.push_back(rel);
      candidate.max_abs_residual = std::max(candidate.max_abs_residual, std::abs(rel));
    }
    double total = 0.0;
    for (double r : candidate.relative_residuals) total += std::abs(r);
    const bool feasible = candidate.max_abs_residual <= tolerance;
    const bool better =
        feasible != best_feasible
            ? feasible
            : (feasible ? std::pair{total, candidate.max_abs_residual} < std::pair{best_total, best.max_abs_residual}
                        : candidate.max_abs_residual < best.max_abs_residual);
    if (better) {
      best = std::move(candidate);
      best_total = total;
      best_feasible = feasible;
    }
  }

  if (best.max_abs_residual > tolerance) {
    std::ostringstream os;
    os << "calibration failed: worst relative residual " << best.max_abs_residual << " exceeds "
       << tolerance << "; residuals:";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      os << " P" << rows[k].parallelism << '/' << to_string(rows[k].memory) << '='
         << best.relative_residuals[k];
    }
    throw CalibrationError(os.str());
  }
  return best;
}

std::vector<SweepRow> sweep(const FoldedModel& model, const BitVector& input,
                            std::span<const HwConfig> cfgs) {
  std::vector<SweepRow> rows;
  for (const HwConfig& cfg : cfgs) {
    const CycleReport rep = simulate(model, input, cfg);
    rows.push_back({cfg.parallelism, cfg.memory, rep.total_cycles, rep.latency_ns, 1.0});
  }
  for (auto& row : rows) {
    const SweepRow* base = nullptr;
    for (const auto& cand : rows) {
      if (cand.memory == row.memory && (base == nullptr || cand.parallelism < base->parallelism)) {
        base = &cand;
      }
    }
    row.speedup = base->latency_ns / row.latency_ns;
  }
  return rows;
}

std::vector<HwConfig> reference_configs(const Overheads& overheads, double clock_period_ns) {
  std::vector<HwConfig> cfgs;
  for (const auto& r : reference_latency_rows()) {
    HwConfig cfg;
    cfg.parallelism = r.parallelism;
    cfg.memory = r.memory;
    cfg.clock_period_ns = clock_period_ns;
    cfg.overheads = overheads;
    cfgs.push_back(cfg);
  }
  return cfgs;
}

std::string render_text(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << std::right << std::setw(11) << "Parallelism" << std::setw(8) << "Memory" << std::setw(12)
     << "Cycles" << std::setw(16) << "Latency (ns)" << std::setw(10) << "Speedup" << '\n';
  for (const auto& r : rows) {
    std::ostringstream speed;
    speed << std::fixed << std::setprecision(2) << r.speedup;
    os << std::setw(11) << r.parallelism << std::setw(8) << to_string(r.memory) << std::setw(12)
       << r.cycles << std::setw(16) << format_number(r.latency_ns) << std::setw(10) << speed.str()
       << '\n';
  }
  return os.str();
}

std::string render_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << "parallelism,memory_style,cycles,latency_ns,speedup\n";
  for (const auto& r : rows) {
    os << r.parallelism << ',' << to_string(r.memory) << ',' << r.cycles << ','
       << format_number(r.latency_ns) << ',' << format_number(r.speedup) << '\n';
  }
  return os.str();
}

CosimReport cosim_check(const FoldedModel& model, std::span<const BitVector> inputs, const HwConfig& cfg) {
  CosimReport report;
  report.samples = inputs.size();
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const InferenceTrace ref = infer_trace(model, inputs[n]);
    const CycleReport sim = simulate(model, inputs[n], cfg);
    if (sim.functional_result == ref.result && sim.hidden == ref.hidden) {
      ++report.agreements;
      continue;
    }
    CosimMismatch m;
    m.sample = n;
    m.engine_prediction = ref.result.predicted;
    m.sim_prediction = sim.functional_result.predicted;
    m.stage = FsmState::kArgmax;
    std::size_t l = 0;
    for (; l < ref.hidden.size(); ++l) {
      if (l >= sim.hidden.size() || !(sim.hidden[l] == ref.hidden[l])) break;
    }
    if (l < ref.hidden.size()) {
      m.stage = layer_state(l);
    } else if (sim.functional_result.logits != ref.result.logits) {
      m.stage = layer_state(model.layers.size() - 1);
    }
    report.mismatches.push_back(m);
  }
  return report;
}

CosimReport cosim_check(const FoldedModel& model, const mnist::Dataset& data, const HwConfig& cfg) {
  std::vector<BitVector> inputs;
  inputs.reserve(data.size());
  for (const auto& img : data.images) inputs.push_back(mnist::binarize_image(img));
  return cosim_check(model, inputs, cfg);
}

}  // namespace bnn::hw
