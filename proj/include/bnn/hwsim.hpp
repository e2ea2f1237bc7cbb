#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnn/bitcore.hpp"
#include "bnn/engine.hpp"
#include "bnn/folding.hpp"
#include "bnn/mnist.hpp"

// Cycle-level model of the five-stage FSM accelerator.
//
// Each layer is processed in ceil(N / P) groups of P neurons. A group spends
// one cycle per input bit (every lane XNORs one input bit against its own
// weight bit and bumps its match counter), then g_group cycles of
// threshold compare and write-back. After the last layer the ARGMAX stage
// scans the raw sums one per cycle, and DONE holds the result.
namespace bnn::hw {

enum class MemoryStyle { kBram, kLut };

enum class FsmState { kIdle, kLayer1, kLayer2, kLayer3, kArgmax, kDone };
inline constexpr std::size_t kFsmStates = 6;

const char* to_string(FsmState s);
const char* to_string(MemoryStyle m);
std::optional<MemoryStyle> parse_memory_style(std::string_view text);

inline constexpr std::array<std::size_t, 7> kSupportedParallelism{1, 4, 8, 16, 32, 64, 128};

// Fixed costs not explained by the bit-serial datapath. c_fixed covers the
// start handshake, the argmax scan and the done cycle, so it must be at least
// (output neurons + 1) when simulating.
struct Overheads {
  std::int64_t g_group = 2;
  std::int64_t c_fixed = 15;
  double t0_ns = 5.0;

  friend bool operator==(const Overheads&, const Overheads&) = default;
};

struct HwConfig {
  std::size_t parallelism = 1;
  MemoryStyle memory = MemoryStyle::kBram;
  double clock_period_ns = 10.0;
  Overheads overheads;

  // Throws ValueError on an unsupported parallelism or negative constants.
  void validate() const;
};

struct LayerShape {
  std::size_t inputs = 0;
  std::size_t neurons = 0;
};

std::vector<LayerShape> shapes_of(const FoldedModel& model);
std::vector<LayerShape> paper_shapes();  // 784->128->64->10

struct CycleReport {
  std::array<std::int64_t, kFsmStates> stage_cycles{};
  std::int64_t total_cycles = 0;
  double latency_ns = 0.0;
  double speedup_vs_p1 = 1.0;
  InferenceResult functional_result;
  std::vector<BitVector> hidden;  // activations written back by each hidden layer

  std::int64_t cycles(FsmState s) const { return stage_cycles[static_cast<std::size_t>(s)]; }
};

// Walks the FSM one clock at a time. The model may have one to three layers.
// Throws ValueError for invalid configs and DimensionError for shape errors.
CycleReport simulate(const FoldedModel& model, const BitVector& input, const HwConfig& cfg);

// sum_l ceil(N_l / P) * (I_l + g_group) + c_fixed (+1 for BRAM).
std::int64_t expected_cycles(std::span<const LayerShape> shapes, const HwConfig& cfg);
double expected_latency_ns(std::span<const LayerShape> shapes, const HwConfig& cfg);

// A model of the given shape with every weight bit and threshold zero.
FoldedModel blank_model(std::span<const LayerShape> shapes);

struct LatencyRow {
  std::size_t parallelism = 1;
  MemoryStyle memory = MemoryStyle::kBram;
  double latency_ns = 0.0;
  double speedup = 1.0;  // as reported alongside the latency
};

// Measured accelerator latencies (13 rows, 10 ns clock) for the 784-128-64-10
// network, used as the calibration target.
std::vector<LatencyRow> reference_latency_rows();

struct CalibrationResult {
  Overheads overheads;
  std::vector<double> relative_residuals;  // (model - measured) / measured, per row
  double max_abs_residual = 0.0;
};

// Fits (g_group, c_fixed, t0_ns). g_group is searched over 0..64. Among the
// candidates whose worst relative residual is within `tolerance`, the one with
// the smallest summed |residual| wins (ties: smaller worst residual); if none
// is within tolerance the smallest worst residual is reported. For each
// candidate the constant offset is the
// median of the per-row offsets, so a single outlier row cannot drag the
// others. c_fixed is held at or above (output neurons + 1) so the fitted
// constants can drive the FSM walk; t0_ns ends up in [0, clock_period_ns).
// Throws ValueError with fewer than three rows and CalibrationError if any
// residual exceeds `tolerance`.
CalibrationResult calibrate(std::span<const LatencyRow> rows, std::span<const LayerShape> shapes,
                            double clock_period_ns = 10.0, double tolerance = 0.02);

struct SweepRow {
  std::size_t parallelism = 1;
  MemoryStyle memory = MemoryStyle::kBram;
  std::int64_t cycles = 0;
  double latency_ns = 0.0;
  double speedup = 1.0;
};

// Simulates every config. Speedup is relative to the lowest-parallelism row
// of the same memory style in `cfgs` (the P = 1 row for the standard sweep).
std::vector<SweepRow> sweep(const FoldedModel& model, const BitVector& input,
                            std::span<const HwConfig> cfgs);

// The 13 configurations of the reference table with the given overheads.
std::vector<HwConfig> reference_configs(const Overheads& overheads = {}, double clock_period_ns = 10.0);

std::string render_text(std::span<const SweepRow> rows);
std::string render_csv(std::span<const SweepRow> rows);

struct CosimMismatch {
  std::size_t sample = 0;
  FsmState stage = FsmState::kIdle;
  std::size_t engine_prediction = 0;
  std::size_t sim_prediction = 0;
};

struct CosimReport {
  std::size_t samples = 0;
  std::size_t agreements = 0;
  std::vector<CosimMismatch> mismatches;

  bool passed() const { return mismatches.empty(); }
};

// Simulates every image and compares against the integer engine.
CosimReport cosim_check(const FoldedModel& model, const mnist::Dataset& data, const HwConfig& cfg);
CosimReport cosim_check(const FoldedModel& model, std::span<const BitVector> inputs, const HwConfig& cfg);

}  // namespace bnn::hw
