#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bnn/bitcore.hpp"
#include "bnn/folding.hpp"

// Line-oriented memory-initialization text files ("$readmemb" style).
//
//   weights     one line per neuron, one character per input, '1' = +1.
//               Character k (left to right) is input index k.
//   thresholds  one line per neuron, 11-bit two's complement, MSB first.
//   image       a single line of 784 characters, pixel k row-major.
//
// ASCII only, LF line endings, every line (including the last) terminated.
// Readers accept exactly what the writers produce and nothing else.
namespace bnn::mem {

enum class Kind { kWeights, kThresholds, kImage };

inline constexpr std::size_t kImageWidth = 784;

struct MemFile {
  Kind kind = Kind::kWeights;
  std::size_t width = 0;
  std::vector<std::string> lines;
};

// Strict structural parse. `width` of 0 means "take it from the first line".
// Errors report a 1-based line and column.
MemFile parse(std::string_view text, Kind kind, std::size_t width = 0);
std::string render(const MemFile& file);

std::string threshold_to_bits(std::int32_t value);
std::int32_t bits_to_threshold(std::string_view bits);

std::string encode_weights(const BitMatrix& weights);
std::string encode_thresholds(std::span<const std::int32_t> thresholds);
std::string encode_image(const BitVector& image);

BitMatrix decode_weights(std::string_view text);
std::vector<std::int32_t> decode_thresholds(std::string_view text);
BitVector decode_image(std::string_view text);

void write_weights(const FoldedLayer& layer, const std::filesystem::path& path);
void write_weights(const BitMatrix& weights, const std::filesystem::path& path);
void write_thresholds(std::span<const std::int32_t> thresholds, const std::filesystem::path& path);
void write_image(const BitVector& image, const std::filesystem::path& path);

BitMatrix read_weights(const std::filesystem::path& path);
std::vector<std::int32_t> read_thresholds(const std::filesystem::path& path);
BitVector read_image(const std::filesystem::path& path);

// A folded model on disk: `model.txt` listing the layer shapes plus
// layer<k>_weights.mem and, for hidden layers, layer<k>_thresholds.mem.
void save_folded_model(const FoldedModel& model, const std::filesystem::path& dir);
FoldedModel load_folded_model(const std::filesystem::path& dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace bnn::mem
