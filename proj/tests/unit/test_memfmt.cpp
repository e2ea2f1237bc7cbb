#include <doctest.h>

#include <filesystem>

#include "bnn/error.hpp"
#include "bnn/memfmt.hpp"
#include "bnn/random.hpp"

using namespace bnn;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = BNN_TEST_GOLDEN;

FoldedModel small_model() {
  FoldedModel m;
  m.layers.push_back({BitMatrix({BitVector::from_string("1101"), BitVector::from_string("1010")}),
                      std::vector<std::int32_t>{0, 4}});
  m.layers.push_back({BitMatrix({BitVector::from_string("10"), BitVector::from_string("01")}), std::nullopt});
  return m;
}

std::size_t format_line(std::string_view text, mem::Kind kind, std::size_t* column = nullptr) {
  try {
    mem::parse(text, kind);
  } catch (const FormatError& e) {
    if (column) *column = e.column();
    return e.position();
  }
  FAIL("parse accepted bad input");
  return 0;
}

}  // namespace

TEST_CASE("threshold words are 11-bit two's complement, MSB first") {
  CHECK(mem::threshold_to_bits(37) == "00000100101");
  CHECK(mem::threshold_to_bits(0) == "00000000000");
  CHECK(mem::threshold_to_bits(-1) == "11111111111");
  CHECK(mem::threshold_to_bits(-1024) == "10000000000");
  CHECK(mem::threshold_to_bits(1023) == "01111111111");
  CHECK_THROWS_AS(mem::threshold_to_bits(1024), ValueError);
  CHECK_THROWS_AS(mem::threshold_to_bits(-1025), ValueError);
  for (std::int32_t t = kThresholdMin; t <= kThresholdMax; ++t) {
    REQUIRE(mem::bits_to_threshold(mem::threshold_to_bits(t)) == t);
  }
}

TEST_CASE("golden files match the encoder byte for byte") {
  const FoldedModel m = small_model();
  CHECK(mem::encode_weights(m.layers[0].weights) == mem::read_text(kGolden / "layer0_weights.mem"));
  CHECK(mem::encode_thresholds(*m.layers[0].thresholds) == mem::read_text(kGolden / "layer0_thresholds.mem"));
  CHECK(mem::encode_weights(m.layers[1].weights) == mem::read_text(kGolden / "layer1_weights.mem"));
  const std::vector<std::int32_t> mixed{37, -1, -1024, 1023};
  CHECK(mem::decode_thresholds(mem::read_text(kGolden / "thresholds_mixed.mem")) == mixed);

  const FoldedModel loaded = mem::load_folded_model(kGolden);
  REQUIRE(loaded.layers.size() == 2);
  CHECK(loaded.layers[0].weights.row(1).to_string() == "1010");
  CHECK(*loaded.layers[0].thresholds == std::vector<std::int32_t>{0, 4});
  CHECK_FALSE(loaded.layers[1].thresholded());

  const fs::path dir = fs::temp_directory_path() / "bnn_mem_golden";
  fs::remove_all(dir);
  mem::save_folded_model(m, dir);
  for (const char* f : {"model.txt", "layer0_weights.mem", "layer0_thresholds.mem", "layer1_weights.mem"}) {
    CHECK(mem::read_text(dir / f) == mem::read_text(kGolden / f));
  }
  CHECK_FALSE(fs::exists(dir / "layer1_thresholds.mem"));
  fs::remove_all(dir);
}

TEST_CASE("random encode/decode round trips") {
  Rng rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng.below(20);
    const std::size_t cols = 1 + rng.below(200);
    BitMatrix w(rows, cols);
    for (std::size_t j = 0; j < rows; ++j) {
      for (std::size_t i = 0; i < cols; ++i) w.set(j, i, rng.coin());
    }
    const std::string text = mem::encode_weights(w);
    const BitMatrix back = mem::decode_weights(text);
    REQUIRE(back.rows() == rows);
    REQUIRE(mem::encode_weights(back) == text);
    for (std::size_t j = 0; j < rows; ++j) REQUIRE(back.row(j) == w.row(j));

    std::vector<std::int32_t> t(rows);
    for (auto& v : t) v = static_cast<std::int32_t>(rng.below(2048)) - 1024;
    REQUIRE(mem::decode_thresholds(mem::encode_thresholds(t)) == t);

    BitVector img(784);
    for (std::size_t i = 0; i < 784; ++i) img.set(i, rng.coin());
    REQUIRE(mem::decode_image(mem::encode_image(img)) == img);
  }
}

TEST_CASE("image files are a single 784-character line") {
  BitVector img(784);
  img.set(0, true);
  const std::string text = mem::encode_image(img);
  CHECK(text.size() == 785);
  CHECK(text.front() == '1');
  CHECK(text.back() == '\n');
}

TEST_CASE("strict parser reports line and column") {
  std::size_t col = 0;
  CHECK(format_line("101\n1x1\n", mem::Kind::kWeights, &col) == 2);
  CHECK(col == 2);
  CHECK(format_line("101\n10\n", mem::Kind::kWeights) == 2);
  CHECK(format_line("101\n101", mem::Kind::kWeights) == 2);
  CHECK(format_line("101\r\n", mem::Kind::kWeights, &col) == 1);
  CHECK(col == 4);
  CHECK(format_line("", mem::Kind::kWeights) == 1);
  CHECK(format_line("\n", mem::Kind::kWeights) == 1);
  CHECK(format_line("0000010010\n", mem::Kind::kThresholds) == 1);
  CHECK(format_line(std::string(783, '0') + "\n", mem::Kind::kImage) == 1);
  CHECK(format_line(std::string(784, '0') + "\n" + std::string(784, '0') + "\n", mem::Kind::kImage) == 2);
}

TEST_CASE("file helpers surface missing files as I/O errors") {
  CHECK_THROWS_AS(mem::read_image("/nonexistent/image.mem"), IoError);
  CHECK_THROWS_AS(mem::load_folded_model("/nonexistent"), IoError);
}
