#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "bnn/error.hpp"
#include "bnn/mnist.hpp"

using namespace bnn;
using namespace bnn::mnist;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = BNN_TEST_FIXTURES;

IdxError::Kind load_error_kind(const std::string& images, const std::string& labels) {
  try {
    load_idx(kFixtures / images, kFixtures / labels, Split::kTest);
  } catch (const IdxError& e) {
    return e.kind();
  }
  FAIL("expected IdxError");
  return IdxError::Kind::kBadMagic;
}

Dataset labelled(std::vector<std::uint8_t> labels) {
  Dataset d;
  d.labels = std::move(labels);
  d.images.resize(d.labels.size());
  for (std::size_t n = 0; n < d.images.size(); ++n) d.images[n].fill(static_cast<std::uint8_t>(n));
  return d;
}

}  // namespace

TEST_CASE("tiny IDX fixture loads") {
  const Dataset d = load_idx(kFixtures / "tiny-images-idx3-ubyte", kFixtures / "tiny-labels-idx1-ubyte",
                             Split::kTrain);
  REQUIRE(d.size() == 3);
  CHECK(d.labels == std::vector<std::uint8_t>{7, 0, 9});
  // Pixel value written by the fixture script: (n*37 + p*11) % 256.
  CHECK(d.images[0][0] == 0);
  CHECK(d.images[1][2] == (37 + 22) % 256);
  CHECK(d.images[2][783] == (2 * 37 + 783 * 11) % 256);
}

TEST_CASE("malformed IDX files are rejected with the matching kind") {
  CHECK(load_error_kind("bad-magic-images-idx3-ubyte", "tiny-labels-idx1-ubyte") == IdxError::Kind::kBadMagic);
  CHECK(load_error_kind("truncated-images-idx3-ubyte", "tiny-labels-idx1-ubyte") == IdxError::Kind::kTruncated);
  CHECK(load_error_kind("tiny-images-idx3-ubyte", "bad-label-labels-idx1-ubyte") == IdxError::Kind::kBadLabel);
  CHECK(load_error_kind("tiny-images-idx3-ubyte", "short-labels-idx1-ubyte") ==
        IdxError::Kind::kCountMismatch);
  CHECK_THROWS_AS(load_idx(kFixtures / "nope", kFixtures / "nope", Split::kTest), IoError);
}

TEST_CASE("IDX encode and parse round trip") {
  const Dataset d = labelled({3, 1, 4, 1, 5});
  const auto img = encode_idx_images(d.images);
  const auto lab = encode_idx_labels(d.labels);
  CHECK(img.size() == 16 + 5 * 784);
  CHECK(lab.size() == 8 + 5);
  CHECK(img[3] == 0x03);
  CHECK(lab[3] == 0x01);
  Dataset back = parse_idx(img, lab, Split::kTest);
  CHECK(back == d);

  const fs::path dir = fs::temp_directory_path() / "bnn_idx_roundtrip";
  fs::create_directories(dir);
  write_idx(d, dir / "a", dir / "b");
  CHECK(load_idx(dir / "a", dir / "b", Split::kTest) == d);
  fs::remove_all(dir);
}

TEST_CASE("normalization and binarization threshold") {
  Image im{};
  im[0] = 0;
  im[1] = 255;
  im[2] = 127;
  im[3] = 128;
  const auto x = normalize(im);
  CHECK(x[0] == doctest::Approx(-1.0));
  CHECK(x[1] == doctest::Approx(1.0));
  for (double v : x) CHECK((v >= -1.0 && v <= 1.0));
  const BitVector b = binarize_image(im);
  CHECK(b.size() == kImagePixels);
  CHECK_FALSE(b.get(0));
  CHECK(b.get(1));
  CHECK_FALSE(b.get(2));
  CHECK(b.get(3));
}

TEST_CASE("verification set takes the first ten of each digit in digit order") {
  std::vector<std::uint8_t> labels;
  for (int rep = 0; rep < 12; ++rep) {
    for (int d = 9; d >= 0; --d) labels.push_back(static_cast<std::uint8_t>(d));
  }
  const Dataset test = labelled(labels);
  const auto idx = select_verification_set(test);
  REQUIRE(idx.size() == 100);
  for (std::size_t k = 0; k < 100; ++k) {
    const std::size_t digit = k / 10;
    CHECK(test.labels[idx[k]] == digit);
    // Oracle: the (k%10)-th occurrence of `digit` in a 9..0 cycle sits here.
    CHECK(idx[k] == (k % 10) * 10 + (9 - digit));
  }
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 100);

  labels.erase(std::find(labels.begin(), labels.end(), 4));
  labels.erase(std::find(labels.begin(), labels.end(), 4));
  labels.erase(std::find(labels.begin(), labels.end(), 4));
  try {
    select_verification_set(labelled(labels));
    FAIL("short digit accepted");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find('4') != std::string::npos);
  }
}

TEST_CASE("batch plan covers every sample once per epoch and is seeded") {
  const BatchPlan plan(1000, 64, 9);
  CHECK(plan.batches_per_epoch() == 16);
  const auto o0 = plan.order(0);
  const auto o1 = plan.order(1);
  CHECK(o0 == BatchPlan(1000, 64, 9).order(0));
  CHECK(o0 != o1);
  std::vector<std::size_t> sorted = o0;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) REQUIRE(sorted[i] == i);
  std::size_t covered = 0;
  for (std::size_t b = 0; b < plan.batches_per_epoch(); ++b) covered += plan.batch(o0, b).size();
  CHECK(covered == 1000);
  CHECK(plan.batch(o0, 15).size() == 1000 - 15 * 64);
}
