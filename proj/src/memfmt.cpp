#include "bnn/memfmt.hpp"

#include <fstream>
#include <sstream>

#include "bnn/error.hpp"

namespace bnn::mem {

namespace {

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::kWeights: return "weights";
    case Kind::kThresholds: return "thresholds";
    case Kind::kImage: return "image";
  }
  return "?";
}

std::string weights_file(std::size_t l) { return "layer" + std::to_string(l) + "_weights.mem"; }
std::string thresholds_file(std::size_t l) { return "layer" + std::to_string(l) + "_thresholds.mem"; }

}  // namespace

MemFile parse(std::string_view text, Kind kind, std::size_t width) {
  const std::string prefix = std::string(kind_name(kind)) + " .mem: ";
  if (text.empty()) throw FormatError(prefix + "empty file", 1);
  if (kind == Kind::kThresholds) width = static_cast<std::size_t>(kThresholdBits);
  if (kind == Kind::kImage) width = kImageWidth;

  MemFile file;
  file.kind = kind;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) {
      throw FormatError(prefix + "missing newline at end of line " + std::to_string(line_no), line_no,
                        text.size() - pos + 1);
    }
    const std::string_view line = text.substr(pos, eol - pos);
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (line[c] != '0' && line[c] != '1') {
        throw FormatError(prefix + "illegal character at line " + std::to_string(line_no) +
                              ", column " + std::to_string(c + 1),
                          line_no, c + 1);
      }
    }
    if (width == 0) width = line.size();
    if (line.size() != width || width == 0) {
      throw FormatError(prefix + "line " + std::to_string(line_no) + " has width " +
                            std::to_string(line.size()) + ", expected " + std::to_string(width),
                        line_no);
    }
    file.lines.emplace_back(line);
    pos = eol + 1;
  }
  if (kind == Kind::kImage && file.lines.size() != 1) {
    throw FormatError(prefix + "expected exactly one line, found " + std::to_string(file.lines.size()),
                      2);
  }
  file.width = width;
  return file;
}

std::string render(const MemFile& file) {
  std::string out;
  out.reserve(file.lines.size() * (file.width + 1));
  for (const auto& line : file.lines) {
    out += line;
    out += '\n';
  }
  return out;
}

std::string threshold_to_bits(std::int32_t value) {
  if (value < kThresholdMin || value > kThresholdMax) {
    throw ValueError("threshold " + std::to_string(value) + " outside the 11-bit range");
  }
  const auto u = static_cast<std::uint32_t>(value) & ((1u << kThresholdBits) - 1);
  std::string bits(kThresholdBits, '0');
  for (int b = 0; b < kThresholdBits; ++b) {
    if ((u >> (kThresholdBits - 1 - b)) & 1u) bits[static_cast<std::size_t>(b)] = '1';
  }
  return bits;
}

std::int32_t bits_to_threshold(std::string_view bits) {
  if (bits.size() != static_cast<std::size_t>(kThresholdBits)) {
    throw ValueError("threshold word must have 11 bits");
  }
  std::int32_t v = 0;
  for (char c : bits) {
    if (c != '0' && c != '1') throw ValueError("threshold word has a non-binary character");
    v = (v << 1) | (c == '1' ? 1 : 0);
  }
  if (v & (1 << (kThresholdBits - 1))) v -= 1 << kThresholdBits;
  return v;
}

std::string encode_weights(const BitMatrix& weights) {
  MemFile f{Kind::kWeights, weights.cols(), {}};
  for (std::size_t j = 0; j < weights.rows(); ++j) f.lines.push_back(weights.row(j).to_string());
  return render(f);
}

std::string encode_thresholds(std::span<const std::int32_t> thresholds) {
  MemFile f{Kind::kThresholds, static_cast<std::size_t>(kThresholdBits), {}};
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    if (thresholds[j] < kThresholdMin || thresholds[j] > kThresholdMax) {
      throw ValueError("threshold of neuron " + std::to_string(j) + " (" +
                       std::to_string(thresholds[j]) + ") outside the 11-bit range");
    }
    f.lines.push_back(threshold_to_bits(thresholds[j]));
  }
  return render(f);
}

std::string encode_image(const BitVector& image) {
  if (image.size() != kImageWidth) throw DimensionError("image bits", kImageWidth, image.size());
  return render(MemFile{Kind::kImage, kImageWidth, {image.to_string()}});
}

BitMatrix decode_weights(std::string_view text) {
  const MemFile f = parse(text, Kind::kWeights);
  std::vector<BitVector> rows;
  rows.reserve(f.lines.size());
  for (const auto& line : f.lines) rows.push_back(BitVector::from_string(line));
  return BitMatrix(std::move(rows));
}

std::vector<std::int32_t> decode_thresholds(std::string_view text) {
  const MemFile f = parse(text, Kind::kThresholds);
  std::vector<std::int32_t> out;
  out.reserve(f.lines.size());
  for (const auto& line : f.lines) out.push_back(bits_to_threshold(line));
  return out;
}

BitVector decode_image(std::string_view text) {
  const MemFile f = parse(text, Kind::kImage);
  return BitVector::from_string(f.lines.front());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_weights(const FoldedLayer& layer, const std::filesystem::path& path) {
  write_weights(layer.weights, path);
}

void write_weights(const BitMatrix& weights, const std::filesystem::path& path) {
  write_text(path, encode_weights(weights));
}

void write_thresholds(std::span<const std::int32_t> thresholds, const std::filesystem::path& path) {
  write_text(path, encode_thresholds(thresholds));
}

void write_image(const BitVector& image, const std::filesystem::path& path) {
  write_text(path, encode_image(image));
}

BitMatrix read_weights(const std::filesystem::path& path) { return decode_weights(read_text(path)); }

std::vector<std::int32_t> read_thresholds(const std::filesystem::path& path) {
  return decode_thresholds(read_text(path));
}

BitVector read_image(const std::filesystem::path& path) { return decode_image(read_text(path)); }

void save_folded_model(const FoldedModel& model, const std::filesystem::path& dir) {
  model.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream manifest;
  manifest << "bnn-folded 1\n";
  manifest << "layers " << model.layers.size() << '\n';
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const FoldedLayer& layer = model.layers[l];
    manifest << "layer " << l << ' ' << layer.inputs() << ' ' << layer.outputs() << ' '
             << (layer.thresholded() ? "thresholded" : "raw") << '\n';
    write_weights(layer, dir / weights_file(l));
    if (layer.thresholded()) write_thresholds(*layer.thresholds, dir / thresholds_file(l));
  }
  write_text(dir / "model.txt", manifest.str());
}

FoldedModel load_folded_model(const std::filesystem::path& dir) {
  const std::string text = read_text(dir / "model.txt");
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "bnn-folded" || version != 1) {
    throw FormatError("model.txt: expected 'bnn-folded 1' header", 1);
  }
  std::size_t n_layers = 0;
  if (!(in >> tag >> n_layers) || tag != "layers" || n_layers == 0) {
    throw FormatError("model.txt: expected 'layers <count>'", 2);
  }
  FoldedModel model;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::size_t idx = 0, inputs = 0, outputs = 0;
    std::string kind;
    if (!(in >> tag >> idx >> inputs >> outputs >> kind) || tag != "layer" || idx != l ||
        (kind != "thresholded" && kind != "raw")) {
      throw FormatError("model.txt: malformed layer entry " + std::to_string(l), l + 3);
    }
    FoldedLayer layer;
    layer.weights = read_weights(dir / weights_file(l));
    if (layer.outputs() != outputs) {
      throw DimensionError(weights_file(l) + " rows", outputs, layer.outputs());
    }
    if (layer.inputs() != inputs) throw DimensionError(weights_file(l) + " width", inputs, layer.inputs());
    if (kind == "thresholded") layer.thresholds = read_thresholds(dir / thresholds_file(l));
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

}  // namespace bnn::mem
