#include "mixseg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace mixseg {

namespace fs = std::filesystem;
using nlohmann::json;

void ShapesSceneSpec::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("scene: height and width must be positive");
  if (num_classes < 1) throw std::invalid_argument("scene: num_classes must be >= 1");
  if (min_shapes > max_shapes) throw std::invalid_argument("scene: min_shapes exceeds max_shapes");
  if (!(min_extent > 0.0 && min_extent <= max_extent)) {
    throw std::invalid_argument("scene: extents must satisfy 0 < min_extent <= max_extent");
  }
  if (class_colors.size() != num_classes) {
    throw std::invalid_argument("scene: class_colors must have one entry per class");
  }
  for (const auto& rgb : class_colors)
    for (double v : rgb)
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("scene: colours must lie in [0,1]");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("scene: noise_sigma must be >= 0");
  if (!(brightness_jitter >= 0.0)) throw std::invalid_argument("scene: brightness_jitter must be >= 0");
}

namespace {

bool covers(const ShapeInstance& s, double y, double x) {
  const double dy = y - s.center_y;
  const double dx = x - s.center_x;
  switch (s.kind) {
    case ShapeKind::rectangle:
      return std::abs(dy) <= s.half_height && std::abs(dx) <= s.half_width;
    case ShapeKind::disk:
      return dy * dy + dx * dx <= s.half_height * s.half_height;
    case ShapeKind::triangle: {
      // Apex up, base at center_y + half_height.
      if (dy < -s.half_height || dy > s.half_height) return false;
      const double t = (dy + s.half_height) / (2.0 * s.half_height);
      return std::abs(dx) <= s.half_width * t;
    }
  }
  return false;
}

}  // namespace

Sample render_scene(const ShapesSceneSpec& spec, const std::vector<ShapeInstance>& shapes,
                    double brightness_offset, Rng* noise_rng) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width, n = h * w;
  std::vector<ClassId> labels(n, 0);
  for (const auto& s : shapes) {
    if (s.class_id >= spec.num_classes) throw std::invalid_argument("render_scene: shape class out of range");
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        if (covers(s, i + 0.5, j + 0.5)) labels[i * w + j] = s.class_id;
  }
  std::vector<double> pixels(3 * n);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < n; ++k) {
      double v = spec.class_colors[labels[k]][c] + brightness_offset;
      if (noise_rng != nullptr && spec.noise_sigma > 0.0) v += spec.noise_sigma * noise_rng->normal();
      pixels[c * n + k] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Sample{Image(3, h, w, std::move(pixels)), LabelMap(h, w, spec.num_classes, std::move(labels))};
}

std::vector<ShapeInstance> sample_shapes(const ShapesSceneSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<ShapeInstance> shapes;
  if (spec.num_classes < 2) return shapes;
  const std::size_t count = spec.min_shapes + rng.uniform_index(spec.max_shapes - spec.min_shapes + 1);
  const double side = static_cast<double>(std::min(spec.height, spec.width));
  for (std::size_t s = 0; s < count; ++s) {
    ShapeInstance shape;
    shape.class_id = static_cast<ClassId>(1 + rng.uniform_index(spec.num_classes - 1));
    shape.kind = static_cast<ShapeKind>((shape.class_id - 1) % 3);
    shape.center_y = rng.uniform(0.0, static_cast<double>(spec.height));
    shape.center_x = rng.uniform(0.0, static_cast<double>(spec.width));
    const double extent = side * rng.uniform(spec.min_extent, spec.max_extent);
    shape.half_height = extent;
    shape.half_width = shape.kind == ShapeKind::disk ? extent : extent * rng.uniform(0.7, 1.3);
    shapes.push_back(shape);
  }
  return shapes;
}

Sample generate_scene(const ShapesSceneSpec& spec, Rng& rng) {
  const auto shapes = sample_shapes(spec, rng);
  const double offset =
      spec.brightness_jitter > 0.0 ? rng.uniform(-spec.brightness_jitter, spec.brightness_jitter) : 0.0;
  return render_scene(spec, shapes, offset, &rng);
}

SplitManifest make_split(const std::vector<std::size_t>& pool, std::vector<std::size_t> validation,
                         double labeled_fraction, Rng& rng) {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw std::invalid_argument("make_split: labeled_fraction must be in (0,1]");
  }
  const auto count = static_cast<std::size_t>(std::llround(labeled_fraction * static_cast<double>(pool.size())));
  if (count == 0) throw std::invalid_argument("make_split: labeled_fraction yields no labeled samples");
  for (auto v : validation) {
    if (std::find(pool.begin(), pool.end(), v) != pool.end()) {
      throw std::invalid_argument("make_split: validation id overlaps the training pool");
    }
  }

  SplitManifest out;
  out.labeled_fraction = labeled_fraction;
  out.seed = rng.seed();
  std::vector<std::size_t> order = pool;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  out.labeled.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  out.unlabeled.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  out.validation = std::move(validation);
  return out;
}

SplitManifest make_split(std::size_t pool_size, double labeled_fraction, Rng& rng) {
  std::vector<std::size_t> pool(pool_size);
  std::iota(pool.begin(), pool.end(), 0);
  return make_split(pool, {}, labeled_fraction, rng);
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.scene.validate();
  Dataset ds;
  ds.num_classes = spec.scene.num_classes;
  const Rng root(spec.seed);
  const std::size_t total = spec.train_pool + spec.val_pool;
  ds.samples.reserve(total);
  for (std::size_t id = 0; id < total; ++id) {
    Rng rng = root.fork(id);
    ds.samples.push_back(generate_scene(spec.scene, rng));
  }
  ds.train_pool.resize(spec.train_pool);
  std::iota(ds.train_pool.begin(), ds.train_pool.end(), 0);
  std::vector<std::size_t> val(spec.val_pool);
  std::iota(val.begin(), val.end(), spec.train_pool);
  Rng split_rng = root.fork(~std::uint64_t{0});
  ds.split = make_split(ds.train_pool, std::move(val), spec.labeled_fraction, split_rng);
  return ds;
}

// ---------------------------------------------------------------------------
// Netpbm
// ---------------------------------------------------------------------------

namespace {

struct PnmHeader {
  std::string magic;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
};

// Reads one header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  for (;;) {
    while (ch != EOF && std::isspace(ch)) ch = in.get();
    if (ch == '#') {
      while (ch != EOF && ch != '\n' && ch != '\r') ch = in.get();
      continue;
    }
    break;
  }
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (tok.empty()) throw FormatError("netpbm: truncated header");
  if (ch == '#') throw FormatError("netpbm: comment directly after maxval");
  // `ch` is the single whitespace byte that ends the token.
  return tok;
}

std::size_t pnm_number(std::istream& in, const char* field) {
  const std::string tok = pnm_token(in);
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      tok.size() > 9) {
    throw FormatError(std::string("netpbm: malformed ") + field + " '" + tok + "'");
  }
  return static_cast<std::size_t>(std::stoul(tok));
}

PnmHeader read_header(std::istream& in, const char* expected_magic) {
  PnmHeader h;
  h.magic = pnm_token(in);
  if (h.magic != expected_magic) {
    throw FormatError("netpbm: expected " + std::string(expected_magic) + ", found '" + h.magic + "'");
  }
  h.width = pnm_number(in, "width");
  h.height = pnm_number(in, "height");
  h.maxval = pnm_number(in, "maxval");
  if (h.width == 0 || h.height == 0) throw FormatError("netpbm: zero image dimension");
  if (h.maxval == 0 || h.maxval > 65535) throw FormatError("netpbm: maxval must be in [1, 65535]");
  return h;
}

std::vector<unsigned char> read_raster(std::istream& in, std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw FormatError("netpbm: truncated raster data");
  return buf;
}

}  // namespace

void write_ppm(std::ostream& out, const Image& img) {
  if (img.channels() != 3) throw std::invalid_argument("write_ppm: image must have 3 channels");
  const std::size_t h = img.height(), w = img.width(), n = h * w;
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raster(3 * n);
  const auto v = img.values();
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      raster[3 * k + c] = static_cast<unsigned char>(std::lround(v[c * n + k] * 255.0));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("write_ppm: write failed");
}

Image read_ppm(std::istream& in) {
  const PnmHeader h = read_header(in, "P6");
  const std::size_t n = h.width * h.height;
  const std::size_t bps = h.maxval > 255 ? 2 : 1;
  const auto raster = read_raster(in, 3 * n * bps);
  std::vector<double> pixels(3 * n);
  const double scale = static_cast<double>(h.maxval);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t at = (3 * k + c) * bps;
      const std::size_t v = bps == 2 ? (std::size_t{raster[at]} << 8) | raster[at + 1] : raster[at];
      if (v > h.maxval) throw FormatError("read_ppm: sample exceeds maxval");
      pixels[c * n + k] = static_cast<double>(v) / scale;
    }
  }
  return Image(3, h.height, h.width, std::move(pixels));
}

void write_pgm_labels(std::ostream& out, const LabelMap& labels) {
  if (labels.num_classes() < 2) throw std::invalid_argument("write_pgm_labels: need at least 2 classes");
  const std::size_t maxval = labels.num_classes() - 1;
  out << "P5\n" << labels.width() << " " << labels.height() << "\n" << maxval << "\n";
  const std::size_t bps = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raster(labels.size() * bps);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (bps == 2) {
      raster[2 * k] = static_cast<unsigned char>(labels[k] >> 8);
      raster[2 * k + 1] = static_cast<unsigned char>(labels[k] & 0xFF);
    } else {
      raster[k] = static_cast<unsigned char>(labels[k]);
    }
  }
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("write_pgm_labels: write failed");
}

LabelMap read_pgm_labels(std::istream& in) {
  const PnmHeader h = read_header(in, "P5");
  const std::size_t n = h.width * h.height;
  const std::size_t bps = h.maxval > 255 ? 2 : 1;
  const auto raster = read_raster(in, n * bps);
  std::vector<ClassId> labels(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t v = bps == 2 ? (std::size_t{raster[2 * k]} << 8) | raster[2 * k + 1] : raster[k];
    if (v > h.maxval) {
      throw FormatError("read_pgm_labels: class value " + std::to_string(v) + " exceeds maxval " +
                        std::to_string(h.maxval));
    }
    labels[k] = static_cast<ClassId>(v);
  }
  return LabelMap(h.height, h.width, h.maxval + 1, std::move(labels));
}

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::string sample_name(std::size_t id, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu.%s", id, ext);
  return buf;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

std::string split_to_json(const SplitManifest& split, std::size_t train_pool_size) {
  json j;
  j["seed"] = split.seed;
  j["labeled_fraction"] = split.labeled_fraction;
  j["train_pool"] = train_pool_size;
  j["labeled"] = split.labeled;
  j["unlabeled"] = split.unlabeled;
  j["validation"] = split.validation;
  return j.dump(2) + "\n";
}

SplitManifest split_from_json(const std::string& text, std::size_t* train_pool_size) {
  SplitManifest s;
  try {
    const json j = json::parse(text);
    s.seed = j.at("seed").get<std::uint64_t>();
    s.labeled_fraction = j.at("labeled_fraction").get<double>();
    s.labeled = j.at("labeled").get<std::vector<std::size_t>>();
    s.unlabeled = j.at("unlabeled").get<std::vector<std::size_t>>();
    s.validation = j.at("validation").get<std::vector<std::size_t>>();
    if (train_pool_size != nullptr) *train_pool_size = j.at("train_pool").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("split.json: ") + e.what());
  }
  return s;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  for (std::size_t id = 0; id < ds.samples.size(); ++id) {
    std::ostringstream img, lab;
    write_ppm(img, ds.samples[id].image);
    write_pgm_labels(lab, ds.samples[id].labels);
    write_file_atomic(dir / "images" / sample_name(id, "ppm"), img.str());
    write_file_atomic(dir / "labels" / sample_name(id, "pgm"), lab.str());
  }
  write_file_atomic(dir / "split.json", split_to_json(ds.split, ds.train_pool.size()));
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream split_in = open_input(dir / "split.json");
  std::stringstream text;
  text << split_in.rdbuf();
  Dataset ds;
  std::size_t pool = 0;
  ds.split = split_from_json(text.str(), &pool);
  const std::size_t total = pool + ds.split.validation.size();
  ds.train_pool.resize(pool);
  std::iota(ds.train_pool.begin(), ds.train_pool.end(), 0);
  for (std::size_t id = 0; id < total; ++id) {
    auto img_in = open_input(dir / "images" / sample_name(id, "ppm"));
    auto lab_in = open_input(dir / "labels" / sample_name(id, "pgm"));
    Sample s{read_ppm(img_in), read_pgm_labels(lab_in)};
    if (ds.num_classes == 0) ds.num_classes = s.labels.num_classes();
    if (s.labels.num_classes() != ds.num_classes) {
      throw FormatError("dataset: label files disagree on class count at id " + std::to_string(id));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mixseg
