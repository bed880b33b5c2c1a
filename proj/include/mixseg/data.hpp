#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixseg/core.hpp"

namespace mixseg {

// Malformed or truncated image/label files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rgb = std::array<double, 3>;

enum class ShapeKind { rectangle, disk, triangle };

struct ShapeInstance {
  ShapeKind kind = ShapeKind::rectangle;
  ClassId class_id = 1;
  double center_y = 0.0;
  double center_x = 0.0;
  double half_height = 0.0;  // disks use half_height as radius
  double half_width = 0.0;
};

// Scenes of 0..max_shapes filled shapes on a background. Class 0 is the
// background; class k >= 1 is drawn as shape kind (k - 1) % 3.
struct ShapesSceneSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 4;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
  // Shape half-extent range as a fraction of min(height, width).
  double min_extent = 0.12;
  double max_extent = 0.3;
  // Per-class mean colour; mean intensities 0.3 apart.
  std::vector<Rgb> class_colors{{0.10, 0.05, 0.00}, {0.45, 0.30, 0.30}, {0.55, 0.75, 0.65}, {1.00, 0.90, 0.95}};
  double noise_sigma = 0.1;
  // Per-image additive brightness offset drawn uniformly from [-j, j].
  double brightness_jitter = 0.0;

  void validate() const;
};

struct Sample {
  Image image;
  LabelMap labels;
};

// Rasterises shapes back to front; later shapes cover earlier ones. The
// image is class colour plus (offset + noise), clipped to [0,1].
Sample render_scene(const ShapesSceneSpec& spec, const std::vector<ShapeInstance>& shapes,
                    double brightness_offset, Rng* noise_rng);
std::vector<ShapeInstance> sample_shapes(const ShapesSceneSpec& spec, Rng& rng);
Sample generate_scene(const ShapesSceneSpec& spec, Rng& rng);

struct SplitManifest {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
  std::vector<std::size_t> validation;
  double labeled_fraction = 1.0;
  std::uint64_t seed = 0;
};

// Seeded shuffle of the pool then prefix-take of round(fraction * |pool|).
SplitManifest make_split(const std::vector<std::size_t>& pool, std::vector<std::size_t> validation,
                         double labeled_fraction, Rng& rng);
SplitManifest make_split(std::size_t pool_size, double labeled_fraction, Rng& rng);

struct DatasetSpec {
  ShapesSceneSpec scene;
  std::size_t train_pool = 240;
  std::size_t val_pool = 60;
  double labeled_fraction = 0.125;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::size_t num_classes = 0;
  // Ids index into samples. Training pool is [0, train_pool), validation after.
  std::vector<Sample> samples;
  std::vector<std::size_t> train_pool;
  SplitManifest split;
};

Dataset generate_dataset(const DatasetSpec& spec);

// Binary PPM (P6, maxval 255) and PGM (P5, maxval C-1) codecs.
void write_ppm(std::ostream& out, const Image& img);
Image read_ppm(std::istream& in);
void write_pgm_labels(std::ostream& out, const LabelMap& labels);
LabelMap read_pgm_labels(std::istream& in);

// Directory layout: images/NNNN.ppm, labels/NNNN.pgm, split.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

std::string split_to_json(const SplitManifest& split, std::size_t train_pool_size);
SplitManifest split_from_json(const std::string& text, std::size_t* train_pool_size = nullptr);

// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace mixseg
