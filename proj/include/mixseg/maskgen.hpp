#pragma once

#include <cstddef>
#include <vector>

#include "mixseg/core.hpp"

namespace mixseg {

// Which classes a ComplexMix block may select from.
enum class BlockClassPool {
  all_classes,      // floor(C/2) of all C classes, present or not
  present_classes,  // floor(n/2) of the n classes present in the block
};

struct ComplexMixSpec {
  std::vector<std::size_t> p_choices{4, 16, 64, 128};
  BlockClassPool pool = BlockClassPool::all_classes;

  void validate() const;
};

struct ClassMixResult {
  MixMask mask;
  std::vector<ClassId> selected;
  // Fewer than two classes present: nothing could be selected.
  bool degenerate = false;
};

// Draws k distinct elements of `items` by a partial Fisher-Yates shuffle,
// consuming exactly k draws rng.uniform_index(n - i), i = 0..k-1.
std::vector<ClassId> sample_classes(std::vector<ClassId> items, std::size_t k, Rng& rng);

// Random axis-aligned rectangle covering half the grid. Rejects h*w < 2.
MixMask cutmix_mask(std::size_t h, std::size_t w, Rng& rng);

ClassMixResult classmix_mask(const LabelMap& labels, Rng& rng);

// Splits the grid into p x p blocks (the last block row and column absorb
// the remainder) and, per block in row-major order, selects a class set.
// Pixels whose class is selected in their block are set.
MixMask complexmix_mask(const LabelMap& labels, std::size_t p, Rng& rng,
                        BlockClassPool pool = BlockClassPool::all_classes);

// Uniform draw over the p choices that fit an h x w grid.
std::size_t sample_p(const ComplexMixSpec& spec, std::size_t h, std::size_t w, Rng& rng);

}  // namespace mixseg
