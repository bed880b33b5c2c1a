#include "mixseg/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace mixseg {

void ComplexMixSpec::validate() const {
  if (p_choices.empty()) throw std::invalid_argument("ComplexMixSpec: p_choices is empty");
  for (auto p : p_choices) {
    if (p < 1) throw std::invalid_argument("ComplexMixSpec: every p must be >= 1");
  }
}

std::vector<ClassId> sample_classes(std::vector<ClassId> items, std::size_t k, Rng& rng) {
  if (k > items.size()) throw std::invalid_argument("sample_classes: k exceeds item count");
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(items[i], items[j]);
  }
  items.resize(k);
  return items;
}

MixMask cutmix_mask(std::size_t h, std::size_t w, Rng& rng) {
  if (h == 0 || w == 0 || h * w < 2) {
    throw std::invalid_argument("cutmix_mask: grid must have at least 2 pixels");
  }
  const std::size_t target = h * w / 2;
  // Aspect ratio (width / height) log-uniform in [1/2, 2].
  const double log_aspect = rng.uniform(std::log(0.5), std::log(2.0));

  // Best achievable area error over all rectangle heights.
  struct Candidate {
    std::size_t rh, rw, err;
  };
  std::vector<Candidate> cands;
  std::size_t best_err = std::numeric_limits<std::size_t>::max();
  for (std::size_t rh = 1; rh <= h; ++rh) {
    std::size_t rw = (target + rh / 2) / rh;
    rw = std::clamp<std::size_t>(rw, 1, w);
    const std::size_t area = rh * rw;
    const std::size_t err = area > target ? area - target : target - area;
    cands.push_back({rh, rw, err});
    best_err = std::min(best_err, err);
  }
  const std::size_t allowed = std::max<std::size_t>(1, best_err);

  const Candidate* pick = nullptr;
  double pick_dist = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) {
    if (c.err > allowed) continue;
    const double dist = std::abs(std::log(static_cast<double>(c.rw) / c.rh) - log_aspect);
    if (dist < pick_dist) {
      pick_dist = dist;
      pick = &c;
    }
  }

  const std::size_t top = static_cast<std::size_t>(rng.uniform_index(h - pick->rh + 1));
  const std::size_t left = static_cast<std::size_t>(rng.uniform_index(w - pick->rw + 1));
  std::vector<std::uint8_t> bits(h * w, 0);
  for (std::size_t i = top; i < top + pick->rh; ++i) {
    std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(i * w + left), pick->rw, 1);
  }
  return MixMask(h, w, std::move(bits));
}

ClassMixResult classmix_mask(const LabelMap& labels, Rng& rng) {
  const auto present = labels.present_classes();
  ClassMixResult out;
  out.selected = sample_classes(present, present.size() / 2, rng);
  out.degenerate = out.selected.empty();

  std::vector<bool> chosen(labels.num_classes(), false);
  for (auto c : out.selected) chosen[c] = true;
  std::vector<std::uint8_t> bits(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) bits[k] = chosen[labels[k]] ? 1 : 0;
  out.mask = MixMask(labels.height(), labels.width(), std::move(bits));
  return out;
}

MixMask complexmix_mask(const LabelMap& labels, std::size_t p, Rng& rng, BlockClassPool pool) {
  const std::size_t h = labels.height();
  const std::size_t w = labels.width();
  if (p < 1 || p > std::min(h, w)) {
    throw std::invalid_argument("complexmix_mask: p=" + std::to_string(p) +
                                " must lie in [1, min(H,W)]");
  }
  const std::size_t num_classes = labels.num_classes();
  const std::size_t bh = h / p;
  const std::size_t bw = w / p;

  std::vector<ClassId> all(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) all[c] = static_cast<ClassId>(c);

  std::vector<std::uint8_t> bits(h * w, 0);
  std::vector<bool> chosen(num_classes);
  for (std::size_t by = 0; by < p; ++by) {
    const std::size_t r0 = by * bh;
    const std::size_t r1 = by + 1 == p ? h : r0 + bh;
    for (std::size_t bx = 0; bx < p; ++bx) {
      const std::size_t c0 = bx * bw;
      const std::size_t c1 = bx + 1 == p ? w : c0 + bw;

      std::vector<ClassId> selected;
      if (pool == BlockClassPool::all_classes) {
        selected = sample_classes(all, num_classes / 2, rng);
      } else {
        std::vector<bool> seen(num_classes, false);
        for (std::size_t i = r0; i < r1; ++i)
          for (std::size_t j = c0; j < c1; ++j) seen[labels(i, j)] = true;
        std::vector<ClassId> present;
        for (std::size_t c = 0; c < num_classes; ++c)
          if (seen[c]) present.push_back(static_cast<ClassId>(c));
        selected = sample_classes(present, present.size() / 2, rng);
      }

      std::fill(chosen.begin(), chosen.end(), false);
      for (auto c : selected) chosen[c] = true;
      for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = c0; j < c1; ++j) bits[i * w + j] = chosen[labels(i, j)] ? 1 : 0;
    }
  }
  return MixMask(h, w, std::move(bits));
}

std::size_t sample_p(const ComplexMixSpec& spec, std::size_t h, std::size_t w, Rng& rng) {
  spec.validate();
  const std::size_t limit = std::min(h, w);
  std::vector<std::size_t> fit;
  for (auto p : spec.p_choices)
    if (p <= limit) fit.push_back(p);
  if (fit.empty()) {
    throw std::invalid_argument("sample_p: no p choice fits a " + std::to_string(h) + "x" +
                                std::to_string(w) + " grid");
  }
  return fit[static_cast<std::size_t>(rng.uniform_index(fit.size()))];
}

}  // namespace mixseg
