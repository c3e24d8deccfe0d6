#include "dare/masking/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dare::masking {

Mask::Mask(std::int64_t channels, std::int64_t patches, std::vector<std::uint8_t> bits)
    : channels_(channels), patches_(patches), bits_(std::move(bits)) {
  if (channels <= 0 || patches <= 0 || static_cast<std::int64_t>(bits_.size()) != channels * patches) {
    throw ShapeError("mask grid size does not match C x N");
  }
  for (auto b : bits_) {
    if (b > 1) throw std::invalid_argument("mask values must be 0 or 1");
  }
  const std::int64_t v = visible_count();
  if (v == 0) throw std::invalid_argument("degenerate mask: nothing visible");
  if (v == channels * patches) throw std::invalid_argument("degenerate mask: nothing masked");
}

Mask Mask::all_visible(std::int64_t channels, std::int64_t patches) {
  if (channels <= 0 || patches <= 0) throw ShapeError("mask dimensions must be positive");
  Mask m;
  m.channels_ = channels;
  m.patches_ = patches;
  m.bits_.assign(static_cast<std::size_t>(channels * patches), 1);
  return m;
}

Mask Mask::from_tensor(const Tensor& grid) {
  if (grid.rank() != 2) throw ShapeError("mask tensor must be C x N");
  std::vector<std::uint8_t> bits;
  bits.reserve(static_cast<std::size_t>(grid.size()));
  for (Real v : grid.values()) {
    if (v != Real(0) && v != Real(1)) throw std::invalid_argument("mask values must be 0 or 1");
    bits.push_back(v != Real(0) ? 1 : 0);
  }
  return Mask(grid.dim(0), grid.dim(1), std::move(bits));
}

bool Mask::column_visible(std::int64_t patch) const {
  for (std::int64_t i = 0; i < channels_; ++i) {
    if (visible(i, patch)) return true;
  }
  return false;
}

std::int64_t Mask::visible_count() const {
  return std::accumulate(bits_.begin(), bits_.end(), std::int64_t{0});
}

std::int64_t Mask::visible_columns() const {
  std::int64_t n = 0;
  for (std::int64_t j = 0; j < patches_; ++j) n += column_visible(j) ? 1 : 0;
  return n;
}

Tensor Mask::to_tensor() const {
  Tensor t({channels_, patches_});
  for (std::size_t k = 0; k < bits_.size(); ++k) t[static_cast<std::int64_t>(k)] = bits_[k];
  return t;
}

std::int64_t visible_channels_per_column(std::int64_t channels, double p_chan_visible) {
  const auto k = static_cast<std::int64_t>(std::llround(p_chan_visible * static_cast<double>(channels)));
  return std::clamp<std::int64_t>(k, 1, channels);
}

Mask sample_mask(std::int64_t channels, std::int64_t patches, double p_time_mask, double p_chan_visible, Rng& rng,
                 int max_retries) {
  if (channels < 2 || patches < 2) throw std::invalid_argument("masks need C >= 2 and N >= 2");
  if (!(p_time_mask >= 0.0 && p_time_mask <= 1.0)) throw std::invalid_argument("p_time_mask must lie in [0, 1]");
  if (!(p_chan_visible > 0.0 && p_chan_visible <= 1.0)) throw std::invalid_argument("p_chan_visible must lie in (0, 1]");
  const std::int64_t keep = visible_channels_per_column(channels, p_chan_visible);
  std::vector<std::int64_t> order(static_cast<std::size_t>(channels));
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(channels * patches), 0);
    std::int64_t visible = 0;
    for (std::int64_t j = 0; j < patches; ++j) {
      if (rng.uniform() < p_time_mask) continue;
      std::iota(order.begin(), order.end(), std::int64_t{0});
      // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
      for (std::int64_t k = 0; k < keep; ++k) {
        const auto r = k + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(channels - k)));
        std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(r)]);
        bits[static_cast<std::size_t>(order[static_cast<std::size_t>(k)] * patches + j)] = 1;
      }
      visible += keep;
    }
    if (visible > 0 && visible < channels * patches) return Mask(channels, patches, std::move(bits));
  }
  throw MaskSamplingError("no non-degenerate mask after " + std::to_string(max_retries) + " draws");
}

double overlap_ratio(const Mask& m1, const Mask& m2) {
  if (m1.channels() != m2.channels() || m1.patches() != m2.patches()) throw ShapeError("overlap_ratio: mask shapes differ");
  std::int64_t inter = 0, uni = 0;
  const auto& a = m1.bits();
  const auto& b = m2.bits();
  for (std::size_t k = 0; k < a.size(); ++k) {
    inter += (a[k] & b[k]);
    uni += (a[k] | b[k]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MaskPair sample_mask_pair(std::int64_t channels, std::int64_t patches, Rng& rng, const MaskingConfig& config) {
  if (!(config.pair_redraw > 0.0 && config.pair_redraw <= 1.0)) throw std::invalid_argument("pair_redraw must lie in (0, 1]");
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    Mask m1 = sample_mask(channels, patches, config.p_time_mask, config.p_chan_visible, rng, config.max_retries);
    const Mask fresh = sample_mask(channels, patches, config.p_time_mask, config.p_chan_visible, rng, config.max_retries);
    std::vector<std::uint8_t> bits = m1.bits();
    std::int64_t visible = 0;
    for (std::int64_t j = 0; j < patches; ++j) {
      const bool redraw = config.pair_redraw >= 1.0 || rng.uniform() < config.pair_redraw;
      for (std::int64_t i = 0; i < channels; ++i) {
        const auto k = static_cast<std::size_t>(i * patches + j);
        if (redraw) bits[k] = fresh.bits()[k];
        visible += bits[k];
      }
    }
    if (visible == 0 || visible == channels * patches) continue;
    Mask m2(channels, patches, std::move(bits));
    const double ov = overlap_ratio(m1, m2);
    if (ov > config.overlap_low && ov < config.overlap_high) return MaskPair{std::move(m1), std::move(m2), ov};
  }
  throw MaskSamplingError("no mask pair with overlap in (" + std::to_string(config.overlap_low) + ", " +
                          std::to_string(config.overlap_high) + ") after " + std::to_string(config.max_retries) +
                          " draws");
}

}  // namespace dare::masking
