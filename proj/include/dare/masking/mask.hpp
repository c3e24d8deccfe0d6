#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dare/numerics/rng.hpp"
#include "dare/numerics/tensor.hpp"

namespace dare::masking {

class MaskSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// C x N visibility grid, 1 = visible to the encoder.
class Mask {
 public:
  // Rejects non-binary values and grids that are entirely visible or entirely masked.
  Mask(std::int64_t channels, std::int64_t patches, std::vector<std::uint8_t> bits);
  // The full view used by the target encoder and by probing.
  static Mask all_visible(std::int64_t channels, std::int64_t patches);
  static Mask from_tensor(const Tensor& grid);

  std::int64_t channels() const { return channels_; }
  std::int64_t patches() const { return patches_; }
  bool visible(std::int64_t channel, std::int64_t patch) const {
    return bits_[static_cast<std::size_t>(channel * patches_ + patch)] != 0;
  }
  bool column_visible(std::int64_t patch) const;
  std::int64_t visible_count() const;
  std::int64_t masked_count() const { return channels_ * patches_ - visible_count(); }
  std::int64_t visible_columns() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  Tensor to_tensor() const;

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.channels_ == b.channels_ && a.patches_ == b.patches_ && a.bits_ == b.bits_;
  }

 private:
  Mask() = default;
  std::int64_t channels_ = 0;
  std::int64_t patches_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct MaskingConfig {
  double p_time_mask = 0.5;
  double p_chan_visible = 0.2;
  double overlap_low = 0.2;
  double overlap_high = 0.8;
  int max_retries = 1000;
  // Probability that a column of the second proposal is drawn afresh rather
  // than copied from the first; 1 proposes two independent masks.
  double pair_redraw = 0.5;
};

struct MaskPair {
  Mask m1;
  Mask m2;
  double overlap = 0.0;
};

// Visible channels per visible column: round(p * C), at least one.
std::int64_t visible_channels_per_column(std::int64_t channels, double p_chan_visible);

// Each column is fully masked with probability p_time_mask; otherwise exactly
// visible_channels_per_column(C, p) channels chosen uniformly stay visible.
// Degenerate grids are redrawn; MaskSamplingError after max_retries draws.
Mask sample_mask(std::int64_t channels, std::int64_t patches, double p_time_mask, double p_chan_visible, Rng& rng,
                 int max_retries = 1000);

// Jaccard similarity |V1 n V2| / |V1 u V2| of the visible sets.
double overlap_ratio(const Mask& m1, const Mask& m2);

// Rejection sampler: proposes m1 ~ sample_mask and m2 column-wise from m1 (each
// column replaced by a fresh sample_mask column with probability pair_redraw),
// so m2 has the sample_mask column law, and accepts when
// overlap_low < overlap < overlap_high.
MaskPair sample_mask_pair(std::int64_t channels, std::int64_t patches, Rng& rng, const MaskingConfig& config = {});

}  // namespace dare::masking
