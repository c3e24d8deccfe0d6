#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dare/numerics/rng.hpp"
#include "dare/numerics/tensor.hpp"

namespace dare::data {

// B x C x T windows with optional class labels.
struct SegmentBatch {
  Tensor signals;
  std::optional<std::vector<std::int32_t>> labels;
  double sample_rate = 256.0;
  std::int32_t num_classes = 0;

  std::int64_t size() const { return signals.rank() == 3 ? signals.dim(0) : 0; }
  std::int64_t channels() const { return signals.dim(1); }
  std::int64_t samples() const { return signals.dim(2); }

  // Throws std::invalid_argument when labels are out of range or T is not a
  // multiple of `patch_len` (pass 0 to skip the patch check).
  void validate(std::int64_t patch_len = 0) const;

  // Rows `index` of this batch, in the given order.
  SegmentBatch select(const std::vector<std::int64_t>& index) const;
};

struct SyntheticConfig {
  std::int32_t num_classes = 2;
  std::int64_t channels = 8;
  std::int64_t samples = 1024;
  double sample_rate = 256.0;
  // One carrier frequency (Hz) per class.
  std::vector<double> carrier_hz = {10.0, 20.0};
  // One amplitude per channel for each class.
  std::vector<std::vector<double>> topology;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Default topology: class k emphasises a different half of the montage.
std::vector<std::vector<double>> default_topology(std::int32_t num_classes, std::int64_t channels);

// Each segment: topology[class][c] * sin(2 pi f t + phase) + N(0, noise_std^2),
// phase ~ U[0, 2 pi) shared across channels. Labels are balanced and the
// segments are emitted class-interleaved (0, 1, ..., K-1, 0, 1, ...).
SegmentBatch generate_synthetic(const SyntheticConfig& config, std::int64_t n_per_class);

// Linear interpolation onto a new sample-rate grid; T_out = round(T_in * fs_out / fs_in).
// Output sample k sits at time k / fs_out clamped to the last input sample.
Tensor resample_linear(const Tensor& x, double fs_in, double fs_out);

// Deterministic split: every `holdout_every`-th segment goes to the second batch,
// counted within each class for labeled batches (by index otherwise). Order is kept.
std::pair<SegmentBatch, SegmentBatch> split_holdout(const SegmentBatch& batch, std::int64_t holdout_every);

// ---------------------------------------------------------------- container
//   "DSEG" | version u32 | C u32 | T u32 | n_segments u32 | n_classes u32 | sample_rate u32 (Hz) |
//   f32 x (n_segments * C * T) | u32 labels x n_segments (present iff n_classes > 0)
inline constexpr std::uint32_t kSegmentVersion = 1;

std::string encode_segments(const SegmentBatch& batch);
SegmentBatch decode_segments(const std::string& bytes);
void write_segments(const std::string& path, const SegmentBatch& batch);
SegmentBatch read_segments(const std::string& path);

// "index,label" rows for inspection.
void write_labels_csv(const std::string& path, const SegmentBatch& batch);

}  // namespace dare::data
