#include "dare/data/segments.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "dare/numerics/binary_io.hpp"

namespace dare::data {

void SegmentBatch::validate(std::int64_t patch_len) const {
  if (signals.rank() != 3) throw std::invalid_argument("segment signals must be B x C x T");
  if (patch_len > 0 && samples() % patch_len != 0) {
    throw std::invalid_argument("segment length " + std::to_string(samples()) + " is not a multiple of patch length " +
                                std::to_string(patch_len));
  }
  if (labels) {
    if (static_cast<std::int64_t>(labels->size()) != size()) throw std::invalid_argument("label count mismatch");
    for (auto y : *labels) {
      if (y < 0 || y >= num_classes) throw std::invalid_argument("label " + std::to_string(y) + " out of range");
    }
  }
  if (!(sample_rate > 0)) throw std::invalid_argument("sample rate must be positive");
}

SegmentBatch SegmentBatch::select(const std::vector<std::int64_t>& index) const {
  const std::int64_t c = channels(), t = samples();
  SegmentBatch out;
  out.signals = Tensor({static_cast<std::int64_t>(index.size()), c, t});
  out.sample_rate = sample_rate;
  out.num_classes = num_classes;
  if (labels) out.labels.emplace();
  for (std::size_t k = 0; k < index.size(); ++k) {
    const std::int64_t i = index[k];
    if (i < 0 || i >= size()) throw std::out_of_range("segment index out of range");
    std::copy_n(signals.data() + i * c * t, c * t, out.signals.data() + static_cast<std::int64_t>(k) * c * t);
    if (labels) out.labels->push_back((*labels)[static_cast<std::size_t>(i)]);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (channels < 1 || samples < 2) throw std::invalid_argument("synthetic geometry must have C >= 1 and T >= 2");
  if (!(sample_rate > 0)) throw std::invalid_argument("sample rate must be positive");
  if (static_cast<std::int32_t>(carrier_hz.size()) != num_classes) {
    throw std::invalid_argument("need one carrier frequency per class");
  }
  for (double f : carrier_hz) {
    if (!(f > 0) || f >= sample_rate / 2) throw std::invalid_argument("carrier frequencies must lie in (0, fs/2)");
  }
  if (!topology.empty()) {
    if (static_cast<std::int32_t>(topology.size()) != num_classes) {
      throw std::invalid_argument("need one topology row per class");
    }
    for (const auto& row : topology) {
      if (static_cast<std::int64_t>(row.size()) != channels) throw std::invalid_argument("topology row length != C");
    }
  }
  if (noise_std < 0) throw std::invalid_argument("noise_std must be non-negative");
}

std::vector<std::vector<double>> default_topology(std::int32_t num_classes, std::int64_t channels) {
  std::vector<std::vector<double>> topo(static_cast<std::size_t>(num_classes),
                                        std::vector<double>(static_cast<std::size_t>(channels)));
  for (std::int32_t k = 0; k < num_classes; ++k) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const double phase = 2.0 * std::numbers::pi *
                           (static_cast<double>(c) / static_cast<double>(channels) -
                            static_cast<double>(k) / static_cast<double>(num_classes));
      topo[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = 1.0 + 0.5 * std::cos(phase);
    }
  }
  return topo;
}

SegmentBatch generate_synthetic(const SyntheticConfig& config, std::int64_t n_per_class) {
  config.validate();
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  const auto topo = config.topology.empty() ? default_topology(config.num_classes, config.channels) : config.topology;
  const std::int64_t n = n_per_class * config.num_classes;
  const std::int64_t c = config.channels, t = config.samples;
  SegmentBatch out;
  out.signals = Tensor({n, c, t});
  out.labels.emplace();
  out.sample_rate = config.sample_rate;
  out.num_classes = config.num_classes;
  Rng rng(config.seed);
  for (std::int64_t s = 0; s < n; ++s) {
    const auto k = static_cast<std::int32_t>(s % config.num_classes);
    out.labels->push_back(k);
    const double omega = 2.0 * std::numbers::pi * config.carrier_hz[static_cast<std::size_t>(k)] / config.sample_rate;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double amp = topo[static_cast<std::size_t>(k)][static_cast<std::size_t>(ch)];
      Real* row = out.signals.data() + (s * c + ch) * t;
      for (std::int64_t i = 0; i < t; ++i) {
        double v = amp * std::sin(omega * static_cast<double>(i) + phase);
        if (config.noise_std > 0) v += config.noise_std * rng.normal();
        row[i] = static_cast<Real>(v);
      }
    }
  }
  return out;
}

Tensor resample_linear(const Tensor& x, double fs_in, double fs_out) {
  if (!(fs_in > 0) || !(fs_out > 0)) throw std::invalid_argument("sample rates must be positive");
  if (x.rank() != 2) throw ShapeError("resample_linear expects C x T");
  const std::int64_t c = x.dim(0), t_in = x.dim(1);
  if (t_in < 2) throw std::invalid_argument("resample_linear needs at least two input samples");
  if (fs_in == fs_out) return x;
  const auto t_out = static_cast<std::int64_t>(std::llround(static_cast<double>(t_in) * fs_out / fs_in));
  if (t_out < 1) throw std::invalid_argument("resampled length is zero");
  Tensor out({c, t_out});
  const double ratio = fs_in / fs_out;
  for (std::int64_t k = 0; k < t_out; ++k) {
    const double pos = std::min(static_cast<double>(k) * ratio, static_cast<double>(t_in - 1));
    auto i0 = static_cast<std::int64_t>(std::floor(pos));
    if (i0 >= t_in - 1) i0 = t_in - 2;
    const double w = pos - static_cast<double>(i0);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double a = x.at(ch, i0);
      const double b = x.at(ch, i0 + 1);
      out.at(ch, k) = static_cast<Real>(a + w * (b - a));
    }
  }
  return out;
}

std::pair<SegmentBatch, SegmentBatch> split_holdout(const SegmentBatch& batch, std::int64_t holdout_every) {
  if (holdout_every < 2) throw std::invalid_argument("holdout_every must be >= 2");
  std::vector<std::int64_t> keep, hold;
  // Labeled batches count positions within each class so both splits stay stratified.
  std::vector<std::int64_t> seen(static_cast<std::size_t>(std::max(batch.num_classes, 1)), 0);
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    const auto c = batch.labels ? static_cast<std::size_t>((*batch.labels)[static_cast<std::size_t>(i)]) : 0;
    if (c >= seen.size()) seen.resize(c + 1, 0);
    ((seen[c]++ % holdout_every) == holdout_every - 1 ? hold : keep).push_back(i);
  }
  return {batch.select(keep), batch.select(hold)};
}

std::string encode_segments(const SegmentBatch& batch) {
  batch.validate();
  const double fs = batch.sample_rate;
  if (fs != std::floor(fs)) throw FormatError(FormatErrorKind::invalid, "container stores integral sample rates only");
  std::ostringstream os(std::ios::binary);
  os.write("DSEG", 4);
  binary::put_u32(os, kSegmentVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(batch.channels()));
  binary::put_u32(os, static_cast<std::uint32_t>(batch.samples()));
  binary::put_u32(os, static_cast<std::uint32_t>(batch.size()));
  const std::uint32_t classes = batch.labels ? static_cast<std::uint32_t>(batch.num_classes) : 0U;
  binary::put_u32(os, classes);
  binary::put_u32(os, static_cast<std::uint32_t>(fs));
  for (Real v : batch.signals.values()) binary::put_f32(os, static_cast<float>(v));
  if (classes > 0) {
    for (auto y : *batch.labels) binary::put_u32(os, static_cast<std::uint32_t>(y));
  }
  return os.str();
}

SegmentBatch decode_segments(const std::string& bytes) {
  binary::Reader in(std::vector<char>(bytes.begin(), bytes.end()));
  if (in.remaining() < 4) throw FormatError(FormatErrorKind::truncated, "file shorter than magic");
  if (in.bytes(4, "magic") != "DSEG") throw FormatError(FormatErrorKind::bad_magic, "not a segment container");
  const std::uint32_t version = in.u32("version");
  if (version != kSegmentVersion) {
    throw FormatError(FormatErrorKind::version_mismatch, "segment container version " + std::to_string(version));
  }
  const std::uint32_t c = in.u32("header"), t = in.u32("header"), n = in.u32("header");
  const std::uint32_t classes = in.u32("header"), fs = in.u32("header");
  if (c == 0 || t == 0 || n == 0 || fs == 0) throw FormatError(FormatErrorKind::invalid, "zero-sized header field");
  const std::size_t numel = static_cast<std::size_t>(n) * c * t;
  in.need(numel * 4 + (classes > 0 ? static_cast<std::size_t>(n) * 4 : 0), "payload");
  SegmentBatch out;
  std::vector<Real> data(numel);
  for (auto& v : data) v = static_cast<Real>(in.f32("payload"));
  out.signals = Tensor({n, c, t}, std::move(data));
  out.sample_rate = fs;
  out.num_classes = static_cast<std::int32_t>(classes);
  if (classes > 0) {
    out.labels.emplace();
    for (std::uint32_t i = 0; i < n; ++i) out.labels->push_back(static_cast<std::int32_t>(in.u32("labels")));
  }
  try {
    out.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrorKind::invalid, e.what());
  }
  return out;
}

void write_segments(const std::string& path, const SegmentBatch& batch) {
  binary::write_file_atomic(path, encode_segments(batch));
}

SegmentBatch read_segments(const std::string& path) {
  const auto bytes = binary::read_file(path);
  return decode_segments(std::string(bytes.begin(), bytes.end()));
}

void write_labels_csv(const std::string& path, const SegmentBatch& batch) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot open " + path);
  out << "index,label\n";
  if (!batch.labels) return;
  for (std::size_t i = 0; i < batch.labels->size(); ++i) out << i << ',' << (*batch.labels)[i] << '\n';
}

}  // namespace dare::data
