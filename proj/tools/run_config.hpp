#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dare/clp/clp.hpp"
#include "dare/data/segments.hpp"
#include "dare/harness/pretrain.hpp"
#include "dare/harness/probe.hpp"

namespace dare::cli {

// Bad invocation: unknown key, malformed value, missing argument. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string key;
  std::string default_value;
  // "reported": value taken from the published method; "chosen": an implementation choice.
  std::string provenance;
  std::string help;
};

const std::vector<KeySpec>& key_specs();

// Flat key=value configuration shared by every subcommand.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void set_assignment(const std::string& assignment);
  // One assignment per line; blank lines and '#' comments ignored.
  void load_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  // Every key in registry order with its provenance as a trailing comment.
  std::string render() const;

  model::ModelConfig model() const;
  masking::MaskingConfig masking() const;
  harness::PretrainConfig pretrain() const;
  harness::ProbeConfig probe(std::int64_t c_in) const;
  data::SyntheticConfig synthetic() const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
  std::uint64_t data_seed() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dare::cli
