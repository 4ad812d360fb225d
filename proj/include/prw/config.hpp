#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "prw/corpus.hpp"
#include "prw/generator.hpp"
#include "prw/parallel.hpp"
#include "prw/policy.hpp"
#include "prw/synthetic.hpp"

namespace prw {

// Flat key/value config with one [section] per module. Every default named in
// the module contracts appears in configs/reference.ini; the parsed struct is
// the single source of truth handed to the pipeline.
struct Config {
  IngestOptions ingest;
  SplitRatios ratios;
  std::uint64_t split_seed = 13;

  GeneratorConfig gateway;
  SimProfile sim;

  std::uint64_t variant_seed = 7;
  int variants_per_type = 4;
  int variant_cap_attempts = 64;

  int sl_epochs = 60;
  double sl_learning_rate = 0.3;

  RlConfig rl;
  SyntheticSpec synth;

  RunOptions run;
  std::string out_dir = "out";
};

using IniData = std::map<std::string, std::map<std::string, std::string>>;

IniData parse_ini(const std::string& text);
IniData load_ini(const std::string& path);

Config config_from_ini(const IniData& ini);
Config load_config(const std::string& path);

// The reference config text with every default spelled out.
std::string reference_config_text();

}  // namespace prw
