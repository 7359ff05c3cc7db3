#pragma once

#include <cstdint>
#include <string>

#include "rlseg/chan_vese.hpp"
#include "rlseg/eval.hpp"
#include "rlseg/rls_model.hpp"
#include "rlseg/synth_data.hpp"
#include "rlseg/trainer.hpp"

namespace rlseg {

// One JSON document drives a whole run. Every section and field is optional
// and defaults to the module defaults; unknown keys are rejected. All
// randomness derives from the single global seed (env RLS_SEED overrides it).
struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig data;
  ChanVeseConfig cls;
  RlsConfig rls;  // height/width follow the dataset
  TrainConfig train;
  BpttMode train_mode = BpttMode::truncated;
  BenchConfig bench;
};

RunConfig default_run_config();

// Parse and validate; throws ConfigError naming the file and offending key.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

// Canonical JSON of the effective configuration.
std::string run_config_canonical_json(const RunConfig& cfg);

// FNV-1a hex digest of the canonical form.
std::string run_config_digest(const RunConfig& cfg);

inline constexpr const char* kVersion = "rlseg 0.1.0";

}  // namespace rlseg
