#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidcorr/correlation.hpp"
#include "vidcorr/data.hpp"
#include "vidcorr/encoder.hpp"
#include "vidcorr/propagation.hpp"
#include "vidcorr/spatial.hpp"
#include "vidcorr/temporal.hpp"

namespace vidcorr {

// Resolved run settings. Text form is flat `key = value` pairs under
// `[section]` headers; unknown keys are rejected so manifests stay exact.
struct RunConfig {
  // [run]
  std::uint64_t seed = 1;

  // [encoder]
  EncoderConfig encoder;

  // [data]
  SynthConfig data;
  int train_clips = 32;
  std::uint64_t data_seed = 101;

  // [spatial]
  SpatialTrainConfig spatial;

  // [temporal]
  TemporalTrainConfig temporal;

  // [propagation]
  PropagationParams propagation;

  // [eval]
  int eval_clips = 20;
  int eval_clip_length = 20;
  std::uint64_t eval_seed = 909;
  SynthConfig eval_data;  // geometry defaults mirror [data]

  RunConfig();

  // Keeps derived settings consistent (optimizer horizons, lab constants).
  void finalize();

  std::string serialize() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  void apply_override(const std::string& key, const std::string& value);
  void save(const std::string& path) const;
};

}  // namespace vidcorr
