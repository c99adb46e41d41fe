#pragma once

#include <stdexcept>
#include <string>

namespace vidcorr {

// Operand shapes do not conform to an op's shape rules, or two module-level
// structures disagree (pyramid levels, weight lists, mask sizes, ...).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// A kernel produced NaN/Inf, or a numerically impossible request was made
// (zero-norm normalization, empty pooled row, non-finite probe point).
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

// Malformed config text, unknown keys, or out-of-domain parameter values.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Archive and file format problems (bad magic, truncated payload, missing entry).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vidcorr
