#pragma once

#include <stdexcept>
#include <string>

namespace rmf {

// Base for everything thrown by this library. Catching rmf::error catches all
// of config_error, state_error, divergence_error, io_error, metric_error.
struct error : std::runtime_error {
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration: bad dimensions, unknown keys,
// malformed factor values.
struct config_error : error {
  explicit config_error(const std::string& what) : error(what) {}
};

// Operation applied to an object in the wrong state: mismatched recurrent
// state shape, sampling from an empty buffer, episode longer than capacity.
struct state_error : error {
  explicit state_error(const std::string& what) : error(what) {}
};

// Non-finite value encountered during training. Carries the update index at
// which it happened; the training loop augments with the env step.
struct divergence_error : error {
  long long update_index = -1;
  explicit divergence_error(const std::string& what, long long update = -1)
      : error(update >= 0 ? what + " (update " + std::to_string(update) + ")" : what),
        update_index(update) {}
};

// Filesystem and serialization failures: unwritable directory, truncated or
// corrupt archive, fingerprint mismatch on load.
struct io_error : error {
  explicit io_error(const std::string& what) : error(what) {}
};

// Metric preconditions violated: empty curve, too few tasks, mismatched
// variant sets.
struct metric_error : error {
  explicit metric_error(const std::string& what) : error(what) {}
};

}  // namespace rmf
