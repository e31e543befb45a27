#ifndef BCAE_ERRORS_HPP
#define BCAE_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bcae {

// Bad shapes, bad flags, invalid channel settings. The CLI maps these to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-range message, label or index.
class InputError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A tape was replayed against a net it was not recorded on.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DegradednessError : public ConfigError {
 public:
  DegradednessError(double snr1_db, double snr2_db)
      : ConfigError("channel is not degraded: snr1_db=" + std::to_string(snr1_db) +
                    " exceeds snr2_db=" + std::to_string(snr2_db) +
                    " (user 1 must be the weaker receiver)"),
        snr1_db_(snr1_db),
        snr2_db_(snr2_db) {}

  double snr1_db() const { return snr1_db_; }
  double snr2_db() const { return snr2_db_; }

 private:
  double snr1_db_;
  double snr2_db_;
};

// Raised by training when the loss or a gradient stops being finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::uint64_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

// The encoder collapsed to an all-zero output, so power normalization is undefined.
class DegenerateEncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bcae

#endif  // BCAE_ERRORS_HPP
