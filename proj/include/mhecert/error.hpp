#pragma once

#include <stdexcept>
#include <string>

namespace mhecert {

/// Caller violated a precondition (dimension mismatch, malformed input, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// No certificate could be found on the requested decay grid.
class CertificationFailure : public std::runtime_error {
 public:
  CertificationFailure(const std::string& what, double best_margin, double best_eta)
      : std::runtime_error(what), best_margin_(best_margin), best_eta_(best_eta) {}

  double best_margin() const noexcept { return best_margin_; }
  double best_eta() const noexcept { return best_eta_; }

 private:
  double best_margin_;
  double best_eta_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

}  // namespace detail
}  // namespace mhecert
