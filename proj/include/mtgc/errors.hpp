// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mtgc {

/// Invalid user-supplied configuration (dimensions, sizes, missing pieces).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model update produced a non-finite entry or left the divergence guard.
class NumericalDivergence : public std::runtime_error {
 public:
  NumericalDivergence(const std::string& what, std::uint64_t t, std::uint64_t e,
                      std::uint64_t h, std::int64_t client)
      : std::runtime_error(what + " at (t=" + std::to_string(t) + ", e=" + std::to_string(e) +
                           ", h=" + std::to_string(h) + ", client=" + std::to_string(client) + ")"),
        t_(t), e_(e), h_(h), client_(client) {}

  std::uint64_t t() const noexcept { return t_; }
  std::uint64_t e() const noexcept { return e_; }
  std::uint64_t h() const noexcept { return h_; }
  std::int64_t client() const noexcept { return client_; }

 private:
  std::uint64_t t_, e_, h_;
  std::int64_t client_;
};

/// Power iteration did not settle; carries the sequence of eigenvalue estimates.
class EstimateFailed : public std::runtime_error {
 public:
  EstimateFailed(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class DegenerateInstance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PartitionFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchedulingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InternalStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UnavailableMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtgc
