#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iviq {

// Error hierarchy. Callers catch `Error` for anything raised by the library;
// subclasses let the service layer map failures onto HTTP statuses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Requested feature is not supported by the loaded corpus (e.g. Ask Segment
// without half-segment embeddings).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  ProviderError(std::string endpoint, const std::string& message, int attempts = 1, int status = 0)
      : Error(endpoint + ": " + message + (attempts > 1 ? " (after " + std::to_string(attempts) + " attempts)" : "")),
        endpoint_(std::move(endpoint)),
        attempts_(attempts),
        status_(status) {}

  const std::string& endpoint() const noexcept { return endpoint_; }
  int attempts() const noexcept { return attempts_; }
  int status() const noexcept { return status_; }

 private:
  std::string endpoint_;
  int attempts_;
  int status_;
};

class TimeoutError : public Error {
 public:
  using Error::Error;
};

enum class Segment { whole, first_half, second_half };

std::string_view to_string(Segment s) noexcept;
Segment segment_from_string(std::string_view s);

namespace text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Lowercase answer normalization applied by every answer provider.
std::string normalize_answer(std::string_view s);

// Lowercase, drop every literal "[SEP]", replace non-alphanumeric bytes with
// spaces and split on whitespace. Order and duplicates are preserved.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix) noexcept;

}  // namespace text

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

// SplitMix64: the fixed-algorithm generator behind every seeded synthetic
// decision. Portable bit-for-bit, unlike the <random> distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept { return next() % n; }

 private:
  std::uint64_t state_;
};

// Mixes a seed with a string key; used to derive independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) noexcept;

}  // namespace iviq
