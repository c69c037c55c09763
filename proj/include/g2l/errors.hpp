#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace g2l {

struct error : std::runtime_error {
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes do not conform (matmul k-mismatch, concat row mismatch, ...).
struct shape_error : error { using error::error; };
// Caller broke an API contract (non-scalar loss, repeated backward, bad ids).
struct contract_error : error { using error::error; };
// Input data fails validation (edge endpoint out of range, k > n, ...).
struct validation_error : error { using error::error; };
// Numerically degenerate input (zero Frobenius norm, non-positive normalizer).
struct degeneracy_error : error { using error::error; };
// A forward op produced NaN/Inf.
struct numeric_error : error { using error::error; };
// Malformed container / checkpoint bytes.
struct parse_error : error { using error::error; };
// Bad run configuration.
struct config_error : error { using error::error; };
// Size guard tripped (quadratic oracle over its node limit).
struct guard_error : error { using error::error; };

struct divergence_error : error {
  int64_t epoch;
  divergence_error(const std::string& what, int64_t at_epoch)
      : error(what), epoch(at_epoch) {}
};

}  // namespace g2l
