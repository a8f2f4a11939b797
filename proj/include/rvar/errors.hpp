// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rvar {

// Bad user-supplied configuration (unknown key, unparsable value).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data (file corruption, shape mismatch).
struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown (non-finite loss, failed factorization).
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rvar
