// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_SHA256_HPP
#define DRIFTTUNE_SHA256_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace drifttune {

/// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
  Sha256() { reset(); }

  void reset();
  void update(const void *bytes, std::size_t len);
  std::array<std::uint8_t, 32> digest();

  /// One-shot helper, returns lowercase hex.
  static std::string hex(const void *bytes, std::size_t len);

private:
  void process_block(const std::uint8_t *block);

  std::uint32_t state_[8];
  std::uint64_t total_len_ = 0;
  std::uint8_t buffer_[64];
  std::size_t buffer_len_ = 0;
};

std::string sha256_hex(const std::vector<double> &values);
std::string sha256_hex(const std::string &text);

} // namespace drifttune

#endif
