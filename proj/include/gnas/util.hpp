#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnas {

/// Thrown when a caller violates an operation's documented contract.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Thrown on malformed external input (genotype text, config files, datasets).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define GNAS_CHECK(cond, msg)                         \
  do {                                                \
    if (!(cond)) throw ::gnas::ContractViolation(msg); \
  } while (0)

using Rng = std::mt19937_64;

/// Derives an independent RNG stream from a base seed and a stream tag.
inline Rng make_rng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{seed, stream, uint64_t{0x9e3779b97f4a7c15ULL}};
  return Rng(seq);
}

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

/// One-sided sign test: probability of >= wins successes out of n fair coins.
double sign_test_p(int wins, int n);

/// Writes a string to a file, replacing previous contents.
void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

/// Formats a double with enough digits to round-trip (for CSV output).
std::string fmt_double(double x);

}  // namespace gnas
