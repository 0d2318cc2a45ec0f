#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hns {

// Base error for everything raised by the library. Subtypes let callers
// (and the CLI exit-code mapping) tell failure classes apart.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File missing / unreadable / unwritable.
struct IoError : Error {
  using Error::Error;
};

// Container is structurally broken (bad magic, truncation, bad sizes).
struct FormatError : Error {
  using Error::Error;
};

// Container is well-formed but uses an encoding or version we do not handle.
struct UnsupportedError : Error {
  using Error::Error;
};

// Precondition violation: bad shapes, out-of-range arguments, mismatched
// configs. Maps to a usage error (exit code 2) at the CLI boundary.
struct InvalidArgument : Error {
  using Error::Error;
};

// splitmix64: cheap stateless mixing used to derive per-step / per-element
// noise seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
}

// FNV-1a, used for config hashes printed by the CLI.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hns
