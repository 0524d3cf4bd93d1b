#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cnsdiff {

// Thrown for malformed configs, bad flags, unresolvable schemas.
// The CLI maps this to exit code 2; every other exception maps to 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int resolve_threads(int requested) {
#ifdef _OPENMP
  return requested <= 0 ? omp_get_max_threads() : requested;
#else
  return requested <= 0 ? 1 : requested;
#endif
}

}  // namespace cnsdiff
