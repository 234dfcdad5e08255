#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace sqs {

/// Multi-index on a d-dimensional lattice, d <= 3. Unused trailing entries are 0.
using Index3 = std::array<std::int64_t, 3>;

/// Row-major indexing of an n^d box: the first coordinate varies slowest.
struct BoxIndexer {
  int d = 1;
  std::int64_t n = 1;

  std::size_t size() const noexcept {
    std::size_t s = 1;
    for (int a = 0; a < d; ++a) s *= static_cast<std::size_t>(n);
    return s;
  }

  std::size_t linear(const Index3& i) const noexcept {
    std::size_t idx = 0;
    for (int a = 0; a < d; ++a) idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(i[a]);
    return idx;
  }

  /// Linear index after wrapping every coordinate into [0, n).
  std::size_t wrapped(Index3 i) const noexcept {
    for (int a = 0; a < d; ++a) {
      i[a] %= n;
      if (i[a] < 0) i[a] += n;
    }
    return linear(i);
  }

  Index3 multi(std::size_t idx) const noexcept {
    Index3 i{0, 0, 0};
    for (int a = d - 1; a >= 0; --a) {
      i[a] = static_cast<std::int64_t>(idx % static_cast<std::size_t>(n));
      idx /= static_cast<std::size_t>(n);
    }
    return i;
  }
};

}  // namespace sqs
