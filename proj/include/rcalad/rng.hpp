#pragma once

#include <cstdint>
#include <string_view>

namespace rcalad {

/// Counter-based random stream. A draw is a pure function of
/// (key, counter), so the full state is two integers and named child
/// streams never perturb each other.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed = 0);

  /// Independent child stream keyed by a name or an index.
  RngStream derive(std::string_view name) const;
  RngStream derive(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; consumes two draws, caches nothing.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t counter) noexcept { counter_ = counter; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

private:
  RngStream(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

} // namespace rcalad
