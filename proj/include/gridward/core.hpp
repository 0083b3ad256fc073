#pragma once

#include <compare>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridward {

// ---------------------------------------------------------------------------
// Strong identifiers. Every id is the dense index of the element in its
// owning GridCase container.
// ---------------------------------------------------------------------------
template <class Tag>
struct StrongId {
   int value = -1;

   constexpr StrongId() = default;
   constexpr explicit StrongId(int v) : value(v) {}
   constexpr explicit StrongId(std::size_t v) : value(static_cast<int>(v)) {}

   [[nodiscard]] constexpr std::size_t index() const { return static_cast<std::size_t>(value); }
   [[nodiscard]] constexpr bool valid() const { return value >= 0; }

   friend constexpr auto operator<=>(StrongId, StrongId) = default;
};

using LineId = StrongId<struct LineTag>;
using SubstationId = StrongId<struct SubstationTag>;
using GeneratorId = StrongId<struct GeneratorTag>;
using LoadId = StrongId<struct LoadTag>;
using ZoneId = StrongId<struct ZoneTag>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
class Error : public std::runtime_error {
  public:
   using std::runtime_error::runtime_error;
};

/// Malformed input (file syntax, bad field type). The message carries the
/// file/line/field context.
class ParseError : public Error {
  public:
   using Error::Error;
};

/// Input parsed but violates one or more invariants; all violations are kept.
class ValidationError : public Error {
  public:
   explicit ValidationError(std::vector<std::string> violations)
       : Error(join(violations)), violations_(std::move(violations))
   {
   }

   [[nodiscard]] const std::vector<std::string>& violations() const { return violations_; }

  private:
   static std::string join(const std::vector<std::string>& v)
   {
      std::string out = "validation failed:";
      for(const auto& s : v) {
         out += "\n  - ";
         out += s;
      }
      return out;
   }

   std::vector<std::string> violations_;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------
inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
   x += 0x9E3779B97F4A7C15ULL;
   x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
   x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
   return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL)
{
   for(unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
   }
   return h;
}

/// Seed of a named sub-stream. Streams with different names are independent
/// for all practical purposes; adding a stream never perturbs another one.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream)
{
   return splitmix64(seed ^ splitmix64(fnv1a(stream)));
}

/// mt19937_64 with hand-written variate transforms, so draws are identical
/// across standard library implementations. Counts draws so the full stream
/// state can be hashed cheaply as (seed, draws).
class Rng {
  public:
   Rng() : Rng(0) {}
   explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

   std::uint64_t next_u64()
   {
      ++draws_;
      return engine_();
   }

   /// Uniform on (0, 1].
   double uniform_open0()
   {
      return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
   }

   /// Uniform on [0, 1).
   double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

   /// Standard normal via Box-Muller; consumes two draws, no caching.
   double normal()
   {
      const double u1 = uniform_open0();
      const double u2 = uniform();
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
   }

   double exponential(double mean) { return -mean * std::log(uniform_open0()); }

   /// Index drawn from a discrete distribution given non-negative weights.
   /// Returns weights.size() when every weight is zero.
   std::size_t categorical(const std::vector<double>& weights)
   {
      double total = 0.0;
      for(double w : weights)
         total += w;
      if(!(total > 0.0))
         return weights.size();
      const double r = uniform() * total;
      double acc = 0.0;
      std::size_t last_positive = weights.size();
      for(std::size_t i = 0; i < weights.size(); ++i) {
         if(weights[i] <= 0.0)
            continue;
         acc += weights[i];
         last_positive = i;
         if(r < acc)
            return i;
      }
      return last_positive;
   }

   [[nodiscard]] std::uint64_t seed() const { return seed_; }
   [[nodiscard]] std::uint64_t draws() const { return draws_; }

  private:
   std::uint64_t seed_;
   std::uint64_t draws_ = 0;
   std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Incremental 64-bit FNV-1a over raw values, used for state hashes.
// ---------------------------------------------------------------------------
class StateHasher {
  public:
   template <class T>
      requires std::is_trivially_copyable_v<T>
   void add(const T& v)
   {
      const auto* p = reinterpret_cast<const unsigned char*>(&v);
      for(std::size_t i = 0; i < sizeof(T); ++i) {
         h_ ^= p[i];
         h_ *= 0x100000001b3ULL;
      }
   }

   template <class T>
   void add_range(const std::vector<T>& v)
   {
      add(v.size());
      for(const auto& x : v)
         add(static_cast<T>(x));
   }

   [[nodiscard]] std::uint64_t value() const { return h_; }

  private:
   std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace gridward
