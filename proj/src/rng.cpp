#include "spdc/rng.hpp"

namespace spdc {

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t salt) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xd1342543de82ef95ull;
  std::uint64_t b = splitmix64(s);
  s ^= salt * 0xaf251af3b0f025b5ull;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

}  // namespace spdc
