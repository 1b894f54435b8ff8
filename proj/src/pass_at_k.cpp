#include "lens/pass_at_k.hpp"

#include <algorithm>
#include <string>

#include "lens/types.hpp"

namespace lens {

namespace {

constexpr std::size_t kExactLimit = 100;

__extension__ using u128 = unsigned __int128;

u128 exact_binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 c = 1;
  for (std::size_t i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
  return c;
}

}  // namespace

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  if (n <= kExactLimit) return static_cast<double>(exact_binomial(n, k));
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return c;
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  if (k > n) {
    throw KTooLarge("KTooLarge: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  }
  if (c > n) throw SizeError("SizeError: more correct answers than samples");
  if (n - c < k) return 1.0;
  if (n <= kExactLimit) {
    return 1.0 - static_cast<double>(exact_binomial(n - c, k)) /
                     static_cast<double>(exact_binomial(n, k));
  }
  // prod_{i = n-c+1}^{n} (1 - k / i)
  double miss = 1.0;
  for (std::size_t i = n - c + 1; i <= n; ++i) {
    miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - miss;
}

double pass_at_k(const std::vector<std::vector<bool>>& results, std::size_t k) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) {
    const auto c = static_cast<std::size_t>(std::count(r.begin(), r.end(), true));
    total += pass_at_k(r.size(), c, k);
  }
  return total / static_cast<double>(results.size());
}

}  // namespace lens
