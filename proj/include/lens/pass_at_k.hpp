#pragma once

#include <cstddef>
#include <vector>

namespace lens {

/// Unbiased pass@k estimate 1 - C(n-c, k) / C(n, k) for one question with c
/// correct answers among n samples. Throws KTooLarge when k > n.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Mean of the per-question estimates; every question must carry n >= k
/// results.
double pass_at_k(const std::vector<std::vector<bool>>& results, std::size_t k);

/// Exact binomial coefficient as a double (exact integer arithmetic up to
/// n = 100, product form above).
double binomial(std::size_t n, std::size_t k);

}  // namespace lens
