#include <bit>

#include "fairdisc/kernels.hpp"

namespace fairdisc::simd {
namespace {

MaskedCount masked_counts_scalar(const std::uint64_t* mask, const std::uint64_t* outcome,
                                 std::size_t words) {
  MaskedCount out;
  for (std::size_t w = 0; w < words; ++w) {
    out.selected += static_cast<std::uint64_t>(std::popcount(mask[w]));
    out.favorable += static_cast<std::uint64_t>(std::popcount(mask[w] & outcome[w]));
  }
  return out;
}

std::uint64_t popcount_scalar(const std::uint64_t* words, std::size_t n) {
  std::uint64_t total = 0;
  for (std::size_t w = 0; w < n; ++w) total += static_cast<std::uint64_t>(std::popcount(words[w]));
  return total;
}

// Four interleaved partial sums, combined as (l0 + l1) + (l2 + l3), then the
// tail. This is the order the vector variant produces.
double dot_scalar(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double prod = a[i + j] * b[i + j];
      lane[j] = lane[j] + prod;
    }
  }
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    const double prod = a[i] * b[i];
    sum = sum + prod;
  }
  return sum;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double prod = alpha * x[i];
    y[i] = y[i] + prod;
  }
}

constexpr KernelTable kScalar{Isa::Scalar, &masked_counts_scalar, &popcount_scalar, &dot_scalar,
                              &axpy_scalar};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace fairdisc::simd
