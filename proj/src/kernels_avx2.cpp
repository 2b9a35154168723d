// Compiled with -mavx2 (and without -mfma); only reached after a runtime CPU check.

#include <immintrin.h>

#include <bit>

#include "fairdisc/kernels.hpp"

namespace fairdisc::simd {
namespace {

// Nibble-table popcount: per-byte counts via vpshufb, summed into four 64-bit
// lanes with vpsadbw.
inline __m256i popcount_bytes_to_u64(__m256i v) {
  const __m256i lut = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,  //
                                       0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
  const __m256i low_mask = _mm256_set1_epi8(0x0f);
  const __m256i lo = _mm256_and_si256(v, low_mask);
  const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low_mask);
  const __m256i counts =
      _mm256_add_epi8(_mm256_shuffle_epi8(lut, lo), _mm256_shuffle_epi8(lut, hi));
  return _mm256_sad_epu8(counts, _mm256_setzero_si256());
}

inline std::uint64_t horizontal_sum_u64(__m256i v) {
  alignas(32) std::uint64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), v);
  return lanes[0] + lanes[1] + lanes[2] + lanes[3];
}

MaskedCount masked_counts_avx2(const std::uint64_t* mask, const std::uint64_t* outcome,
                               std::size_t words) {
  __m256i selected = _mm256_setzero_si256();
  __m256i favorable = _mm256_setzero_si256();
  std::size_t w = 0;
  for (; w + 4 <= words; w += 4) {
    const __m256i m = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(mask + w));
    const __m256i o = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(outcome + w));
    selected = _mm256_add_epi64(selected, popcount_bytes_to_u64(m));
    favorable = _mm256_add_epi64(favorable, popcount_bytes_to_u64(_mm256_and_si256(m, o)));
  }
  MaskedCount out{horizontal_sum_u64(selected), horizontal_sum_u64(favorable)};
  for (; w < words; ++w) {
    out.selected += static_cast<std::uint64_t>(std::popcount(mask[w]));
    out.favorable += static_cast<std::uint64_t>(std::popcount(mask[w] & outcome[w]));
  }
  return out;
}

std::uint64_t popcount_avx2(const std::uint64_t* words, std::size_t n) {
  __m256i acc = _mm256_setzero_si256();
  std::size_t w = 0;
  for (; w + 4 <= n; w += 4) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(words + w));
    acc = _mm256_add_epi64(acc, popcount_bytes_to_u64(v));
  }
  std::uint64_t total = horizontal_sum_u64(acc);
  for (; w < n; ++w) total += static_cast<std::uint64_t>(std::popcount(words[w]));
  return total;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    const double prod = a[i] * b[i];
    sum = sum + prod;
  }
  return sum;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) {
    const double prod = alpha * x[i];
    y[i] = y[i] + prod;
  }
}

}  // namespace

namespace detail {
extern const KernelTable kAvx2Table;
const KernelTable kAvx2Table{Isa::Avx2, &masked_counts_avx2, &popcount_avx2, &dot_avx2,
                             &axpy_avx2};
}  // namespace detail

}  // namespace fairdisc::simd
