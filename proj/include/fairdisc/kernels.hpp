#pragma once

// Data-parallel inner loops used by the fitness evaluator and the classifiers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant compiled in its own translation unit. The AVX2 variant is selected
// at runtime when the CPU supports it. Both variants are bitwise-equivalent:
// the scalar reductions use the same four-lane accumulation order as the
// vector code, and neither variant contracts multiply-adds.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace fairdisc::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

struct MaskedCount {
  std::uint64_t selected = 0;   // popcount(mask)
  std::uint64_t favorable = 0;  // popcount(mask & outcome)

  friend bool operator==(const MaskedCount&, const MaskedCount&) = default;
};

struct KernelTable {
  Isa isa;
  MaskedCount (*masked_counts)(const std::uint64_t* mask, const std::uint64_t* outcome,
                               std::size_t words);
  std::uint64_t (*popcount)(const std::uint64_t* words, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

/// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2.
const KernelTable* avx2_kernels() noexcept;

/// Best table for this CPU. `FAIRDISC_ISA=scalar` in the environment forces
/// the reference kernels.
const KernelTable& active_kernels() noexcept;

/// Counts over the bit range [begin_bit, end_bit) of two equally sized bitsets.
/// Boundary words are masked here; interior words go through `table`.
MaskedCount range_counts(const KernelTable& table, std::span<const std::uint64_t> mask,
                         std::span<const std::uint64_t> outcome, std::size_t begin_bit,
                         std::size_t end_bit);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace fairdisc::simd
