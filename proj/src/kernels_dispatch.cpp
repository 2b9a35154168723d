#include <bit>
#include <cstdlib>
#include <string>

#include "fairdisc/kernels.hpp"

namespace fairdisc::simd {

#if defined(FAIRDISC_HAVE_AVX2)
namespace detail {
extern const KernelTable kAvx2Table;
}
#endif

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_kernels() noexcept {
#if defined(FAIRDISC_HAVE_AVX2)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") != 0;
  }();
  return supported ? &detail::kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() noexcept {
  static const KernelTable* table = [] {
    const char* forced = std::getenv("FAIRDISC_ISA");
    if (forced != nullptr && std::string(forced) == "scalar") return &scalar_kernels();
    if (const KernelTable* avx2 = avx2_kernels()) return avx2;
    return &scalar_kernels();
  }();
  return *table;
}

MaskedCount range_counts(const KernelTable& table, std::span<const std::uint64_t> mask,
                         std::span<const std::uint64_t> outcome, std::size_t begin_bit,
                         std::size_t end_bit) {
  MaskedCount out;
  if (begin_bit >= end_bit) return out;
  const std::size_t first_word = begin_bit / 64;
  const std::size_t last_word = (end_bit - 1) / 64;
  const auto head = ~std::uint64_t{0} << (begin_bit % 64);
  const auto tail = (end_bit % 64 == 0) ? ~std::uint64_t{0}
                                        : ((std::uint64_t{1} << (end_bit % 64)) - 1);
  auto partial = [&](std::size_t w, std::uint64_t keep) {
    const std::uint64_t m = mask[w] & keep;
    out.selected += static_cast<std::uint64_t>(std::popcount(m));
    out.favorable += static_cast<std::uint64_t>(std::popcount(m & outcome[w]));
  };
  if (first_word == last_word) {
    partial(first_word, head & tail);
    return out;
  }
  partial(first_word, head);
  partial(last_word, tail);
  const std::size_t interior = last_word - first_word - 1;
  if (interior > 0) {
    const MaskedCount mid =
        table.masked_counts(mask.data() + first_word + 1, outcome.data() + first_word + 1, interior);
    out.selected += mid.selected;
    out.favorable += mid.favorable;
  }
  return out;
}

}  // namespace fairdisc::simd
