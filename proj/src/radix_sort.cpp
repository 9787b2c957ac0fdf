#include "segcert/radix_sort.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>

namespace segcert {

namespace {

constexpr std::size_t kRadixThreshold = 2048;
constexpr int kPasses = 4;
constexpr std::size_t kBins = 1u << 16;

}  // namespace

void sort_nonneg_doubles(std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < kRadixThreshold) {
        std::sort(values.begin(), values.end());
        return;
    }

    std::vector<std::uint64_t> src(n);
    std::memcpy(src.data(), values.data(), n * sizeof(double));
    std::vector<std::uint64_t> dst(n);

    // All four histograms in one read pass.
    std::vector<std::uint64_t> counts(kPasses * kBins, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t k = src[i];
        ++counts[0 * kBins + (k & 0xFFFF)];
        ++counts[1 * kBins + ((k >> 16) & 0xFFFF)];
        ++counts[2 * kBins + ((k >> 32) & 0xFFFF)];
        ++counts[3 * kBins + (k >> 48)];
    }

    for (int pass = 0; pass < kPasses; ++pass) {
        std::uint64_t* bins = counts.data() + static_cast<std::size_t>(pass) * kBins;
        // A pass whose key byte pair is constant would be a pure copy; skip it.
        bool trivial = false;
        for (std::size_t b = 0; b < kBins; ++b) {
            if (bins[b] == n) {
                trivial = true;
                break;
            }
            if (bins[b] != 0) break;
        }
        if (trivial) continue;

        std::uint64_t offset = 0;
        for (std::size_t b = 0; b < kBins; ++b) {
            const std::uint64_t c = bins[b];
            bins[b] = offset;
            offset += c;
        }
        const int shift = pass * 16;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t k = src[i];
            dst[bins[(k >> shift) & 0xFFFF]++] = k;
        }
        std::swap(src, dst);
    }

    std::memcpy(values.data(), src.data(), n * sizeof(double));
}

}  // namespace segcert
