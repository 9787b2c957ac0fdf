#ifndef SEGCERT_RADIX_SORT_HPP
#define SEGCERT_RADIX_SORT_HPP

#include <vector>

namespace segcert {

// Ascending sort of non-negative finite doubles. For such values the IEEE-754
// bit pattern ordering (as unsigned) matches the value ordering, so large
// inputs take an LSD radix path (4 passes of 16 bits) that beats comparison
// sorting by a wide margin on million-pixel radius maps. Small inputs fall
// back to std::sort.
void sort_nonneg_doubles(std::vector<double>& values);

}  // namespace segcert

#endif
