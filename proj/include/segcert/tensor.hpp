#ifndef SEGCERT_TENSOR_HPP
#define SEGCERT_TENSOR_HPP

#include <cstdint>
#include <variant>
#include <vector>

namespace segcert {

// Element kinds supported by the SEGT container. The enum values are the
// on-disk dtype codes.
enum class DType : std::uint8_t {
    Real32 = 0x01,   // little-endian IEEE-754 binary32
    Index8 = 0x02,   // unsigned byte
    Index32 = 0x03,  // little-endian signed 32-bit
};

const char* dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

// Dense row-major tensor, rank 1-4, last axis fastest.
struct Tensor {
    DType dtype = DType::Real32;
    std::vector<std::uint32_t> shape;
    std::variant<std::vector<float>, std::vector<std::uint8_t>,
                 std::vector<std::int32_t>>
        data;

    std::size_t element_count() const;

    const std::vector<float>& real32() const { return std::get<0>(data); }
    const std::vector<std::uint8_t>& index8() const { return std::get<1>(data); }
    const std::vector<std::int32_t>& index32() const { return std::get<2>(data); }
};

Tensor make_real32(std::vector<std::uint32_t> shape, std::vector<float> values);
Tensor make_index8(std::vector<std::uint32_t> shape,
                   std::vector<std::uint8_t> values);
Tensor make_index32(std::vector<std::uint32_t> shape,
                    std::vector<std::int32_t> values);

// Exact equality, comparing float payloads bit for bit.
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace segcert

#endif
