#include "segcert/tensor.hpp"

#include <cstring>

namespace segcert {

const char* dtype_name(DType dtype) {
    switch (dtype) {
        case DType::Real32: return "real32";
        case DType::Index8: return "index8";
        case DType::Index32: return "index32";
    }
    return "unknown";
}

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::Real32: return 4;
        case DType::Index8: return 1;
        case DType::Index32: return 4;
    }
    return 0;
}

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (std::uint32_t extent : shape) n *= extent;
    return shape.empty() ? 0 : n;
}

Tensor make_real32(std::vector<std::uint32_t> shape, std::vector<float> values) {
    Tensor t;
    t.dtype = DType::Real32;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

Tensor make_index8(std::vector<std::uint32_t> shape,
                   std::vector<std::uint8_t> values) {
    Tensor t;
    t.dtype = DType::Index8;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

Tensor make_index32(std::vector<std::uint32_t> shape,
                    std::vector<std::int32_t> values) {
    Tensor t;
    t.dtype = DType::Index32;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.dtype != b.dtype || a.shape != b.shape) return false;
    if (a.data.index() != b.data.index()) return false;
    switch (a.dtype) {
        case DType::Real32: {
            const auto& x = a.real32();
            const auto& y = b.real32();
            if (x.size() != y.size()) return false;
            return x.empty() ||
                   std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
        }
        case DType::Index8: return a.index8() == b.index8();
        case DType::Index32: return a.index32() == b.index32();
    }
    return false;
}

}  // namespace segcert
