#ifndef SEGCERT_TENSOR_IO_HPP
#define SEGCERT_TENSOR_IO_HPP

#include <string>
#include <vector>

#include "segcert/errors.hpp"
#include "segcert/tensor.hpp"

namespace segcert {

// SEGT container, version 1.
//
//   bytes 0-3   ASCII "SEGT"
//   byte  4     version, 0x01
//   byte  5     dtype code (see DType)
//   byte  6     rank, 1-4
//   byte  7     reserved, must be 0x00
//   then        rank x u32 little-endian extents, each > 0
//   then        payload, row-major, no padding, no trailing bytes

enum class TensorIoCode {
    BadMagic,
    UnsupportedVersion,
    UnsupportedDtype,
    UnsupportedRank,
    ReservedByteNonzero,
    ZeroExtent,
    ExtentOverflow,
    TruncatedHeader,
    TruncatedPayload,
    TrailingBytes,
    IoFailure,
};

const char* tensor_io_code_name(TensorIoCode code);

class TensorIoError : public Error {
public:
    TensorIoError(TensorIoCode code, const std::string& what)
        : Error(what), code_(code) {}
    TensorIoCode code() const { return code_; }

private:
    TensorIoCode code_;
};

// Largest element count a SEGT file may declare.
inline constexpr std::uint64_t kMaxTensorElements = (1ull << 31) - 1;

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);

Tensor read_tensor(const std::string& path);
void write_tensor(const Tensor& tensor, const std::string& path);

}  // namespace segcert

#endif
