#include "segcert/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace segcert {
namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'E', 'G', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kHeaderSize = 8;

[[noreturn]] void fail(TensorIoCode code, const std::string& detail) {
    throw TensorIoError(code, std::string(tensor_io_code_name(code)) + ": " + detail);
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

const char* tensor_io_code_name(TensorIoCode code) {
    switch (code) {
        case TensorIoCode::BadMagic: return "BadMagic";
        case TensorIoCode::UnsupportedVersion: return "UnsupportedVersion";
        case TensorIoCode::UnsupportedDtype: return "UnsupportedDtype";
        case TensorIoCode::UnsupportedRank: return "UnsupportedRank";
        case TensorIoCode::ReservedByteNonzero: return "ReservedByteNonzero";
        case TensorIoCode::ZeroExtent: return "ZeroExtent";
        case TensorIoCode::ExtentOverflow: return "ExtentOverflow";
        case TensorIoCode::TruncatedHeader: return "TruncatedHeader";
        case TensorIoCode::TruncatedPayload: return "TruncatedPayload";
        case TensorIoCode::TrailingBytes: return "TrailingBytes";
        case TensorIoCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kHeaderSize)
        fail(TensorIoCode::TruncatedHeader, "file shorter than the 8-byte header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        fail(TensorIoCode::BadMagic, "expected magic 'SEGT'");
    if (bytes[4] != kVersion)
        fail(TensorIoCode::UnsupportedVersion,
             "version byte " + std::to_string(bytes[4]));
    std::uint8_t dtype_code = bytes[5];
    if (dtype_code < 0x01 || dtype_code > 0x03)
        fail(TensorIoCode::UnsupportedDtype,
             "dtype code " + std::to_string(dtype_code));
    DType dtype = static_cast<DType>(dtype_code);
    std::uint8_t rank = bytes[6];
    if (rank < 1 || rank > 4)
        fail(TensorIoCode::UnsupportedRank, "rank " + std::to_string(rank));
    if (bytes[7] != 0x00)
        fail(TensorIoCode::ReservedByteNonzero,
             "reserved byte " + std::to_string(bytes[7]));

    std::size_t offset = kHeaderSize;
    if (bytes.size() < offset + 4u * rank)
        fail(TensorIoCode::TruncatedHeader, "extent table cut short");
    std::vector<std::uint32_t> shape(rank);
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
        shape[i] = get_u32le(bytes.data() + offset);
        offset += 4;
        if (shape[i] == 0)
            fail(TensorIoCode::ZeroExtent, "extent " + std::to_string(i) + " is zero");
        count *= shape[i];
        if (count > kMaxTensorElements)
            fail(TensorIoCode::ExtentOverflow,
                 "element count exceeds 2^31-1");
    }

    std::size_t payload = static_cast<std::size_t>(count) * dtype_size(dtype);
    if (bytes.size() < offset + payload)
        fail(TensorIoCode::TruncatedPayload,
             "need " + std::to_string(payload) + " payload bytes, have " +
                 std::to_string(bytes.size() - offset));
    if (bytes.size() > offset + payload)
        fail(TensorIoCode::TrailingBytes,
             std::to_string(bytes.size() - offset - payload) +
                 " bytes past the payload");

    const std::uint8_t* src = bytes.data() + offset;
    Tensor t;
    t.dtype = dtype;
    t.shape = std::move(shape);
    switch (dtype) {
        case DType::Real32: {
            std::vector<float> values(count);
            // u32 assembly keeps the decode byte-order independent.
            for (std::uint64_t i = 0; i < count; ++i) {
                std::uint32_t bits = get_u32le(src + 4 * i);
                float f;
                std::memcpy(&f, &bits, 4);
                values[i] = f;
            }
            t.data = std::move(values);
            break;
        }
        case DType::Index8: {
            std::vector<std::uint8_t> values(src, src + count);
            t.data = std::move(values);
            break;
        }
        case DType::Index32: {
            std::vector<std::int32_t> values(count);
            for (std::uint64_t i = 0; i < count; ++i) {
                std::uint32_t bits = get_u32le(src + 4 * i);
                std::int32_t s;
                std::memcpy(&s, &bits, 4);
                values[i] = s;
            }
            t.data = std::move(values);
            break;
        }
    }
    return t;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    if (tensor.shape.empty() || tensor.shape.size() > 4)
        fail(TensorIoCode::UnsupportedRank,
             "rank " + std::to_string(tensor.shape.size()));
    std::uint64_t count = 1;
    for (std::uint32_t extent : tensor.shape) {
        if (extent == 0) fail(TensorIoCode::ZeroExtent, "zero extent");
        count *= extent;
        if (count > kMaxTensorElements)
            fail(TensorIoCode::ExtentOverflow, "element count exceeds 2^31-1");
    }

    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + 4 * tensor.shape.size() +
                count * dtype_size(tensor.dtype));
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(tensor.dtype));
    out.push_back(static_cast<std::uint8_t>(tensor.shape.size()));
    out.push_back(0x00);
    for (std::uint32_t extent : tensor.shape) put_u32le(out, extent);

    switch (tensor.dtype) {
        case DType::Real32: {
            const auto& values = tensor.real32();
            if (values.size() != count)
                throw ShapeError("real32 payload does not match shape");
            for (float f : values) {
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32le(out, bits);
            }
            break;
        }
        case DType::Index8: {
            const auto& values = tensor.index8();
            if (values.size() != count)
                throw ShapeError("index8 payload does not match shape");
            out.insert(out.end(), values.begin(), values.end());
            break;
        }
        case DType::Index32: {
            const auto& values = tensor.index32();
            if (values.size() != count)
                throw ShapeError("index32 payload does not match shape");
            for (std::int32_t s : values) {
                std::uint32_t bits;
                std::memcpy(&bits, &s, 4);
                put_u32le(out, bits);
            }
            break;
        }
    }
    return out;
}

Tensor read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(TensorIoCode::IoFailure, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad())
        fail(TensorIoCode::IoFailure, "read error on " + path);
    return decode_tensor(bytes);
}

void write_tensor(const Tensor& tensor, const std::string& path) {
    std::vector<std::uint8_t> bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(TensorIoCode::IoFailure, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
        fail(TensorIoCode::IoFailure, "write error on " + path);
}

}  // namespace segcert
