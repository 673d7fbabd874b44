#include "csl/wire.hpp"

#include <bit>
#include <cstring>

namespace csl::wire {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

bool known_opcode(std::uint8_t op) { return (op >= 0x01 && op <= 0x06) || op == 0x7F; }

std::string encode_frame(Opcode op, std::string_view payload) {
    std::string out;
    out.reserve(kHeaderSize + payload.size());
    out.push_back(static_cast<char>(op));
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    out.append(payload);
    return out;
}

std::string encode_frame(const Frame& frame) {
    std::string out;
    out.push_back(static_cast<char>(frame.opcode));
    put_u32(out, static_cast<std::uint32_t>(frame.payload.size()));
    out.append(frame.payload);
    return out;
}

Header decode_header(const unsigned char* bytes) {
    std::uint32_t len = 0;
    for (int i = 3; i >= 0; --i) len = (len << 8) | bytes[1 + i];
    return {bytes[0], len};
}

std::optional<Frame> decode_frame(std::string_view bytes, std::size_t& consumed) {
    if (bytes.size() < kHeaderSize) return std::nullopt;
    const auto h = decode_header(reinterpret_cast<const unsigned char*>(bytes.data()));
    if (bytes.size() < kHeaderSize + h.length) return std::nullopt;
    consumed = kHeaderSize + h.length;
    return Frame{h.opcode, std::string(bytes.substr(kHeaderSize, h.length))};
}

std::string encode_reals(const Vector& v) {
    std::string out;
    out.reserve(8 * static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(v[i]));
    return out;
}

Vector decode_reals(std::string_view payload, Eigen::Index expected) {
    if (payload.size() != 8 * static_cast<std::size_t>(expected)) {
        throw DomainError("wire: payload of " + std::to_string(payload.size()) + " bytes, expected " +
                          std::to_string(expected) + " reals");
    }
    Vector v(expected);
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (Eigen::Index i = 0; i < expected; ++i) v[i] = std::bit_cast<double>(get_u64(p + 8 * i));
    return v;
}

std::string encode_real(double v) {
    std::string out;
    put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

double decode_real(std::string_view payload) {
    if (payload.size() != 8) throw DomainError("wire: expected a single 8-byte real");
    return std::bit_cast<double>(get_u64(reinterpret_cast<const unsigned char*>(payload.data())));
}

}  // namespace csl::wire
