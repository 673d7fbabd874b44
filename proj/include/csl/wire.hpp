#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "csl/common.hpp"

// Worker wire protocol. Every integer and real is little-endian.
//
//   frame   = opcode (1 byte) | payload length (u32) | payload
//   0x01 LOAD_SHARD       dataset CSV bytes
//   0x02 EVAL_GRAD        d reals (theta)
//   0x03 GRAD_REPLY       d reals (local gradient)
//   0x04 LOCAL_MIN_REQ    1 real (solver gradient tolerance)
//   0x05 LOCAL_MIN_REPLY  d reals (local minimizer)
//   0x06 SHUTDOWN         empty
//   0x7F ERROR            UTF-8 message; the sender closes the connection
namespace csl::wire {

enum class Opcode : std::uint8_t {
    LoadShard = 0x01,
    EvalGrad = 0x02,
    GradReply = 0x03,
    LocalMinReq = 0x04,
    LocalMinReply = 0x05,
    Shutdown = 0x06,
    Error = 0x7F,
};

inline constexpr std::size_t kHeaderSize = 5;

struct Frame {
    std::uint8_t opcode = 0;
    std::string payload;

    bool is(Opcode op) const { return opcode == static_cast<std::uint8_t>(op); }
};

bool known_opcode(std::uint8_t op);

std::string encode_frame(Opcode op, std::string_view payload);
std::string encode_frame(const Frame& frame);

struct Header {
    std::uint8_t opcode;
    std::uint32_t length;
};
Header decode_header(const unsigned char* bytes);

/// Parses one complete frame from the front of `bytes`; nullopt when more
/// bytes are needed. On success `consumed` is set to the frame's size.
std::optional<Frame> decode_frame(std::string_view bytes, std::size_t& consumed);

std::string encode_reals(const Vector& v);
/// Throws DomainError unless the payload holds exactly `expected` reals.
Vector decode_reals(std::string_view payload, Eigen::Index expected);
std::string encode_real(double v);
double decode_real(std::string_view payload);

}  // namespace csl::wire
