#pragma once

// Builds classic pcap captures byte by byte for parser fixtures.

#include <cstdint>
#include <string>
#include <vector>

namespace tdntc::testing {

struct FixturePacket {
  std::uint32_t sec = 0;
  std::uint32_t frac = 0;  // microseconds, or nanoseconds for nano captures
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::uint8_t proto = 17;
  std::uint16_t payload = 0;    // transport payload bytes
  std::uint16_t frag_bits = 0;  // raw flags+offset field
  std::uint16_t ethertype = 0x0800;
};

inline constexpr std::uint32_t ip(int a, int b, int c, int d) {
  return (static_cast<std::uint32_t>(a) << 24) | (static_cast<std::uint32_t>(b) << 16) |
         (static_cast<std::uint32_t>(c) << 8) | static_cast<std::uint32_t>(d);
}

class PcapBuilder {
 public:
  explicit PcapBuilder(bool big_endian = false, bool nanosecond = false, std::uint32_t linktype = 1)
      : big_(big_endian) {
    put32(nanosecond ? 0xA1B23C4D : 0xA1B2C3D4);
    put16(2);
    put16(4);
    put32(0);
    put32(0);
    put32(65535);
    put32(linktype);
  }

  // IPv4 length for a packet: 20-byte IP header, 8 (UDP) or 20 (TCP) transport header.
  static std::uint16_t ip_length(const FixturePacket& p) {
    return static_cast<std::uint16_t>(20 + (p.proto == 6 ? 20 : 8) + p.payload);
  }

  PcapBuilder& add(const FixturePacket& p) {
    std::vector<std::uint8_t> frame;
    auto net16 = [&](std::uint16_t v) {
      frame.push_back(static_cast<std::uint8_t>(v >> 8));
      frame.push_back(static_cast<std::uint8_t>(v));
    };
    auto net32 = [&](std::uint32_t v) {
      net16(static_cast<std::uint16_t>(v >> 16));
      net16(static_cast<std::uint16_t>(v));
    };
    for (int i = 0; i < 12; ++i) frame.push_back(static_cast<std::uint8_t>(i));  // dst+src MAC
    net16(p.ethertype);
    if (p.ethertype == 0x0800) {
      const std::uint16_t total = ip_length(p);
      frame.push_back(0x45);
      frame.push_back(0);
      net16(total);
      net16(0x1234);
      net16(p.frag_bits);
      frame.push_back(64);
      frame.push_back(p.proto);
      net16(0);  // checksum, unchecked
      net32(p.src);
      net32(p.dst);
      net16(p.sport);
      net16(p.dport);
      const std::size_t transport_rest = (p.proto == 6 ? 20 : 8) - 4 + p.payload;
      frame.insert(frame.end(), transport_rest, 0xAB);
    } else {
      frame.insert(frame.end(), 40, 0x00);
    }
    put32(p.sec);
    put32(p.frac);
    put32(static_cast<std::uint32_t>(frame.size()));
    put32(static_cast<std::uint32_t>(frame.size()));
    bytes_.insert(bytes_.end(), frame.begin(), frame.end());
    return *this;
  }

  PcapBuilder& raw(const std::vector<std::uint8_t>& extra) {
    bytes_.insert(bytes_.end(), extra.begin(), extra.end());
    return *this;
  }

  std::string str() const { return std::string(bytes_.begin(), bytes_.end()); }
  std::size_t size() const { return bytes_.size(); }

 private:
  void put16(std::uint16_t v) {
    if (big_) {
      bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
      bytes_.push_back(static_cast<std::uint8_t>(v));
    } else {
      bytes_.push_back(static_cast<std::uint8_t>(v));
      bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
  }
  void put32(std::uint32_t v) {
    if (big_) {
      put16(static_cast<std::uint16_t>(v >> 16));
      put16(static_cast<std::uint16_t>(v));
    } else {
      put16(static_cast<std::uint16_t>(v));
      put16(static_cast<std::uint16_t>(v >> 16));
    }
  }

  bool big_;
  std::vector<std::uint8_t> bytes_;
};

}  // namespace tdntc::testing
