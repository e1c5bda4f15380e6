#pragma once

// Classic-pcap ingestion, bidirectional flow assembly and per-flow
// statistical features, emitted as CSV for the data pipeline.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tdntc/datapipe/csv.hpp"
#include "tdntc/error.hpp"

namespace tdntc::flowcap {

enum class Direction : std::uint8_t { Forward, Reverse };

struct PacketMeta {
  std::int64_t ts_ns = 0;  // capture timestamp, nanoseconds since the epoch
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;
  std::uint32_t length = 0;  // IPv4 total length (header + payload), bytes
  Direction direction = Direction::Forward;
  std::size_t ordinal = 0;  // position among emitted packets

  double timestamp() const { return static_cast<double>(ts_ns) / 1e9; }
};

struct ParseCounters {
  std::size_t records = 0;
  std::size_t emitted = 0;
  std::size_t non_ip = 0;
  std::size_t ipv6 = 0;
  std::size_t fragments = 0;
  std::size_t non_tcp_udp = 0;
  std::size_t truncated = 0;

  std::size_t skipped() const { return non_ip + ipv6 + fragments + non_tcp_udp + truncated; }
};

inline std::string format_ipv4(std::uint32_t a) {
  return std::to_string(a >> 24) + "." + std::to_string((a >> 16) & 0xFF) + "." +
         std::to_string((a >> 8) & 0xFF) + "." + std::to_string(a & 0xFF);
}

// Sequential reader over a classic pcap stream (microsecond or nanosecond
// timestamps, either byte order). Yields IPv4 TCP/UDP packets and counts
// everything it skips.
class PcapReader {
 public:
  static constexpr std::uint32_t kMagicMicro = 0xA1B2C3D4;
  static constexpr std::uint32_t kMagicNano = 0xA1B23C4D;

  explicit PcapReader(std::istream& in, std::string source = "<stream>")
      : in_(in), source_(std::move(source)) {
    std::array<std::uint8_t, 24> hdr{};
    if (!read_exact(hdr.data(), hdr.size())) {
      throw FormatError(source_ + ": too short for a pcap global header");
    }
    const std::uint32_t le = load32(hdr.data(), false);
    const std::uint32_t be = load32(hdr.data(), true);
    if (le == kMagicMicro || le == kMagicNano) {
      big_endian_ = false;
      nanosecond_ = le == kMagicNano;
    } else if (be == kMagicMicro || be == kMagicNano) {
      big_endian_ = true;
      nanosecond_ = be == kMagicNano;
    } else {
      std::ostringstream os;
      os << source_ << ": bad pcap magic 0x" << std::hex << le;
      throw FormatError(os.str());
    }
    linktype_ = load32(hdr.data() + 20, big_endian_) & 0x0FFFFFFF;
    switch (linktype_) {
      case 1: case 12: case 14: case 101: case 113: case 228: break;
      default:
        throw FormatError(source_ + ": unsupported pcap link type " + std::to_string(linktype_));
    }
  }

  bool nanosecond() const { return nanosecond_; }
  bool big_endian() const { return big_endian_; }
  std::uint32_t linktype() const { return linktype_; }
  const ParseCounters& counters() const { return counters_; }

  std::optional<PacketMeta> next() {
    while (true) {
      const std::size_t record_offset = offset_;
      std::array<std::uint8_t, 16> rec{};
      const std::size_t got = read_some(rec.data(), rec.size());
      if (got == 0) return std::nullopt;
      if (got < rec.size()) throw ParseError(source_ + ": truncated record header", record_offset);
      const std::uint32_t sec = load32(rec.data(), big_endian_);
      const std::uint32_t frac = load32(rec.data() + 4, big_endian_);
      const std::uint32_t caplen = load32(rec.data() + 8, big_endian_);
      if (caplen > (1u << 28)) throw ParseError(source_ + ": implausible record length", record_offset);
      buf_.resize(caplen);
      if (!read_exact(buf_.data(), caplen)) {
        throw ParseError(source_ + ": truncated record data (" + std::to_string(caplen) + " bytes expected)",
                         record_offset);
      }
      ++counters_.records;
      const std::int64_t ts = static_cast<std::int64_t>(sec) * 1'000'000'000 +
                              static_cast<std::int64_t>(frac) * (nanosecond_ ? 1 : 1000);
      if (auto pkt = decode(ts)) {
        pkt->ordinal = counters_.emitted++;
        return pkt;
      }
    }
  }

 private:
  static std::uint32_t load32(const std::uint8_t* p, bool big) {
    if (big) return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    return (std::uint32_t{p[3]} << 24) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[1]} << 8) | p[0];
  }
  static std::uint16_t net16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((std::uint16_t{p[0]} << 8) | p[1]);
  }
  static std::uint32_t net32(const std::uint8_t* p) { return load32(p, true); }

  std::size_t read_some(std::uint8_t* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    offset_ += got;
    return got;
  }
  bool read_exact(std::uint8_t* dst, std::size_t n) { return read_some(dst, n) == n; }

  std::optional<PacketMeta> decode(std::int64_t ts) {
    const std::uint8_t* p = buf_.data();
    std::size_t n = buf_.size();
    std::uint16_t ethertype = 0;
    switch (linktype_) {
      case 1: {
        if (n < 14) return skip(counters_.truncated);
        ethertype = net16(p + 12);
        std::size_t off = 14;
        while (ethertype == 0x8100 || ethertype == 0x88A8) {
          if (n < off + 4) return skip(counters_.truncated);
          ethertype = net16(p + off + 2);
          off += 4;
        }
        p += off;
        n -= off;
        break;
      }
      case 113: {
        if (n < 16) return skip(counters_.truncated);
        ethertype = net16(p + 14);
        p += 16;
        n -= 16;
        break;
      }
      default: {
        if (n < 1) return skip(counters_.truncated);
        const int version = p[0] >> 4;
        ethertype = version == 4 ? 0x0800 : version == 6 ? 0x86DD : 0;
        break;
      }
    }
    if (ethertype == 0x86DD) return skip(counters_.ipv6);
    if (ethertype != 0x0800) return skip(counters_.non_ip);
    if (n < 20) return skip(counters_.truncated);
    if ((p[0] >> 4) != 4) return skip(counters_.non_ip);
    const std::size_t ihl = static_cast<std::size_t>(p[0] & 0x0F) * 4;
    if (ihl < 20 || n < ihl) return skip(counters_.truncated);
    const std::uint16_t frag = net16(p + 6);
    if ((frag & 0x2000) || (frag & 0x1FFF)) return skip(counters_.fragments);
    const std::uint8_t proto = p[9];
    if (proto != 6 && proto != 17) return skip(counters_.non_tcp_udp);
    if (n < ihl + 4) return skip(counters_.truncated);
    PacketMeta m;
    m.ts_ns = ts;
    m.length = net16(p + 2);
    m.protocol = proto;
    m.src_addr = net32(p + 12);
    m.dst_addr = net32(p + 16);
    m.src_port = net16(p + ihl);
    m.dst_port = net16(p + ihl + 2);
    return m;
  }

  static std::optional<PacketMeta> skip(std::size_t& counter) {
    ++counter;
    return std::nullopt;
  }

  std::istream& in_;
  std::string source_;
  std::size_t offset_ = 0;
  bool big_endian_ = false;
  bool nanosecond_ = false;
  std::uint32_t linktype_ = 1;
  ParseCounters counters_;
  std::vector<std::uint8_t> buf_;
};

struct Capture {
  std::vector<PacketMeta> packets;
  ParseCounters counters;
};

inline Capture parse_pcap(std::istream& in, const std::string& source = "<stream>") {
  PcapReader reader(in, source);
  Capture cap;
  while (auto pkt = reader.next()) cap.packets.push_back(*pkt);
  cap.counters = reader.counters();
  return cap;
}

inline Capture parse_pcap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return parse_pcap(in, path);
}

// ---- flow assembly ------------------------------------------------------------

struct Endpoint {
  std::uint32_t addr = 0;
  std::uint16_t port = 0;

  auto operator<=>(const Endpoint&) const = default;
};

// Direction-free flow identity: the two endpoints in sorted order.
struct FlowKey {
  Endpoint low;
  Endpoint high;
  std::uint8_t protocol = 0;

  auto operator<=>(const FlowKey&) const = default;

  static FlowKey of(const PacketMeta& p) {
    Endpoint s{p.src_addr, p.src_port};
    Endpoint d{p.dst_addr, p.dst_port};
    if (d < s) std::swap(s, d);
    return {s, d, p.protocol};
  }
};

struct Flow {
  FlowKey key;
  Endpoint initiator;  // source of the first packet; "forward" side
  Endpoint responder;
  std::vector<PacketMeta> packets;
};

// Groups packets by canonical key. A gap strictly greater than idle_timeout
// seconds since the flow's previous packet starts a new flow. Flows are
// returned in order of their first packet.
inline std::vector<Flow> assemble_flows(std::vector<PacketMeta> packets, double idle_timeout = 60.0) {
  std::stable_sort(packets.begin(), packets.end(),
                   [](const PacketMeta& a, const PacketMeta& b) { return a.ts_ns < b.ts_ns; });
  const double timeout_ns = idle_timeout * 1e9;
  std::vector<Flow> flows;
  std::map<FlowKey, std::size_t> active;
  for (auto& pkt : packets) {
    const FlowKey key = FlowKey::of(pkt);
    auto it = active.find(key);
    if (it != active.end()) {
      const auto& last = flows[it->second].packets.back();
      if (static_cast<double>(pkt.ts_ns - last.ts_ns) > timeout_ns) {
        active.erase(it);
        it = active.end();
      }
    }
    if (it == active.end()) {
      Flow f;
      f.key = key;
      f.initiator = {pkt.src_addr, pkt.src_port};
      f.responder = {pkt.dst_addr, pkt.dst_port};
      flows.push_back(std::move(f));
      it = active.emplace(key, flows.size() - 1).first;
    }
    Flow& flow = flows[it->second];
    pkt.direction = Endpoint{pkt.src_addr, pkt.src_port} == flow.initiator ? Direction::Forward
                                                                            : Direction::Reverse;
    flow.packets.push_back(pkt);
  }
  return flows;
}

// ---- features -------------------------------------------------------------------

inline constexpr std::size_t kFeatureCount = 20;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "src_port",     "dst_port",     "protocol",     "duration",     "fwd_packets",
    "rev_packets",  "fwd_bytes",    "rev_bytes",    "iat_min",      "iat_mean",
    "iat_max",      "fwd_iat_min",  "fwd_iat_mean", "fwd_iat_max",  "rev_iat_min",
    "rev_iat_mean", "rev_iat_max",  "pkt_len_min",  "pkt_len_mean", "pkt_len_max",
};

struct Triple {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct FlowStats {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;
  double first_seen = 0.0;
  double duration = 0.0;
  std::size_t fwd_packets = 0;
  std::size_t rev_packets = 0;
  std::uint64_t fwd_bytes = 0;
  std::uint64_t rev_bytes = 0;
  Triple iat;
  Triple fwd_iat;
  Triple rev_iat;
  Triple pkt_len;

  std::array<double, kFeatureCount> features() const {
    return {static_cast<double>(src_port), static_cast<double>(dst_port), static_cast<double>(protocol),
            duration, static_cast<double>(fwd_packets), static_cast<double>(rev_packets),
            static_cast<double>(fwd_bytes), static_cast<double>(rev_bytes),
            iat.min, iat.mean, iat.max, fwd_iat.min, fwd_iat.mean, fwd_iat.max,
            rev_iat.min, rev_iat.mean, rev_iat.max, pkt_len.min, pkt_len.mean, pkt_len.max};
  }
};

namespace detail {

// Gaps between consecutive timestamps, in seconds. Fewer than two
// timestamps gives all zeros.
inline Triple gap_triple(const std::vector<std::int64_t>& ts) {
  if (ts.size() < 2) return {};
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = 0;
  std::int64_t sum = 0;
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const std::int64_t g = ts[i] - ts[i - 1];
    lo = std::min(lo, g);
    hi = std::max(hi, g);
    sum += g;
  }
  const double count = static_cast<double>(ts.size() - 1);
  return {static_cast<double>(lo) / 1e9, static_cast<double>(sum) / count / 1e9,
          static_cast<double>(hi) / 1e9};
}

}  // namespace detail

inline FlowStats compute_stats(const Flow& flow) {
  if (flow.packets.empty()) throw DataError("flow has no packets");
  FlowStats s;
  s.src_port = flow.initiator.port;
  s.dst_port = flow.responder.port;
  s.protocol = flow.key.protocol;
  const auto& first = flow.packets.front();
  s.first_seen = first.timestamp();
  s.duration = static_cast<double>(flow.packets.back().ts_ns - first.ts_ns) / 1e9;

  std::vector<std::int64_t> all, fwd, rev;
  std::uint32_t len_lo = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t len_hi = 0;
  std::uint64_t len_sum = 0;
  for (const auto& p : flow.packets) {
    all.push_back(p.ts_ns);
    if (p.direction == Direction::Forward) {
      fwd.push_back(p.ts_ns);
      ++s.fwd_packets;
      s.fwd_bytes += p.length;
    } else {
      rev.push_back(p.ts_ns);
      ++s.rev_packets;
      s.rev_bytes += p.length;
    }
    len_lo = std::min(len_lo, p.length);
    len_hi = std::max(len_hi, p.length);
    len_sum += p.length;
  }
  s.iat = detail::gap_triple(all);
  s.fwd_iat = detail::gap_triple(fwd);
  s.rev_iat = detail::gap_triple(rev);
  s.pkt_len = {static_cast<double>(len_lo),
               static_cast<double>(len_sum) / static_cast<double>(flow.packets.size()),
               static_cast<double>(len_hi)};
  return s;
}

// Header row plus one row per flow. Columns beyond the 20 features are
// zero padding up to pad_to (when pad_to > 20); the last column is the label.
inline void write_feature_csv(std::ostream& out, const std::vector<Flow>& flows, const std::string& label,
                              std::size_t pad_to = kFeatureCount) {
  const std::size_t width = std::max(pad_to, kFeatureCount);
  for (std::size_t i = 0; i < width; ++i) {
    if (i < kFeatureCount) out << kFeatureNames[i];
    else out << "pad_" << (i - kFeatureCount);
    out << ',';
  }
  out << "label\n";
  const std::string cell = csv_escape(label);
  for (const auto& flow : flows) {
    const auto feats = compute_stats(flow).features();
    for (std::size_t i = 0; i < width; ++i) out << (i < kFeatureCount ? format_double(feats[i]) : "0") << ',';
    out << cell << '\n';
  }
}

}  // namespace tdntc::flowcap
