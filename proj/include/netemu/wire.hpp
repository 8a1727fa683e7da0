#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace netemu {

class WireError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Inter-manager usage report. Layout (big-endian, no padding):
//   sender_id   u16
//   flow_count  u16
//   per flow:
//     used_bandwidth_bps u32
//     link_count         u8
//     link_ids           link_count * id_width bytes
// id_width is 1 while the topology has at most 256 links, 2 beyond that.
struct MetadataMessage {
  struct Flow {
    std::uint32_t used_bandwidth_bps = 0;
    std::vector<std::uint16_t> link_ids;

    bool operator==(const Flow&) const = default;
  };

  std::uint16_t sender_id = 0;
  std::vector<Flow> flows;

  bool operator==(const MetadataMessage&) const = default;

  std::size_t encoded_size(int id_width) const {
    std::size_t size = 2 + 2;
    for (const auto& f : flows) size += 4 + 1 + f.link_ids.size() * id_width;
    return size;
  }
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

class ByteReader {
public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = (std::uint16_t(data_[pos_]) << 8) | data_[pos_ + 1];
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = (std::uint32_t(data_[pos_]) << 24) |
                      (std::uint32_t(data_[pos_ + 1]) << 16) |
                      (std::uint32_t(data_[pos_ + 2]) << 8) | data_[pos_ + 3];
    pos_ += 4;
    return v;
  }
  std::size_t remaining() const { return size_ - pos_; }

private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw WireError("truncated metadata message");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_metadata(const MetadataMessage& m, int id_width) {
  if (id_width != 1 && id_width != 2) throw WireError("id width must be 1 or 2");
  if (m.flows.size() > 0xffff) throw WireError("flow count overflow");
  std::vector<std::uint8_t> out;
  out.reserve(m.encoded_size(id_width));
  detail::put_u16(out, m.sender_id);
  detail::put_u16(out, static_cast<std::uint16_t>(m.flows.size()));
  for (const auto& f : m.flows) {
    detail::put_u32(out, f.used_bandwidth_bps);
    if (f.link_ids.size() > 0xff) throw WireError("link count overflow");
    out.push_back(static_cast<std::uint8_t>(f.link_ids.size()));
    for (std::uint16_t id : f.link_ids) {
      if (id_width == 1) {
        if (id > 0xff) throw WireError("link id " + std::to_string(id) + " overflows width 1");
        out.push_back(static_cast<std::uint8_t>(id));
      } else {
        detail::put_u16(out, id);
      }
    }
  }
  return out;
}

inline MetadataMessage decode_metadata(const std::vector<std::uint8_t>& bytes,
                                       int id_width) {
  if (id_width != 1 && id_width != 2) throw WireError("id width must be 1 or 2");
  detail::ByteReader r(bytes.data(), bytes.size());
  MetadataMessage m;
  m.sender_id = r.u16();
  const std::uint16_t count = r.u16();
  m.flows.resize(count);
  for (auto& f : m.flows) {
    f.used_bandwidth_bps = r.u32();
    const std::uint8_t links = r.u8();
    f.link_ids.resize(links);
    for (auto& id : f.link_ids) id = id_width == 1 ? r.u8() : r.u16();
  }
  if (r.remaining() != 0) throw WireError("trailing bytes after metadata message");
  return m;
}

// Best-effort single-datagram packing: a report too large for one
// datagram is split at flow boundaries.
inline std::vector<MetadataMessage> split_for_datagram(const MetadataMessage& m,
                                                       int id_width,
                                                       std::size_t max_bytes = 1472) {
  std::vector<MetadataMessage> out;
  MetadataMessage part;
  part.sender_id = m.sender_id;
  for (const auto& f : m.flows) {
    part.flows.push_back(f);
    if (part.encoded_size(id_width) > max_bytes && part.flows.size() > 1) {
      part.flows.pop_back();
      out.push_back(part);
      part.flows.clear();
      part.flows.push_back(f);
    }
  }
  out.push_back(std::move(part));
  return out;
}

}  // namespace netemu
