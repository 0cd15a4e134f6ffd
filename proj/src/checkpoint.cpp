#include "muspike/checkpoint.h"

#include <bit>
#include <cstring>

#include "muspike/error.h"

namespace muspike {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw Error(ErrorCode::MalformedCheckpoint, "truncated checkpoint");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> write_tensor_container(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out{'M', 'S', 'P', 'K'};
  put_u16(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedTensor> read_tensor_container(std::span<const std::uint8_t> bytes) {
  Reader rd(bytes);
  auto magic = rd.bytes(4);
  if (std::memcmp(magic.data(), "MSPK", 4) != 0) throw Error(ErrorCode::MalformedCheckpoint, "bad magic");
  const std::uint16_t version = rd.u16();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::MalformedCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> tensors;
  while (!rd.done()) {
    NamedTensor t;
    const std::uint32_t name_len = rd.u32();
    auto name = rd.bytes(name_len);
    t.name.assign(name.begin(), name.end());
    const std::uint32_t rank = rd.u32();
    if (rank > 8) throw Error(ErrorCode::MalformedCheckpoint, "tensor rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims.push_back(rd.u32());
      count *= t.dims.back();
      if (count > bytes.size()) throw Error(ErrorCode::MalformedCheckpoint, "tensor larger than file");
    }
    t.data.resize(count);
    for (auto& f : t.data) f = std::bit_cast<float>(rd.u32());
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace muspike
