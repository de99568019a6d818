#include "mos/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mos/error.hpp"

namespace mos {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorCode::IoError, "truncated checkpoint");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamVector& params) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.layout().size()));
  for (const auto& t : params.layout()) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, d);
  }
  out.reserve(out.size() + 4 * params.size());
  for (float f : params.values()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

ParamVector decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.str(4) != std::string(kCheckpointMagic, 4)) throw Error(ErrorCode::IoError, "bad checkpoint magic");
  if (const auto version = in.u32(); version != kCheckpointVersion)
    throw Error(ErrorCode::IoError, "unsupported checkpoint version " + std::to_string(version));
  ParamLayout layout(in.u32());
  for (auto& t : layout) {
    t.name = in.str(in.u32());
    t.shape.resize(in.u32());
    for (auto& d : t.shape) d = in.u32();
  }
  const std::size_t n = layout_size(layout);
  if (in.remaining() != 4 * n) throw Error(ErrorCode::IoError, "checkpoint payload size mismatch");
  std::vector<float> values(n);
  for (auto& v : values) v = std::bit_cast<float>(in.u32());
  return ParamVector(std::move(layout), std::move(values));
}

void write_checkpoint(const std::filesystem::path& path, const ParamVector& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

ParamVector read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mos
