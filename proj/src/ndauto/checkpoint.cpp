#include "anesi/ndauto/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "anesi/errors.hpp"

namespace anesi::nd {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f64(std::string& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(ParseError::Kind::kTruncated, "checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kCheckpointMagic, 6);
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.values()) put_f64(out, v);
  }
  return out;
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  char magic[6];
  in.take(magic, 6);
  if (std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw ParseError(ParseError::Kind::kBadMagic, "not an ANESI1 checkpoint");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(ParseError::Kind::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  NamedTensors out;
  while (!in.done()) {
    std::string name(in.u32(), '\0');
    in.take(name.data(), name.size());
    std::vector<std::size_t> shape(in.u32());
    for (auto& d : shape) d = in.u32();
    Tensor t(shape);
    for (double& v : t.values()) in.take(&v, 8);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  const std::string bytes = encode_checkpoint(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

NamedTensors to_named(const ParamStore& params) {
  NamedTensors out;
  for (const auto& [name, entry] : params.entries()) out.emplace_back(name, entry.value);
  return out;
}

}  // namespace anesi::nd
