#include "hcnf/nets/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hcnf::nets {

namespace {

constexpr std::size_t kHeaderBytes = 12;

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
void put_u16(std::string& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) put_u8(out, static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(out, static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t crc_of(const std::string& bytes, std::size_t begin, std::size_t end) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + begin), static_cast<uInt>(end - begin));
  return static_cast<std::uint32_t>(crc);
}

struct Reader {
  const std::string& s;
  const std::string& src;
  std::size_t pos = 0;
  std::size_t end;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(src + ":byte " + std::to_string(pos), what); }
  void need(std::size_t n, const char* what) const {
    if (end - pos < n) fail(std::string("truncated checkpoint while reading ") + what);
  }
  std::uint32_t uint(int bytes, const char* what) {
    need(bytes, what);
    std::uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(s[pos + i])) << (8 * i);
    pos += bytes;
    return v;
  }
};

std::vector<CheckpointTensor> model_tensors(FusionModel<float>& model) {
  std::vector<CheckpointTensor> out;
  for (auto& e : model.state())
    out.push_back({e.name, e.tensor.shape(), std::vector<float>(e.tensor.data().begin(), e.tensor.data().end())});
  const auto& a = model.arch;
  out.push_back({"meta.arch",
                 {4},
                 {float(a.width), float(a.input_size), float(a.group_size), a.swap_backbones ? 1.0f : 0.0f}});
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointTensor>& tensors) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    HCNF_REQUIRE(t.name.size() <= 0xffff, "checkpoint: tensor name too long");
    HCNF_REQUIRE(t.shape.size() <= 0xff, "checkpoint: tensor rank too large");
    HCNF_REQUIRE(shape_numel(t.shape) == t.values.size(), "checkpoint: tensor '" + t.name + "' shape/value mismatch");
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put_u8(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u32(out, crc_of(out, kHeaderBytes, out.size()));
  return out;
}

std::vector<CheckpointTensor> decode_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r{bytes, source, 0, bytes.size()};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) r.fail("bad magic: expected \"HCNF\"");
  r.pos = 4;
  const std::uint32_t version = r.uint(4, "version");
  if (version != kCheckpointVersion)
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t count = r.uint(4, "tensor count");
  if (bytes.size() < kHeaderBytes + 4) r.fail("truncated checkpoint: missing CRC");
  r.end = bytes.size() - 4;

  std::vector<CheckpointTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointTensor t;
    const std::uint32_t len = r.uint(2, "name length");
    r.need(len, "tensor name");
    t.name = bytes.substr(r.pos, len);
    r.pos += len;
    const std::uint32_t rank = r.uint(1, "rank");
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.uint(4, "dimension"));
      numel *= t.shape.back();
      if (numel > (r.end - r.pos) / 4 + 1)
        r.fail("truncated checkpoint: tensor '" + t.name + "' larger than the remaining bytes");
    }
    r.need(numel * 4, "tensor payload");
    t.values.resize(numel);
    for (auto& v : t.values) v = std::bit_cast<float>(r.uint(4, "tensor payload"));
    out.push_back(std::move(t));
  }
  if (r.pos != r.end) r.fail(std::to_string(r.end - r.pos) + " unexpected bytes after the last tensor");
  r.end = bytes.size();
  const std::uint32_t stored = r.uint(4, "CRC");
  const std::uint32_t actual = crc_of(bytes, kHeaderBytes, bytes.size() - 4);
  if (stored != actual) {
    r.pos = bytes.size() - 4;
    r.fail("CRC mismatch: stored " + std::to_string(stored) + ", computed " + std::to_string(actual));
  }
  return out;
}

void checkpoint_save(FusionModel<float>& model, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model_tensors(model));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw IoError("cannot write checkpoint " + path.string());
}

void checkpoint_load_into(FusionModel<float>& model, const std::vector<CheckpointTensor>& tensors,
                          const std::string& source) {
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : tensors)
    if (!by_name.emplace(t.name, &t).second) throw ParseError(source, "duplicate tensor '" + t.name + "'");
  const auto expected = model_tensors(model);
  for (const auto& e : expected) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw ParseError(source, "tensor '" + e.name + "' missing from checkpoint");
    if (it->second->shape != e.shape)
      throw ParseError(source, "tensor '" + e.name + "' has shape " + shape_str(it->second->shape) +
                                   ", model expects " + shape_str(e.shape));
    if (e.name == "meta.arch" && it->second->values != e.values)
      throw ParseError(source, "tensor 'meta.arch' does not match the model architecture");
  }
  if (tensors.size() != expected.size()) {
    for (const auto& t : tensors) {
      bool known = false;
      for (const auto& e : expected) known = known || e.name == t.name;
      if (!known) throw ParseError(source, "unexpected tensor '" + t.name + "' in checkpoint");
    }
  }
  for (auto& e : model.state()) std::ranges::copy(by_name.at(e.name)->values, e.tensor.data().begin());
}

void checkpoint_load_into(FusionModel<float>& model, const std::filesystem::path& path) {
  checkpoint_load_into(model, decode_checkpoint(slurp(path), path.string()), path.string());
}

FusionModel<float> checkpoint_load(const std::filesystem::path& path) {
  const auto tensors = decode_checkpoint(slurp(path), path.string());
  const CheckpointTensor* meta = nullptr;
  for (const auto& t : tensors)
    if (t.name == "meta.arch") meta = &t;
  if (!meta) throw ParseError(path.string(), "tensor 'meta.arch' missing from checkpoint");
  if (meta->values.size() != 4) throw ParseError(path.string(), "tensor 'meta.arch' must hold 4 values");
  ArchConfig arch;
  arch.width = static_cast<int>(meta->values[0]);
  arch.input_size = static_cast<int>(meta->values[1]);
  arch.group_size = static_cast<int>(meta->values[2]);
  arch.swap_backbones = meta->values[3] != 0.0f;
  try {
    arch.validate();
  } catch (const ContractError& e) {
    throw ParseError(path.string(), std::string("tensor 'meta.arch': ") + e.what());
  }
  FusionModel<float> model(arch, 0);
  checkpoint_load_into(model, tensors, path.string());
  return model;
}

}  // namespace hcnf::nets
