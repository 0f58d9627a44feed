#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "geld/io.hpp"

namespace geld {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'L', 'D', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeader = 8 + 4;  // magic + version

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t k) const {
    if (pos + k > bytes.size()) throw CheckpointFormatError("checkpoint ends unexpectedly");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

struct Record {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                const std::vector<std::size_t>& shape, std::span<const float> values) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const InferParams& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, kCheckpointVersion);
  std::size_t count = 1;
  params.for_each([&](const std::string&, const nn::Tensor<float>&) { ++count; });
  put_u32(out, static_cast<std::uint32_t>(count));

  const ModelConfig& c = params.config;
  const std::vector<float> meta{float(c.hidden),    float(c.heads),       float(c.decoder_layers),
                                float(c.ff_mult),   float(c.region_rows), float(c.region_cols)};
  put_tensor(out, "meta.config", {meta.size()}, meta);
  params.for_each([&](const std::string& name, const nn::Tensor<float>& t) {
    put_tensor(out, name, t.shape, t.data);
  });
  put_u64(out, fnv1a(std::span<const std::uint8_t>(out).subspan(kHeader)));
  return out;
}

InferParams deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw CheckpointFormatError("not a checkpoint (bad magic)");
  if (bytes.size() < kHeader + 4 + 8) throw ChecksumError("checkpoint truncated");
  Reader r{bytes, 8};
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                 " needs migration to version " +
                                 std::to_string(kCheckpointVersion));
  const auto payload = bytes.subspan(kHeader, bytes.size() - kHeader - 8);
  Reader tail{bytes, bytes.size() - 8};
  if (fnv1a(payload) != tail.u64()) throw ChecksumError("checkpoint checksum mismatch");

  Reader p{bytes.first(bytes.size() - 8), kHeader};
  const std::uint32_t count = p.u32();
  std::map<std::string, Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = p.u32();
    p.need(len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + p.pos), len);
    p.pos += len;
    Record rec;
    const std::uint32_t rank = p.u32();
    std::size_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      rec.shape.push_back(p.u32());
      total *= rec.shape.back();
    }
    p.need(total * 4);
    rec.values.resize(total);
    for (auto& v : rec.values) v = p.f32();
    if (!records.emplace(std::move(name), std::move(rec)).second)
      throw CheckpointFormatError("duplicate tensor name");
  }
  if (p.pos != p.bytes.size()) throw CheckpointFormatError("trailing bytes after tensors");

  const auto meta = records.find("meta.config");
  if (meta == records.end() || meta->second.values.size() != 6)
    throw CheckpointFormatError("missing meta.config");
  const auto& m = meta->second.values;
  ModelConfig cfg;
  cfg.hidden = static_cast<int>(m[0]);
  cfg.heads = static_cast<int>(m[1]);
  cfg.decoder_layers = static_cast<int>(m[2]);
  cfg.ff_mult = static_cast<int>(m[3]);
  cfg.region_rows = static_cast<int>(m[4]);
  cfg.region_cols = static_cast<int>(m[5]);
  cfg.validate();

  InferParams params = InferParams::init(cfg, 0);
  params.for_each([&](const std::string& name, nn::Tensor<float>& t) {
    const auto it = records.find(name);
    if (it == records.end()) throw CheckpointFormatError("missing tensor " + name);
    if (it->second.shape != t.shape) throw CheckpointFormatError("shape mismatch for " + name);
    t.data = it->second.values;
  });
  std::size_t expected = 1;
  params.for_each([&](const std::string&, const nn::Tensor<float>&) { ++expected; });
  if (records.size() != expected) throw CheckpointFormatError("unexpected tensors in checkpoint");
  return params;
}

void save_checkpoint(const InferParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

InferParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace geld
