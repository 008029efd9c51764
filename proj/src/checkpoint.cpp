#include "prunekit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

namespace prunekit {

namespace {

constexpr char kMagic[4] = {'P', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            std::string("checkpoint truncated while reading ") + what +
                                " at byte " + std::to_string(pos));
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = static_cast<std::uint32_t>(buf[pos]) |
                      (static_cast<std::uint32_t>(buf[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(buf[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(buf[pos + 3]) << 24);
    pos += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const NetworkGraph& graph, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);

  const std::string desc = describe_graph(graph);
  put_u32(buf, static_cast<std::uint32_t>(desc.size()));
  buf.insert(buf.end(), desc.begin(), desc.end());

  const auto tensors = graph.named_tensors();
  put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u32(buf, static_cast<std::uint32_t>(t->shape.size()));
    for (int d : t->shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : t->data) put_f32(buf, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_checkpoint: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("save_checkpoint: short write to '" + path + "'");
}

NetworkGraph load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open '" + path + "'");
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  Reader r{buf};

  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic,
                          "bad magic: not a PKPT checkpoint: '" + path + "'");
  }
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version) +
                              " (expected " + std::to_string(kVersion) + ")");
  }

  const std::uint32_t desc_len = r.u32("descriptor length");
  const std::string desc = r.str(desc_len, "architecture descriptor");
  NetworkGraph g = graph_from_descriptor(desc);

  std::map<std::string, TensorPtr> by_name;
  for (const auto& [name, t] : g.named_tensors()) by_name[name] = t;

  const std::uint32_t count = r.u32("tensor count");
  if (count != by_name.size()) {
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "checkpoint has " + std::to_string(count) + " tensors, architecture " +
                              "wants " + std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "checkpoint tensor '" + name + "' not in architecture");
    }
    const std::uint32_t ndim = r.u32("tensor rank");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(r.u32("tensor dim"));
    if (shape != it->second->shape) {
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "tensor '" + name + "' shape mismatch against architecture");
    }
    for (auto& v : it->second->data) v = r.f32("tensor data");
  }
  return g;
}

}  // namespace prunekit
