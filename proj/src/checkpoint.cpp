#include "shopagent/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "shopagent/bytes.hpp"

namespace shopagent::model {

std::string checkpoint_bytes(const ModelParameters<float>& params) {
  bytes::Writer w;
  w.raw(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.u32(kCheckpointVersion);
  w.u64(params.architecture_hash());
  w.u32(static_cast<std::uint32_t>(params.config.vocab_size));
  w.u32(static_cast<std::uint32_t>(params.config.dim));
  w.u32(static_cast<std::uint32_t>(params.config.value_hidden));
  w.u64(params.count());
  for (const auto& t : params.tensors)
    for (float x : t.data) w.f32(x);
  return w.take();
}

ModelParameters<float> checkpoint_from_bytes(const std::string& data) {
  bytes::Reader r(data);
  require(r.raw(sizeof(kCheckpointMagic)) == std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)),
          "not a checkpoint file");
  require(r.u32() == kCheckpointVersion, "unsupported checkpoint version");
  const std::uint64_t hash = r.u64();
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(r.u32());
  cfg.dim = static_cast<int>(r.u32());
  cfg.value_hidden = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  ModelParameters<float> p = make_parameters<float>(cfg);
  require(p.architecture_hash() == hash, "checkpoint architecture hash mismatch");
  require(p.count() == count, "checkpoint parameter count mismatch");
  for (auto& t : p.tensors)
    for (float& x : t.data) x = r.f32();
  require(r.done(), "trailing bytes after checkpoint parameters");
  return p;
}

void write_checkpoint(std::ostream& out, const ModelParameters<float>& params) {
  const std::string b = checkpoint_bytes(params);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

ModelParameters<float> read_checkpoint(std::istream& in) {
  std::string b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(b);
}

void save_checkpoint(const std::filesystem::path& path, const ModelParameters<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeAbort("cannot write checkpoint " + path.string());
  write_checkpoint(out, params);
}

ModelParameters<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeAbort("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace shopagent::model
