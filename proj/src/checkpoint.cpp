#include "spikemix/checkpoint.hpp"

#include <fstream>

#include "spikemix/binio.hpp"

namespace spikemix {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'L', 'X'};
constexpr uint32_t kVersion = 1;

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  binio::put_string(os, name);
  binio::put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) binio::put_u32(os, static_cast<uint32_t>(t.dim(i)));
  for (int64_t i = 0; i < t.size(); ++i) binio::put_f32(os, static_cast<float>(t[i]));
}

std::pair<std::string, Tensor> get_tensor(std::istream& is) {
  std::string name = binio::get_string(is, "tensor name");
  const uint32_t rank = binio::get_u32(is, name.c_str());
  if (rank == 0 || rank > 8) throw IoError("checkpoint: corrupted rank for tensor '" + name + "'");
  Shape shape(rank);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = binio::get_u32(is, name.c_str());
    if (shape[i] <= 0 || shape[i] > (1 << 28)) throw IoError("checkpoint: corrupted dim for tensor '" + name + "'");
    n *= shape[i];
  }
  Tensor t(shape);
  for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(binio::get_f32(is, name.c_str()));
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(Network& net, const RunConfig& cfg, const std::string& path, const OptimizerSnapshot* opt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  binio::put_u32(os, kVersion);
  binio::put_string(os, cfg.serialize());
  const auto& params = net.parameters();
  const auto& bufs = net.buffers();
  binio::put_u32(os, static_cast<uint32_t>(params.size() + bufs.size()));
  for (const auto& [name, p] : params) put_tensor(os, name, p->value);
  for (const auto& [name, b] : bufs) put_tensor(os, name, *b);
  if (opt) {
    binio::put_u8(os, 1);
    binio::put_u32(os, static_cast<uint32_t>(opt->epoch));
    binio::put_u64(os, static_cast<uint64_t>(opt->step));
    binio::put_u64(os, static_cast<uint64_t>(opt->total_steps));
    binio::put_u32(os, static_cast<uint32_t>(opt->velocity.size()));
    for (const auto& [name, t] : opt->velocity) put_tensor(os, name, t);
  } else {
    binio::put_u8(os, 0);
  }
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4))
    throw IoError("checkpoint: bad magic in " + path + " (expected SMLX)");
  const uint32_t version = binio::get_u32(is, "version");
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  Checkpoint ckpt;
  ckpt.config = RunConfig::parse(binio::get_string(is, "config"));
  const uint32_t count = binio::get_u32(is, "tensor count");
  for (uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(get_tensor(is));
  const uint8_t has_opt = binio::get_u8(is, "optimizer flag");
  if (has_opt == 1) {
    OptimizerSnapshot opt;
    opt.epoch = static_cast<int>(binio::get_u32(is, "optimizer epoch"));
    opt.step = static_cast<int64_t>(binio::get_u64(is, "optimizer step"));
    opt.total_steps = static_cast<int64_t>(binio::get_u64(is, "optimizer total steps"));
    const uint32_t vcount = binio::get_u32(is, "velocity count");
    for (uint32_t i = 0; i < vcount; ++i) opt.velocity.push_back(get_tensor(is));
    ckpt.optimizer = std::move(opt);
  } else if (has_opt != 0) {
    throw IoError("checkpoint: corrupted optimizer flag in " + path);
  }
  return ckpt;
}

std::unique_ptr<Network> restore_network(const Checkpoint& ckpt) {
  return restore_network_with_t(ckpt, ckpt.config.net.t_steps);
}

std::unique_ptr<Network> restore_network_with_t(const Checkpoint& ckpt, int t_steps) {
  NetworkConfig nc = ckpt.config.net;
  nc.t_steps = t_steps;
  auto net = std::make_unique<Network>(nc);

  auto lookup = [&](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : ckpt.tensors)
      if (n == name) return &t;
    return nullptr;
  };
  // validate everything first: every parameter and buffer must be present
  // with the right shape
  for (const auto& [name, p] : net->parameters()) {
    const Tensor* src = lookup(name);
    if (!src) throw IoError("checkpoint: missing tensor '" + name + "'");
    if (src->shape() != p->value.shape())
      throw IoError("checkpoint: shape mismatch for '" + name + "': file has " + shape_str(src->shape()) +
                    ", network expects " + shape_str(p->value.shape()));
  }
  for (const auto& [name, b] : net->buffers()) {
    const Tensor* src = lookup(name);
    if (!src) throw IoError("checkpoint: missing tensor '" + name + "'");
    if (src->shape() != b->shape())
      throw IoError("checkpoint: shape mismatch for '" + name + "'");
  }
  for (auto& [name, p] : net->parameters()) p->value = *lookup(name);
  for (auto& [name, b] : net->buffers()) *b = *lookup(name);
  return net;
}

}  // namespace spikemix
