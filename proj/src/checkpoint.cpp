#include "osplit/checkpoint.hpp"

#include <fstream>

#include "osplit/bytes.hpp"
#include "osplit/errors.hpp"

namespace osplit {

namespace {
constexpr char kMagic[6] = {'S', 'P', 'L', 'N', 'N', '1'};
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 6);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : t->data) put_f32(out, f);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 6 || std::memcmp(buf.data(), kMagic, 6) != 0)
    throw FormatError("checkpoint: bad magic");
  std::map<std::string, Tensor> out;
  std::size_t pos = 6;
  auto need = [&](std::size_t n) {
    if (pos + n > buf.size()) throw FormatError("checkpoint: truncated record");
  };
  while (pos < buf.size()) {
    need(4);
    std::uint32_t nlen = get_u32(buf.data() + pos);
    pos += 4;
    need(nlen);
    std::string name(reinterpret_cast<const char*>(buf.data() + pos), nlen);
    pos += nlen;
    need(4);
    std::uint32_t rank = get_u32(buf.data() + pos);
    pos += 4;
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    need(4 * rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = get_u32(buf.data() + pos);
      pos += 4;
    }
    Tensor t(shape);
    need(4 * t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t.data[i] = get_f32(buf.data() + pos);
      pos += 4;
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> named_tensors(Network& net,
                                                           const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Layer& l = net.layers[i];
    std::string base = prefix + "." + std::to_string(i) + ".";
    if (l.w.numel()) out.emplace_back(base + "w", &l.w);
    if (l.b.numel()) out.emplace_back(base + "b", &l.b);
    if (l.gamma.numel()) out.emplace_back(base + "gamma", &l.gamma);
    if (l.beta.numel()) out.emplace_back(base + "beta", &l.beta);
    if (l.run_mean.numel()) out.emplace_back(base + "run_mean", &l.run_mean);
    if (l.run_var.numel()) out.emplace_back(base + "run_var", &l.run_var);
  }
  return out;
}

void save_network(const std::string& path, Network& net, const std::string& prefix) {
  std::vector<std::pair<std::string, const Tensor*>> list;
  for (auto& [name, t] : named_tensors(net, prefix)) list.emplace_back(name, t);
  save_checkpoint(path, list);
}

void load_network(const std::string& path, Network& net, const std::string& prefix) {
  auto stored = load_checkpoint(path);
  for (auto& [name, t] : named_tensors(net, prefix)) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint: missing tensor " + name);
    if (it->second.shape != t->shape)
      throw FormatError("checkpoint: shape mismatch for " + name);
    *t = it->second;
  }
  ++net.version;
}

}  // namespace osplit
