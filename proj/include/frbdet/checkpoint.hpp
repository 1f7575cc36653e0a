#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "frbdet/config.hpp"
#include "frbdet/nn.hpp"

namespace frbdet {

// Single-file checkpoint container, format "frbdet-ckpt-v1":
//   frbdet-ckpt-v1\n
//   iteration <n>\n
//   config-begin\n ... key=value ...\n config-end\n
//   tensor <name> <rank> <d0> ... <dk>\n <raw little-endian doubles>
//   end\n
// Raw double payloads make load(save(x)) bitwise exact.

inline constexpr const char* kCheckpointMagic = "frbdet-ckpt-v1";

struct CheckpointData {
  long iteration = 0;
  KeyValues config;
  std::map<std::string, Tensor> tensors;
};

namespace detail {

inline void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (int i = 0; i < t.rank(); ++i) out << ' ' << t.dim(i);
  out << '\n';
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, long iteration, const KeyValues& config,
                            const ParamRegistry& params,
                            const std::vector<std::pair<std::string, const Tensor*>>& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << kCheckpointMagic << '\n';
  out << "iteration " << iteration << '\n';
  out << "config-begin\n";
  for (const auto& [k, v] : config) out << k << '=' << v << '\n';
  out << "config-end\n";
  for (const auto& e : params.entries()) detail::write_tensor(out, e.name, *e.value);
  for (const auto& [name, tensor] : extra) detail::write_tensor(out, name, *tensor);
  out << "end\n";
  if (!out) throw DataError("checkpoint write failed: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw DataError("incompatible checkpoint version in " + path);
  CheckpointData data;
  if (!std::getline(in, line) || line.rfind("iteration ", 0) != 0)
    throw DataError("malformed checkpoint header: " + path);
  data.iteration = std::stol(line.substr(10));
  if (!std::getline(in, line) || line != "config-begin")
    throw DataError("malformed checkpoint header: " + path);
  while (std::getline(in, line) && line != "config-end") {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) data.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  while (std::getline(in, line)) {
    if (line == "end") return data;
    if (line.rfind("tensor ", 0) != 0) throw DataError("malformed checkpoint body: " + path);
    std::stringstream ss(line.substr(7));
    std::string name;
    int rank = 0;
    ss >> name >> rank;
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) ss >> shape[static_cast<std::size_t>(i)];
    if (!ss) throw DataError("malformed tensor header: " + path);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
    if (!in) throw DataError("truncated checkpoint: " + path);
    data.tensors.emplace(name, std::move(t));
  }
  throw DataError("truncated checkpoint: " + path);
}

// Copies stored tensors into a registry built from the same config snapshot.
inline void restore_params(const CheckpointData& data, ParamRegistry& params) {
  for (auto& e : params.entries()) {
    const auto it = data.tensors.find(e.name);
    if (it == data.tensors.end())
      throw DataError("checkpoint missing tensor: " + e.name);
    if (it->second.shape() != e.value->shape())
      throw DataError("checkpoint shape mismatch for " + e.name);
    *e.value = it->second;
  }
}

}  // namespace frbdet
