#include "dgcw/params.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dgcw/dgt.hpp"

namespace dgcw {

const char* role_name(ParamRole role) {
  switch (role) {
    case ParamRole::Weight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::NormAffine: return "norm";
    case ParamRole::Buffer: return "buffer";
  }
  return "?";
}

template <typename T>
void ParamSet<T>::add(std::string name, Tensor<T> tensor, ParamRole role) {
  if (find(name)) throw std::logic_error("duplicate parameter name " + name);
  entries_.push_back({std::move(name), std::move(tensor), role});
}

template <typename T>
void ParamSet<T>::add(const std::string& prefix, const LinearParams<T>& p) {
  add(prefix + ".weight", p.weight, ParamRole::Weight);
  add(prefix + ".bias", p.bias, ParamRole::Bias);
}

template <typename T>
void ParamSet<T>::add(const std::string& prefix, const Conv2dParams<T>& p) {
  add(prefix + ".weight", p.weight, ParamRole::Weight);
  if (p.bias.defined()) add(prefix + ".bias", p.bias, ParamRole::Bias);
}

template <typename T>
void ParamSet<T>::add(const std::string& prefix, const BatchNormParams<T>& p) {
  add(prefix + ".scale", p.scale, ParamRole::NormAffine);
  add(prefix + ".shift", p.shift, ParamRole::NormAffine);
  add(prefix + ".running_mean", p.running_mean, ParamRole::Buffer);
  add(prefix + ".running_var", p.running_var, ParamRole::Buffer);
}

template <typename T>
const NamedParam<T>* ParamSet<T>::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

template <typename T>
std::size_t ParamSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() const {
  for (const auto& e : entries_) {
    auto t = e.tensor;
    t.zero_grad();
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamSet<T>& params) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
  manifest << "name,role,dtype,shape,file\n";
  for (const auto& e : params.entries()) {
    const std::string file = e.name + ".dgt";
    write_dgt(dir / file, e.tensor);
    std::string shape;
    for (std::size_t i = 0; i < e.tensor.rank(); ++i) shape += (i ? "x" : "") + std::to_string(e.tensor.dim(i));
    manifest << e.name << ',' << role_name(e.role) << ',' << dtype_name(dtype_of<T>()) << ',' << shape << ','
             << file << '\n';
  }
}

template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const ParamSet<T>& params) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  std::map<std::string, std::string> files;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, role, dtype, shape, file;
    std::getline(ls, name, ',');
    std::getline(ls, role, ',');
    std::getline(ls, dtype, ',');
    std::getline(ls, shape, ',');
    std::getline(ls, file, ',');
    files[name] = file;
  }
  for (const auto& e : params.entries()) {
    auto it = files.find(e.name);
    if (it == files.end()) throw std::runtime_error("checkpoint lacks parameter " + e.name);
    auto loaded = read_dgt<T>(dir / it->second);
    if (loaded.shape() != e.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + e.name + ": " + shape_str(loaded.shape()) +
                               " vs " + shape_str(e.tensor.shape()));
    auto dst = e.tensor;
    auto values = dst.mutable_data();
    std::copy(loaded.data().begin(), loaded.data().end(), values.begin());
  }
  if (files.size() != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(files.size()) + " entries, model expects " +
                             std::to_string(params.size()));
}

template class ParamSet<float>;
template class ParamSet<double>;
template void save_checkpoint(const std::filesystem::path&, const ParamSet<float>&);
template void save_checkpoint(const std::filesystem::path&, const ParamSet<double>&);
template void load_checkpoint(const std::filesystem::path&, const ParamSet<float>&);
template void load_checkpoint(const std::filesystem::path&, const ParamSet<double>&);

}  // namespace dgcw
