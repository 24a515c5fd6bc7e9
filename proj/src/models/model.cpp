#include "flowgnn/models/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include "flowgnn/errors.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::models {
namespace {

using diffcore::Tensor;

constexpr char kMagic[4] = {'F', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(path + ": truncated checkpoint");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw DataError(path + ": truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(get_u64(in, path));
}

std::string get_str(std::istream& in, const std::string& path) {
  std::uint32_t len = get_u32(in, path);
  if (len > (1u << 20)) throw DataError(path + ": oversized string field");
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) {
    throw DataError(path + ": truncated checkpoint");
  }
  return s;
}

void put_f64s(std::ostream& out, const std::vector<double>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double x : v) put_f64(out, x);
  }
}

void get_f64s(std::istream& in, std::vector<double>& v, const std::string& path) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw DataError(path + ": truncated checkpoint");
    }
  } else {
    for (double& x : v) x = get_f64(in, path);
  }
}

using Shape = std::vector<std::size_t>;

// Full parameter inventory for one architecture; init and checkpoint
// loading must agree on it exactly.
std::vector<std::pair<std::string, Shape>> param_specs(Arch arch,
                                                       const Hyper& h) {
  std::vector<std::pair<std::string, Shape>> specs;
  const std::size_t f = h.feature_dim;
  const std::size_t d = h.hidden;
  const std::size_t hd = h.head_dim;
  const std::size_t att_out = h.heads * hd;
  switch (arch) {
    case Arch::kEGraphSageM: {
      for (std::size_t k = 1; k <= h.sage_layers; ++k) {
        std::size_t in = (k == 1) ? f : d;
        specs.emplace_back("sage.l" + std::to_string(k) + ".W",
                           Shape{2 * in, d});
      }
      specs.emplace_back("cls.W", Shape{2 * d + f, h.num_classes});
      specs.emplace_back("cls.b", Shape{h.num_classes});
      break;
    }
    case Arch::kGat: {
      for (std::size_t k = 1; k <= h.layers; ++k) {
        std::size_t in = (k == 1) ? f : att_out;
        for (std::size_t m = 1; m <= h.heads; ++m) {
          std::string base =
              "gat.l" + std::to_string(k) + ".h" + std::to_string(m);
          specs.emplace_back(base + ".W", Shape{in, hd});
          specs.emplace_back(base + ".a", Shape{2 * hd, 1});
        }
      }
      specs.emplace_back("cls.W", Shape{att_out, h.num_classes});
      specs.emplace_back("cls.b", Shape{h.num_classes});
      break;
    }
    case Arch::kGtcnG: {
      specs.emplace_back("tcn.l1.filter", Shape{2, f, d});
      specs.emplace_back("tcn.l1.fbias", Shape{d});
      specs.emplace_back("tcn.l1.gate", Shape{2, f, d});
      specs.emplace_back("tcn.l1.gbias", Shape{d});
      specs.emplace_back("tcn.l2.filter", Shape{2, d, d});
      specs.emplace_back("tcn.l2.fbias", Shape{d});
      specs.emplace_back("tcn.l2.gate", Shape{2, d, d});
      specs.emplace_back("tcn.l2.gbias", Shape{d});
      specs.emplace_back("adp.E1", Shape{h.num_nodes, h.embed_rank});
      specs.emplace_back("adp.E2", Shape{h.num_nodes, h.embed_rank});
      for (std::size_t k = 0; k <= h.diffusion_order; ++k) {
        std::string base = "diff.k" + std::to_string(k);
        specs.emplace_back(base + ".W1", Shape{f, d});
        specs.emplace_back(base + ".W2", Shape{f, d});
        specs.emplace_back(base + ".W3", Shape{f, d});
      }
      specs.emplace_back("res.W", Shape{f, d});
      for (std::size_t k = 1; k <= h.layers; ++k) {
        // Each attention layer ends with a residual concat, so layers past
        // the first read heads*head_dim + hidden columns.
        std::size_t in = (k == 1) ? f : att_out + d;
        for (std::size_t m = 1; m <= h.heads; ++m) {
          std::string base =
              "att.l" + std::to_string(k) + ".h" + std::to_string(m);
          specs.emplace_back(base + ".W", Shape{in, hd});
          specs.emplace_back(base + ".a", Shape{2 * hd, 1});
        }
      }
      specs.emplace_back("fuse.W1", Shape{att_out + 4 * d, d});
      specs.emplace_back("fuse.b1", Shape{d});
      specs.emplace_back("cls.W", Shape{d, h.num_classes});
      specs.emplace_back("cls.b", Shape{h.num_classes});
      break;
    }
  }
  return specs;
}

bool is_bias(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    std::string s(suffix);
    return name.size() >= s.size() &&
           name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".b") || ends_with(".b1") || ends_with(".fbias") ||
         ends_with(".gbias");
}

Tensor init_param(const std::string& name, const Shape& shape,
                  std::uint64_t seed) {
  if (is_bias(name)) return Tensor::zeros(shape, /*requires_grad=*/true);
  double fan_in = 0.0;
  double fan_out = 0.0;
  if (shape.size() == 2) {
    fan_in = static_cast<double>(shape[0]);
    fan_out = static_cast<double>(shape[1]);
  } else {  // conv kernel [width, in, out]
    fan_in = static_cast<double>(shape[0] * shape[1]);
    fan_out = static_cast<double>(shape[0] * shape[2]);
  }
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  rng::Pcg gen(rng::derive(seed, name));
  return Tensor::uniform(shape, -limit, limit, gen, /*requires_grad=*/true);
}

}  // namespace

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::kEGraphSageM: return "egraphsage_m";
    case Arch::kGat: return "gat";
    case Arch::kGtcnG: return "gtcn_g";
  }
  throw ConfigError("unknown architecture value");
}

Arch arch_from_name(const std::string& name) {
  if (name == "egraphsage_m") return Arch::kEGraphSageM;
  if (name == "gat") return Arch::kGat;
  if (name == "gtcn_g") return Arch::kGtcnG;
  throw ConfigError("unknown model name: " + name +
                    " (expected egraphsage_m, gat, or gtcn_g)");
}

void Hyper::validate(Arch arch) const {
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  if (arch == Arch::kEGraphSageM) {
    if (sage_layers == 0) throw ConfigError("sage_layers must be positive");
    return;
  }
  if (layers < 1 || layers > 6) {
    throw ConfigError("attention depth must lie in 1..6");
  }
  if (heads == 0 || head_dim == 0) {
    throw ConfigError("heads and head_dim must be positive");
  }
  if (arch == Arch::kGtcnG) {
    if (window == 0) throw ConfigError("temporal window must be positive");
    if (embed_rank == 0) throw ConfigError("embed_rank must be positive");
    if (num_nodes == 0) {
      throw ConfigError("num_nodes must be set for the adaptive adjacency");
    }
    if (num_nodes > adaptive_budget) {
      throw ResourceError("graph has " + std::to_string(num_nodes) +
                          " nodes; dense adaptive adjacency capped at " +
                          std::to_string(adaptive_budget));
    }
  }
}

diffcore::Tensor& ModelState::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("no such parameter: " + name);
  return it->second;
}

const diffcore::Tensor& ModelState::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("no such parameter: " + name);
  return it->second;
}

ModelState init_model(Arch arch, const Hyper& hyper, std::uint64_t seed) {
  hyper.validate(arch);
  ModelState state;
  state.arch = arch;
  state.hyper = hyper;
  for (const auto& [name, shape] : param_specs(arch, hyper)) {
    state.params.emplace(name, init_param(name, shape, seed));
  }
  return state;
}

void save_checkpoint(const std::string& path, const ModelState& state) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_str(out, arch_name(state.arch));
  const Hyper& h = state.hyper;
  for (std::uint64_t v :
       {h.feature_dim, h.num_classes, h.hidden, h.layers, h.heads, h.head_dim,
        h.sage_layers, h.diffusion_order, h.window, h.embed_rank, h.num_nodes,
        h.adaptive_budget}) {
    put_u64(out, v);
  }
  put_f64(out, h.dropout);
  put_u64(out, state.params.size());
  for (const auto& [name, tensor] : state.params) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (std::size_t dim : tensor.shape()) put_u64(out, dim);
    put_f64s(out, tensor.data());
  }
  if (!out) throw DataError(path + ": write failed");
}

ModelState load_checkpoint(const std::string& path,
                           std::optional<Arch> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": missing checkpoint file");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": bad magic (not a checkpoint)");
  }
  std::uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw DataError(path + ": unsupported checkpoint version " +
                    std::to_string(version));
  }
  Arch arch = arch_from_name(get_str(in, path));
  if (expected && arch != *expected) {
    throw UsageError(path + ": checkpoint holds a " + arch_name(arch) +
                     " model, expected " + arch_name(*expected));
  }
  Hyper h;
  std::size_t* fields[] = {&h.feature_dim,   &h.num_classes, &h.hidden,
                           &h.layers,        &h.heads,       &h.head_dim,
                           &h.sage_layers,   &h.diffusion_order,
                           &h.window,        &h.embed_rank,  &h.num_nodes,
                           &h.adaptive_budget};
  static_assert(sizeof(std::size_t) == sizeof(std::uint64_t));
  for (std::size_t* field : fields) {
    *field = static_cast<std::size_t>(get_u64(in, path));
  }
  h.dropout = get_f64(in, path);
  h.validate(arch);

  ModelState state;
  state.arch = arch;
  state.hyper = h;
  // Records may arrive in any order; every expected parameter must show
  // up exactly once with its expected shape.
  std::map<std::string, Shape> wanted;
  for (auto& [name, shape] : param_specs(arch, h)) {
    wanted.emplace(std::move(name), std::move(shape));
  }
  std::uint64_t count = get_u64(in, path);
  if (count != wanted.size()) {
    throw DataError(path + ": expected " + std::to_string(wanted.size()) +
                    " parameters, found " + std::to_string(count));
  }
  for (std::uint64_t rec = 0; rec < count; ++rec) {
    std::string name = get_str(in, path);
    auto it = wanted.find(name);
    if (it == wanted.end()) {
      throw DataError(path + ": unexpected or duplicate parameter " + name);
    }
    const Shape& want_shape = it->second;
    std::uint32_t rank = get_u32(in, path);
    if (rank != want_shape.size()) {
      throw DataError(path + ": parameter " + name + " has rank " +
                      std::to_string(rank));
    }
    std::size_t total = 1;
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = get_u64(in, path);
      if (shape[i] != want_shape[i]) {
        throw DataError(path + ": parameter " + name + " has wrong shape");
      }
      total *= shape[i];
    }
    std::vector<double> data(total);
    get_f64s(in, data, path);
    state.params.emplace(name,
                         Tensor::from_data(shape, data, /*requires_grad=*/true));
    wanted.erase(it);
  }
  in.peek();
  if (!in.eof()) throw DataError(path + ": trailing bytes after parameters");
  return state;
}

}  // namespace flowgnn::models
