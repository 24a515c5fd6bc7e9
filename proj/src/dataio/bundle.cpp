#include "flowgnn/dataio/bundle.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "flowgnn/errors.hpp"

namespace fs = std::filesystem;

namespace flowgnn::dataio {
namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'F', 'G', 'T', 'S'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(path + ": truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError(path + ": truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& out, const double* src, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(src),
              static_cast<std::streamsize>(n * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, &src[i], sizeof bits);
      put_u64(out, bits);
    }
  }
}

void get_f64s(std::istream& in, double* dst, std::size_t n,
              const std::string& path) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(dst),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError(path + ": truncated");
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t bits = get_u64(in, path);
      std::memcpy(&dst[i], &bits, sizeof bits);
    }
  }
}

void put_i32s(std::ostream& out, const int* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    put_u32(out, static_cast<std::uint32_t>(src[i]));
}

void get_i32s(std::istream& in, int* dst, std::size_t n,
              const std::string& path) {
  for (std::size_t i = 0; i < n; ++i)
    dst[i] = static_cast<std::int32_t>(get_u32(in, path));
}

void put_str(std::ostream& out, const std::string& s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max())
    throw UsageError("endpoint key too long to serialize");
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in, const std::string& path) {
  const std::uint32_t n = get_u32(in, path);
  std::string s(n, '\0');
  if (n > 0) {
    in.read(s.data(), n);
    if (!in) throw DataError(path + ": truncated");
  }
  return s;
}

void write_split(const std::string& path, const EncodedFlows& f) {
  const std::size_t rows = f.rows();
  if (f.features.size() != rows * f.feature_dim || f.labels.size() != rows ||
      f.binary_labels.size() != rows || f.timestamps.size() != rows ||
      f.endpoints.size() != rows)
    throw UsageError("encoded split has inconsistent row counts");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, rows);
  put_u64(out, f.feature_dim);
  put_f64s(out, f.features.data(), f.features.size());
  put_i32s(out, f.labels.data(), rows);
  put_i32s(out, f.binary_labels.data(), rows);
  put_f64s(out, f.timestamps.data(), rows);
  for (const auto& key : f.endpoints) {
    put_str(out, key.src);
    put_str(out, key.dst);
  }
  if (!out) throw DataError("write failed: " + path);
}

EncodedFlows read_split(const std::string& path) {
  std::error_code ec;
  const std::uintmax_t fsize = fs::file_size(path, ec);
  if (ec) throw DataError("missing split file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing split file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": bad magic");
  const std::uint32_t version = get_u32(in, path);
  if (version != kVersion)
    throw DataError(path + ": unsupported version " + std::to_string(version));
  const std::uint64_t rows = get_u64(in, path);
  const std::uint64_t cols = get_u64(in, path);
  // Floor on the remaining payload; refuses huge allocations for files
  // whose header promises more data than they contain.
  unsigned __int128 need = 24;
  need += static_cast<unsigned __int128>(rows) * cols * 8;
  need += static_cast<unsigned __int128>(rows) * 24;
  if (need > fsize) throw DataError(path + ": truncated");
  EncodedFlows f;
  f.feature_dim = static_cast<std::size_t>(cols);
  f.features.resize(static_cast<std::size_t>(rows * cols));
  f.labels.resize(static_cast<std::size_t>(rows));
  f.binary_labels.resize(static_cast<std::size_t>(rows));
  f.timestamps.resize(static_cast<std::size_t>(rows));
  f.endpoints.resize(static_cast<std::size_t>(rows));
  get_f64s(in, f.features.data(), f.features.size(), path);
  get_i32s(in, f.labels.data(), f.labels.size(), path);
  get_i32s(in, f.binary_labels.data(), f.binary_labels.size(), path);
  get_f64s(in, f.timestamps.data(), f.timestamps.size(), path);
  for (auto& key : f.endpoints) {
    key.src = get_str(in, path);
    key.dst = get_str(in, path);
  }
  in.peek();
  if (!in.eof()) throw DataError(path + ": trailing bytes");
  return f;
}

}  // namespace

void save_bundle(const std::string& dir, const SplitBundle& bundle) {
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream meta(root / "meta.txt", std::ios::trunc);
    if (!meta) throw DataError("cannot write " + (root / "meta.txt").string());
    meta << "bundle_version 1\n";
    meta << "dataset " << bundle.dataset << "\n";
    if (bundle.variant.empty())
      meta << "variant\n";
    else
      meta << "variant " << bundle.variant << "\n";
    meta << "stratified " << (bundle.stratified ? 1 : 0) << "\n";
    meta << "seed " << bundle.seed << "\n";
    meta << "feature_dim " << bundle.train.feature_dim << "\n";
    meta << "rows " << bundle.train.rows() << " " << bundle.val.rows() << " "
         << bundle.test.rows() << "\n";
    for (const auto& c : bundle.classes) meta << "class " << c << "\n";
    if (!meta) throw DataError("write failed: " + (root / "meta.txt").string());
  }
  write_split((root / "train.fgt").string(), bundle.train);
  write_split((root / "val.fgt").string(), bundle.val);
  write_split((root / "test.fgt").string(), bundle.test);
}

SplitBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  const std::string meta_path = (root / "meta.txt").string();
  std::ifstream meta(meta_path);
  if (!meta) throw DataError("missing bundle metadata: " + meta_path);

  SplitBundle bundle;
  bool saw_version = false;
  std::size_t meta_dim = 0;
  std::size_t meta_rows[3] = {0, 0, 0};
  std::string line;
  int line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value =
        space == std::string::npos ? std::string() : line.substr(space + 1);
    const std::string where = meta_path + ":" + std::to_string(line_no);
    try {
      if (key == "bundle_version") {
        if (std::stoul(value) != 1)
          throw DataError(where + ": unsupported bundle version " + value);
        saw_version = true;
      } else if (key == "dataset") {
        bundle.dataset = value;
      } else if (key == "variant") {
        bundle.variant = value;
      } else if (key == "stratified") {
        bundle.stratified = value != "0";
      } else if (key == "seed") {
        bundle.seed = std::stoull(value);
      } else if (key == "feature_dim") {
        meta_dim = std::stoul(value);
      } else if (key == "rows") {
        std::istringstream row_in(value);
        if (!(row_in >> meta_rows[0] >> meta_rows[1] >> meta_rows[2]))
          throw DataError(where + ": expected three row counts");
      } else if (key == "class") {
        bundle.classes.push_back(value);
      } else {
        throw DataError(where + ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw DataError(where + ": unparseable value '" + value + "'");
    } catch (const std::out_of_range&) {
      throw DataError(where + ": value out of range '" + value + "'");
    }
  }
  if (!saw_version)
    throw DataError(meta_path + ": missing bundle_version");

  bundle.train = read_split((root / "train.fgt").string());
  bundle.val = read_split((root / "val.fgt").string());
  bundle.test = read_split((root / "test.fgt").string());

  const EncodedFlows* splits[3] = {&bundle.train, &bundle.val, &bundle.test};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    if (splits[i]->feature_dim != meta_dim)
      throw DataError(std::string(names[i]) +
                      " split feature dim disagrees with bundle metadata");
    if (splits[i]->rows() != meta_rows[i])
      throw DataError(std::string(names[i]) +
                      " split row count disagrees with bundle metadata");
    if (!bundle.classes.empty())
      for (int label : splits[i]->labels)
        if (label < 0 || static_cast<std::size_t>(label) >= bundle.classes.size())
          throw DataError(std::string(names[i]) +
                          " split holds a label outside the class list");
  }
  return bundle;
}

}  // namespace flowgnn::dataio
