#include "phtr/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace phtr {

namespace {

constexpr char kMagic[4] = {'P', 'H', 'T', 'R'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

void write_f32_le(std::ostream& out, double v) {
  const float f = static_cast<float>(v);
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  write_le(out, bits);
}

void write_f64_le(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le(out, bits);
}

template <class T>
T read_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != sizeof(T)) throw DataError(path + ": truncated checkpoint");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     CheckpointDtype dtype) {
  std::map<std::string, Tensor> sorted;
  for (const auto& [name, t] : tensors) {
    if (!sorted.emplace(name, t).second) {
      throw DataError("duplicate tensor name in checkpoint: " + name);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f.write(kMagic, 4);
  write_le<uint32_t>(f, kVersion);
  write_le<uint64_t>(f, sorted.size());
  for (const auto& [name, t] : sorted) {
    write_le<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint8_t>(f, static_cast<uint8_t>(dtype));
    write_le<uint32_t>(f, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) write_le<uint64_t>(f, static_cast<uint64_t>(d));
    for (double v : t.data()) {
      if (dtype == CheckpointDtype::kF32) {
        write_f32_le(f, v);
      } else {
        write_f64_le(f, v);
      }
    }
  }
  if (!f) throw DataError("short write to " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a PHTR checkpoint");
  }
  const uint32_t version = read_le<uint32_t>(f, path);
  if (version != kVersion) {
    throw DataError(path + ": unsupported checkpoint version " +
                    std::to_string(version));
  }
  const uint64_t count = read_le<uint64_t>(f, path);
  std::map<std::string, Tensor> out;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_le<uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (f.gcount() != static_cast<std::streamsize>(name_len)) {
      throw DataError(path + ": truncated checkpoint");
    }
    const uint8_t dtype = read_le<uint8_t>(f, path);
    if (dtype > 1) {
      throw DataError(path + ": unknown dtype tag " + std::to_string(dtype) +
                      " for tensor " + name);
    }
    const uint32_t rank = read_le<uint32_t>(f, path);
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int64_t>(read_le<uint64_t>(f, path)));
    }
    const int64_t numel = shape_numel(shape);
    std::vector<double> values(static_cast<size_t>(numel));
    for (int64_t k = 0; k < numel; ++k) {
      if (dtype == 0) {
        const uint32_t bits = read_le<uint32_t>(f, path);
        float fv;
        std::memcpy(&fv, &bits, sizeof(fv));
        values[static_cast<size_t>(k)] = static_cast<double>(fv);
      } else {
        const uint64_t bits = read_le<uint64_t>(f, path);
        double dv;
        std::memcpy(&dv, &bits, sizeof(dv));
        values[static_cast<size_t>(k)] = dv;
      }
    }
    out.emplace(name, Tensor::from_data(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace phtr
