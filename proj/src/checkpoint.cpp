#include "fatffm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fatffm/error.hpp"

namespace fatffm {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'T', 'F', 'F', 'M', 'C', 'K'};

std::uint32_t fnv1a(const char* data, std::size_t size) {
  std::uint32_t h = 2166136261u;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 16777619u;
  }
  return h;
}

template <typename U>
void put(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const std::string& what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b]))
               << (8 * b);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string take(std::size_t size, const std::string& what) {
    need(size, what);
    std::string out = bytes_.substr(pos_, size);
    pos_ += size;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t size, const std::string& what) {
    if (bytes_.size() - pos_ < size) {
      throw CheckpointError("truncated checkpoint while reading " + what);
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Model<float>& model) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string spec = model.spec().to_json().dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out += spec;
  const auto& params = model.params();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto& name = params.name(b);
    const auto& t = params[b];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (const auto d : t.shape()) put<std::uint64_t>(out, d);
    const std::size_t start = out.size();
    for (const float v : t.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    put<std::uint32_t>(out, fnv1a(out.data() + start, out.size() - start));
  }
  return out;
}

Model<float> deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto spec_len = in.get<std::uint32_t>("spec length");
  ModelSpec spec;
  try {
    spec = ModelSpec::from_json(
        nlohmann::json::parse(in.take(spec_len, "spec")));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad model spec header: ") + e.what());
  }

  const ParamSet<float> layout = make_param_layout<float>(spec);
  const auto count = in.get<std::uint32_t>("block count");
  ParamSet<float> params;
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::string where = "block " + std::to_string(b);
    const auto name_len = in.get<std::uint32_t>(where + " name length");
    if (name_len > 256) {
      throw CheckpointError(where + ": implausible name length");
    }
    const std::string name = in.take(name_len, where + " name");
    const std::string label = "block '" + name + "'";
    const auto rank = in.get<std::uint32_t>(label + " rank");
    if (rank > 8) throw CheckpointError(label + ": implausible rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(
          in.get<std::uint64_t>(label + " shape")));
    }
    const auto expected = layout.find(name);
    if (!expected || layout[*expected].shape() != shape) {
      throw CheckpointError(label + " with shape " + shape_string(shape) +
                            " does not belong to a " + spec.display_name() +
                            " model");
    }
    const std::size_t size = shape_size(shape);
    const std::string raw = in.take(size * 4, label + " values");
    const auto checksum = in.get<std::uint32_t>(label + " checksum");
    if (checksum != fnv1a(raw.data(), raw.size())) {
      throw CheckpointError(label + ": checksum mismatch (corrupted values)");
    }
    std::vector<float> values(size);
    for (std::size_t i = 0; i < size; ++i) {
      std::uint32_t word = 0;
      for (std::size_t byte = 0; byte < 4; ++byte) {
        word |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(raw[i * 4 + byte]))
                << (8 * byte);
      }
      values[i] = std::bit_cast<float>(word);
    }
    params.add(name, Tensor<float>(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after last block");
  try {
    return Model<float>(std::move(spec), std::move(params));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint blocks do not match spec: ") +
                          e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     const Model<float>& model) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fatffm
