#include "dctgen/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "dctgen/error.hpp"

namespace dctgen {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string("checkpoint truncated reading ") + field);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

float get_f32(std::istream& in) {
  const std::uint32_t v = get_u32(in, "tensor data");
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void write_parameters(const ParameterSet<float>& params, std::ostream& out) {
  out.write("DCTW", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) put_f32(out, p.value.data()[i]);
  }
}

void read_parameters(ParameterSet<float>& params, std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DCTW", 4) != 0) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(in, "tensor count");
  if (count != params.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t len = get_u32(in, "name length");
    if (len > 4096) throw FormatError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("checkpoint truncated reading tensor name");
    Parameter<float>* p = params.find(name);
    if (!p) throw FormatError("checkpoint: unknown tensor " + name);
    const std::uint32_t rank = get_u32(in, "rank");
    if (rank != 2) throw FormatError("checkpoint: tensor " + name + " has rank " + std::to_string(rank));
    const std::uint32_t rows = get_u32(in, "dims");
    const std::uint32_t cols = get_u32(in, "dims");
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw FormatError("checkpoint: tensor " + name + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    }
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = get_f32(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
}

std::filesystem::path config_path_for(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_checkpoint(const DCTransformer<float>& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  write_parameters(model.params(), out);
  std::ofstream cfg(config_path_for(path));
  if (!cfg) throw InputError("cannot write " + config_path_for(path).string());
  cfg << to_json(model.config()).dump(2) << "\n";
}

DCTransformer<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream cfg(config_path_for(path));
  if (!cfg) throw InputError("missing model config " + config_path_for(path).string());
  nlohmann::json j;
  try {
    cfg >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model config " + config_path_for(path).string() + ": " + e.what());
  }
  DCTransformer<float> model(model_config_from_json(j));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  read_parameters(model.params(), in);
  return model;
}

}  // namespace dctgen
