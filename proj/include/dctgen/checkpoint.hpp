#pragma once

#include <filesystem>
#include <iosfwd>

#include "dctgen/model.hpp"

namespace dctgen {

// Binary parameter container, little-endian:
//   "DCTW" u32 version u32 tensor_count
//   per tensor: u32 name_len, name, u32 rank, rank x u32 dims, float32 data
// The model config is stored as JSON next to it (<path>.json).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_parameters(const ParameterSet<float>& params, std::ostream& out);
// Fills `params` by name; every tensor must be present with matching shape.
void read_parameters(ParameterSet<float>& params, std::istream& in);

std::filesystem::path config_path_for(const std::filesystem::path& checkpoint);
void save_checkpoint(const DCTransformer<float>& model, const std::filesystem::path& path);
DCTransformer<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace dctgen
