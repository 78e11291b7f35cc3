#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dctgen/dct_quant.hpp"
#include "dctgen/pixel_pipeline.hpp"

namespace dctgen {

// Image and codec geometry carried by every DCT image and tuple sequence.
struct Geometry {
  int height = 0;
  int width = 0;
  int block_size = 8;
  int quality = 50;
  int clip = kDefaultClip;

  int blocks_high() const { return ceil_div(height, block_size); }
  int blocks_wide() const { return ceil_div(width, block_size); }
  int num_positions() const { return blocks_high() * blocks_wide(); }
  int band_size() const { return block_size * block_size; }
  int num_channels() const { return 3 * band_size(); }
  int stop_channel() const { return num_channels(); }
  int value_vocab() const { return 2 * clip + 1; }
  long subpixels() const { return 3L * height * width; }

  // Throws InputError when any field is out of its supported range.
  void validate() const;
  bool operator==(const Geometry&) const = default;
};

enum class Ordering : std::uint8_t { Generation = 0, Colorization = 1 };

std::string to_string(Ordering ordering);
Ordering parse_ordering(const std::string& name);

// Plane index of a channel: 0 luma, 1 Cb, 2 Cr.
inline int channel_plane(int channel, int block_size) { return channel / (block_size * block_size); }
// Zigzag frequency index of a channel within its plane.
inline int channel_frequency(int channel, int block_size) { return channel % (block_size * block_size); }

// Sort rank of a channel under an ordering. Sequences are sorted by
// (rank, position).
//   Generation:   3k + plane          (Y, Cb, Cr interleaved per frequency)
//   Colorization: k for luma, B^2 + 2k + (plane - 1) for chroma
int channel_rank(int channel, int block_size, Ordering ordering);
int channel_at_rank(int rank, int block_size, Ordering ordering);

// Dense Hb x Wb x 3B^2 quantized coefficients, position-major.
struct DctImage {
  Geometry geometry;
  std::vector<std::int32_t> values;

  DctImage() = default;
  explicit DctImage(const Geometry& geo);

  std::size_t index(int position, int channel) const {
    return static_cast<std::size_t>(position) * geometry.num_channels() + channel;
  }
  std::int32_t& at(int position, int channel) { return values[index(position, channel)]; }
  std::int32_t at(int position, int channel) const { return values[index(position, channel)]; }
  std::int32_t& at(int row, int col, int channel) { return at(row * geometry.blocks_wide() + col, channel); }
  std::int32_t at(int row, int col, int channel) const { return at(row * geometry.blocks_wide() + col, channel); }

  std::size_t count_nonzero() const;
  bool operator==(const DctImage&) const = default;
};

struct Triple {
  int channel = 0;
  int position = 0;
  int value = 0;
  bool operator==(const Triple&) const = default;
};

// Sparse coordinate list of the nonzero entries of a DCT image. `triples`
// holds data triples only; the stop marker is represented by `terminated`
// and materialises as {stop_channel, 0, 0} in elements().
struct TupleSeq {
  Geometry geometry;
  Ordering ordering = Ordering::Generation;
  std::vector<Triple> triples;
  bool terminated = true;

  Triple stop_marker() const { return {geometry.stop_channel(), 0, 0}; }
  // Data triples followed by the stop marker when terminated.
  std::vector<Triple> elements() const;
  std::size_t num_elements() const { return triples.size() + (terminated ? 1 : 0); }
  bool is_stop(const Triple& t) const { return t.channel == geometry.stop_channel(); }
  bool operator==(const TupleSeq&) const = default;
};

// (row, col) of each zigzag index: anti-diagonals r + c = 0 .. 2B-2 with
// alternating direction, starting (0,0), (0,1), (1,0), ...
std::vector<std::pair<int, int>> zigzag(int block_size);

// Quantized coefficients of one plane; block (i, j) contiguous in natural
// row-major (not zigzag) order.
struct QuantGrid {
  int rows = 0;
  int cols = 0;
  int block_size = 0;
  std::vector<int> values;

  QuantGrid() = default;
  QuantGrid(int r, int c, int b) : rows(r), cols(c), block_size(b), values(static_cast<std::size_t>(r) * c * b * b, 0) {}
  int* block(int i, int j) { return values.data() + (static_cast<std::size_t>(i) * cols + j) * block_size * block_size; }
  const int* block(int i, int j) const {
    return values.data() + (static_cast<std::size_t>(i) * cols + j) * block_size * block_size;
  }
  bool operator==(const QuantGrid&) const = default;
};

struct QuantGrids {
  QuantGrid luma;
  QuantGrid cb;
  QuantGrid cr;
  bool operator==(const QuantGrids&) const = default;
};

// Chroma grids must be ceil(ceil(H/2)/B) x ceil(ceil(W/2)/B); chroma block
// (i, j) is placed at DCT-image position (2i, 2j).
DctImage assemble_dct_image(const QuantGrids& grids, const Geometry& geometry);
// Throws FormatError if a chroma band is nonzero at an odd coordinate.
QuantGrids disassemble_dct_image(const DctImage& img);

TupleSeq serialize(const DctImage& img, Ordering ordering);
// Accepts unterminated prefixes. Throws FormatError on duplicate (c, p),
// zero values, out-of-range fields, chroma at odd positions, or triples not
// sorted by the declared ordering.
DctImage deserialize(const TupleSeq& seq);
// Validation only; same checks as deserialize.
void validate_sequence(const TupleSeq& seq);

// Pixel -> quantized grids -> DCT image.
QuantGrids quantize_planes(const YccPlanes& planes, const Geometry& geometry);
DctImage encode_dct_image(const RgbImage& img, int block_size, int quality, int clip = kDefaultClip);
TupleSeq encode_image(const RgbImage& img, int block_size, int quality, Ordering ordering, int clip = kDefaultClip);

// Dequantized coefficients per plane (same layout as QuantGrid).
struct CoefficientGrids {
  BlockGrid luma;
  BlockGrid cb;
  BlockGrid cr;
};
CoefficientGrids dequantize_grids(const QuantGrids& grids, const Geometry& geometry);
YccPlanes grids_to_planes(const CoefficientGrids& coeffs, const Geometry& geometry);
YccPlanes dct_image_to_planes(const DctImage& img);
RgbImage dct_image_to_rgb(const DctImage& img);
RgbImage decode_to_rgb(const TupleSeq& prefix);
// First n data triples of a sequence, unterminated unless n covers all.
TupleSeq take_prefix(const TupleSeq& seq, std::size_t n);

// Sum of squared dequantized-coefficient differences between two images.
double coefficient_sq_error(const DctImage& a, const DctImage& b);

// Fixed-width accounting of dense versus sparse storage.
struct BitCost {
  double dense_bits = 0.0;
  double sparse_bits = 0.0;
  double dense_bpp = 0.0;   // per image subpixel, H * W * 3
  double sparse_bpp = 0.0;
  std::size_t nonzeros = 0;
};
int bits_for(long symbols);  // ceil(log2(symbols)), 0 for a single symbol
BitCost bit_cost(const DctImage& img);

// SDCT binary container, little-endian:
//   "SDCT" u8 version=1 u32 H u32 W u8 B u8 quality u8 ordering u16 clip
//   u32 count, then count x (u16 channel, u32 position, i16 value)
inline constexpr std::uint8_t kSdctVersion = 1;
void write_sdct(const TupleSeq& seq, std::ostream& out);
void write_sdct(const TupleSeq& seq, const std::filesystem::path& path);
// Throws FormatError naming the offending field.
TupleSeq read_sdct(std::istream& in);
TupleSeq read_sdct(const std::filesystem::path& path);

}  // namespace dctgen
