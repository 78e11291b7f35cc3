#include "dctgen/sparse_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "dctgen/error.hpp"

namespace dctgen {

void Geometry::validate() const {
  if (height < 1 || width < 1) throw InputError("image geometry must be at least 1x1");
  if (block_size < 1 || block_size > 32) throw InputError("block size must be in [1, 32]");
  if (quality < 1 || quality > 100) throw InputError("quality must be in [1, 100]");
  if (clip < 1 || clip > 32767) throw InputError("clip value must be in [1, 32767]");
}

std::string to_string(Ordering ordering) {
  return ordering == Ordering::Generation ? "generation" : "colorization";
}

Ordering parse_ordering(const std::string& name) {
  if (name == "generation") return Ordering::Generation;
  if (name == "colorization") return Ordering::Colorization;
  throw InputError("unknown ordering '" + name + "' (expected generation or colorization)");
}

int channel_rank(int channel, int block_size, Ordering ordering) {
  const int plane = channel_plane(channel, block_size);
  const int k = channel_frequency(channel, block_size);
  if (ordering == Ordering::Generation) return 3 * k + plane;
  if (plane == 0) return k;
  return block_size * block_size + 2 * k + (plane - 1);
}

int channel_at_rank(int rank, int block_size, Ordering ordering) {
  const int band = block_size * block_size;
  if (ordering == Ordering::Generation) return (rank % 3) * band + rank / 3;
  if (rank < band) return rank;
  const int r = rank - band;
  return (1 + r % 2) * band + r / 2;
}

DctImage::DctImage(const Geometry& geo)
    : geometry(geo), values(static_cast<std::size_t>(geo.num_positions()) * geo.num_channels(), 0) {}

std::size_t DctImage::count_nonzero() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::int32_t v) { return v != 0; }));
}

std::vector<Triple> TupleSeq::elements() const {
  std::vector<Triple> out = triples;
  if (terminated) out.push_back(stop_marker());
  return out;
}

std::vector<std::pair<int, int>> zigzag(int block_size) {
  if (block_size < 1) throw InputError("zigzag block size must be >= 1");
  const int b = block_size;
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(b) * b);
  for (int diag = 0; diag <= 2 * b - 2; ++diag) {
    const int lo = std::max(0, diag - b + 1);
    const int hi = std::min(diag, b - 1);
    if (diag % 2 == 1) {
      // odd diagonals run top-right to bottom-left
      for (int r = lo; r <= hi; ++r) order.emplace_back(r, diag - r);
    } else {
      for (int r = hi; r >= lo; --r) order.emplace_back(r, diag - r);
    }
  }
  return order;
}

namespace {

void check_grid(const QuantGrid& g, int rows, int cols, int b, const char* name) {
  if (g.rows != rows || g.cols != cols || g.block_size != b ||
      g.values.size() != static_cast<std::size_t>(rows) * cols * b * b) {
    throw InputError(std::string(name) + " grid shape does not match geometry (expected " + std::to_string(rows) +
                     "x" + std::to_string(cols) + " blocks of " + std::to_string(b) + ")");
  }
}

int chroma_rows(const Geometry& g) { return ceil_div(ceil_div(g.height, 2), g.block_size); }
int chroma_cols(const Geometry& g) { return ceil_div(ceil_div(g.width, 2), g.block_size); }

bool is_even_position(int position, int blocks_wide) {
  return (position / blocks_wide) % 2 == 0 && (position % blocks_wide) % 2 == 0;
}

}  // namespace

DctImage assemble_dct_image(const QuantGrids& grids, const Geometry& geometry) {
  geometry.validate();
  const int b = geometry.block_size;
  const int band = geometry.band_size();
  check_grid(grids.luma, geometry.blocks_high(), geometry.blocks_wide(), b, "luma");
  check_grid(grids.cb, chroma_rows(geometry), chroma_cols(geometry), b, "Cb");
  check_grid(grids.cr, chroma_rows(geometry), chroma_cols(geometry), b, "Cr");
  const auto zz = zigzag(b);

  DctImage img(geometry);
  for (int i = 0; i < grids.luma.rows; ++i) {
    for (int j = 0; j < grids.luma.cols; ++j) {
      const int* blk = grids.luma.block(i, j);
      for (int k = 0; k < band; ++k) img.at(i, j, k) = blk[zz[k].first * b + zz[k].second];
    }
  }
  const std::array<const QuantGrid*, 2> chroma = {&grids.cb, &grids.cr};
  for (int plane = 1; plane <= 2; ++plane) {
    const QuantGrid& g = *chroma[plane - 1];
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const int* blk = g.block(i, j);
        for (int k = 0; k < band; ++k) img.at(2 * i, 2 * j, plane * band + k) = blk[zz[k].first * b + zz[k].second];
      }
    }
  }
  return img;
}

QuantGrids disassemble_dct_image(const DctImage& img) {
  const Geometry& geo = img.geometry;
  geo.validate();
  if (img.values.size() != static_cast<std::size_t>(geo.num_positions()) * geo.num_channels()) {
    throw FormatError("DCT image tensor size does not match its geometry");
  }
  const int b = geo.block_size;
  const int band = geo.band_size();
  const auto zz = zigzag(b);
  QuantGrids out{QuantGrid(geo.blocks_high(), geo.blocks_wide(), b), QuantGrid(chroma_rows(geo), chroma_cols(geo), b),
                 QuantGrid(chroma_rows(geo), chroma_cols(geo), b)};
  for (int i = 0; i < geo.blocks_high(); ++i) {
    for (int j = 0; j < geo.blocks_wide(); ++j) {
      int* blk = out.luma.block(i, j);
      for (int k = 0; k < band; ++k) blk[zz[k].first * b + zz[k].second] = img.at(i, j, k);
      for (int plane = 1; plane <= 2; ++plane) {
        QuantGrid& g = plane == 1 ? out.cb : out.cr;
        const bool even = i % 2 == 0 && j % 2 == 0;
        for (int k = 0; k < band; ++k) {
          const int v = img.at(i, j, plane * band + k);
          if (v == 0) continue;
          if (!even) {
            throw FormatError("chroma band " + std::to_string(plane * band + k) + " nonzero at odd position (" +
                              std::to_string(i) + ", " + std::to_string(j) + ")");
          }
          // Even positions always map inside the chroma grid for valid geometries.
          g.block(i / 2, j / 2)[zz[k].first * b + zz[k].second] = v;
        }
      }
    }
  }
  return out;
}

TupleSeq serialize(const DctImage& img, Ordering ordering) {
  const Geometry& geo = img.geometry;
  TupleSeq seq{geo, ordering, {}, true};
  seq.triples.reserve(img.count_nonzero());
  const int channels = geo.num_channels();
  const int positions = geo.num_positions();
  for (int rank = 0; rank < channels; ++rank) {
    const int c = channel_at_rank(rank, geo.block_size, ordering);
    for (int p = 0; p < positions; ++p) {
      const int v = img.at(p, c);
      if (v != 0) seq.triples.push_back({c, p, v});
    }
  }
  return seq;
}

namespace {

std::string describe(std::size_t index, const Triple& t) {
  return "triple " + std::to_string(index) + " (c=" + std::to_string(t.channel) + ", p=" + std::to_string(t.position) +
         ", v=" + std::to_string(t.value) + ")";
}

// Shared by validate_sequence and deserialize; fills `img` when non-null.
void check_and_fill(const TupleSeq& seq, DctImage* img) {
  const Geometry& geo = seq.geometry;
  geo.validate();
  const int b = geo.block_size;
  const int band = geo.band_size();
  const int channels = geo.num_channels();
  const int positions = geo.num_positions();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(positions) * channels, 0);
  int prev_rank = -1;
  int prev_pos = -1;
  for (std::size_t i = 0; i < seq.triples.size(); ++i) {
    const Triple& t = seq.triples[i];
    if (t.channel == geo.stop_channel()) throw FormatError(describe(i, t) + ": stop marker before end of sequence");
    if (t.channel < 0 || t.channel >= channels) throw FormatError(describe(i, t) + ": channel out of range");
    if (t.position < 0 || t.position >= positions) throw FormatError(describe(i, t) + ": position out of range");
    if (t.value == 0) throw FormatError(describe(i, t) + ": zero value in sparse list");
    if (t.value < -geo.clip || t.value > geo.clip) throw FormatError(describe(i, t) + ": value exceeds clip bound");
    if (t.channel >= band && !is_even_position(t.position, geo.blocks_wide())) {
      throw FormatError(describe(i, t) + ": chroma triple at odd position");
    }
    auto& flag = seen[static_cast<std::size_t>(t.position) * channels + t.channel];
    if (flag) throw FormatError(describe(i, t) + ": duplicate (channel, position)");
    flag = 1;
    const int rank = channel_rank(t.channel, b, seq.ordering);
    if (rank < prev_rank || (rank == prev_rank && t.position <= prev_pos)) {
      throw FormatError(describe(i, t) + ": out of " + to_string(seq.ordering) + " order");
    }
    prev_rank = rank;
    prev_pos = t.position;
    if (img) img->at(t.position, t.channel) = t.value;
  }
}

}  // namespace

void validate_sequence(const TupleSeq& seq) { check_and_fill(seq, nullptr); }

DctImage deserialize(const TupleSeq& seq) {
  DctImage img(seq.geometry);
  check_and_fill(seq, &img);
  return img;
}

QuantGrids quantize_planes(const YccPlanes& planes, const Geometry& geometry) {
  const int b = geometry.block_size;
  const ClipBound clip{geometry.clip};
  const QuantMatrix q_luma = quant_matrix(geometry.quality, QuantKind::Luma, b);
  const QuantMatrix q_chroma = quant_matrix(geometry.quality, QuantKind::Chroma, b);
  auto quantize_plane = [&](const Plane& plane, PlaneKind kind, const QuantMatrix& q) {
    const BlockGrid grid = split_blocks(plane, b, kind);
    QuantGrid out(grid.rows, grid.cols, b);
    for (int i = 0; i < grid.rows; ++i) {
      for (int j = 0; j < grid.cols; ++j) {
        const auto coeffs = quantize(dct2(Block(b, grid.block(i, j))), q, clip);
        std::copy(coeffs.begin(), coeffs.end(), out.block(i, j));
      }
    }
    return out;
  };
  return {quantize_plane(planes.y, PlaneKind::Luma, q_luma), quantize_plane(planes.cb, PlaneKind::Chroma, q_chroma),
          quantize_plane(planes.cr, PlaneKind::Chroma, q_chroma)};
}

DctImage encode_dct_image(const RgbImage& img, int block_size, int quality, int clip) {
  if (!is_supported_block_size(block_size)) {
    throw InputError("unsupported block size " + std::to_string(block_size) + " (expected 4, 8, 16 or 32)");
  }
  const Geometry geo{img.height, img.width, block_size, quality, clip};
  geo.validate();
  return assemble_dct_image(quantize_planes(rgb_to_ycc(img), geo), geo);
}

TupleSeq encode_image(const RgbImage& img, int block_size, int quality, Ordering ordering, int clip) {
  return serialize(encode_dct_image(img, block_size, quality, clip), ordering);
}

CoefficientGrids dequantize_grids(const QuantGrids& grids, const Geometry& geometry) {
  const int b = geometry.block_size;
  const QuantMatrix q_luma = quant_matrix(geometry.quality, QuantKind::Luma, b);
  const QuantMatrix q_chroma = quant_matrix(geometry.quality, QuantKind::Chroma, b);
  auto plane = [b](const QuantGrid& g, PlaneKind kind, const QuantMatrix& q) {
    BlockGrid out(g.rows, g.cols, b, kind);
    const std::size_t area = static_cast<std::size_t>(b) * b;
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const Block d = dequantize(std::span<const int>(g.block(i, j), area), q);
        std::copy(d.values.begin(), d.values.end(), out.block(i, j).begin());
      }
    }
    return out;
  };
  return {plane(grids.luma, PlaneKind::Luma, q_luma), plane(grids.cb, PlaneKind::Chroma, q_chroma),
          plane(grids.cr, PlaneKind::Chroma, q_chroma)};
}

YccPlanes grids_to_planes(const CoefficientGrids& coeffs, const Geometry& geometry) {
  const int b = geometry.block_size;
  auto to_pixels = [b](const BlockGrid& g) {
    BlockGrid out(g.rows, g.cols, b, g.kind);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < g.cols; ++j) {
        const Block p = idct2(Block(b, g.block(i, j)));
        std::copy(p.values.begin(), p.values.end(), out.block(i, j).begin());
      }
    }
    return out;
  };
  const int ch = ceil_div(geometry.height, 2), cw = ceil_div(geometry.width, 2);
  return {merge_blocks(to_pixels(coeffs.luma), geometry.height, geometry.width), merge_blocks(to_pixels(coeffs.cb), ch, cw),
          merge_blocks(to_pixels(coeffs.cr), ch, cw)};
}

YccPlanes dct_image_to_planes(const DctImage& img) {
  return grids_to_planes(dequantize_grids(disassemble_dct_image(img), img.geometry), img.geometry);
}

RgbImage dct_image_to_rgb(const DctImage& img) { return ycc_to_rgb(dct_image_to_planes(img)); }

RgbImage decode_to_rgb(const TupleSeq& prefix) { return dct_image_to_rgb(deserialize(prefix)); }

TupleSeq take_prefix(const TupleSeq& seq, std::size_t n) {
  TupleSeq out{seq.geometry, seq.ordering, {}, false};
  const std::size_t count = std::min(n, seq.triples.size());
  out.triples.assign(seq.triples.begin(), seq.triples.begin() + static_cast<std::ptrdiff_t>(count));
  out.terminated = seq.terminated && n >= seq.triples.size();
  return out;
}

double coefficient_sq_error(const DctImage& a, const DctImage& b) {
  if (!(a.geometry == b.geometry)) throw InputError("coefficient error requires matching geometries");
  const Geometry& geo = a.geometry;
  const int bs = geo.block_size;
  const int band = geo.band_size();
  const QuantMatrix q_luma = quant_matrix(geo.quality, QuantKind::Luma, bs);
  const QuantMatrix q_chroma = quant_matrix(geo.quality, QuantKind::Chroma, bs);
  const auto zz = zigzag(bs);
  double err = 0.0;
  for (int p = 0; p < geo.num_positions(); ++p) {
    for (int c = 0; c < geo.num_channels(); ++c) {
      const int diff = a.at(p, c) - b.at(p, c);
      if (diff == 0) continue;
      const int k = c % band;
      const QuantMatrix& q = c < band ? q_luma : q_chroma;
      const double d = static_cast<double>(diff) * q.at(zz[k].first, zz[k].second);
      err += d * d;
    }
  }
  return err;
}

int bits_for(long symbols) {
  int bits = 0;
  while ((1L << bits) < symbols) ++bits;
  return bits;
}

BitCost bit_cost(const DctImage& img) {
  const Geometry& geo = img.geometry;
  BitCost cost;
  cost.nonzeros = img.count_nonzero();
  const int value_bits = bits_for(geo.value_vocab());
  const int tuple_bits = bits_for(geo.num_channels() + 1) + bits_for(geo.num_positions()) + value_bits;
  cost.dense_bits = 1.5 * geo.num_positions() * geo.band_size() * value_bits;
  cost.sparse_bits = static_cast<double>(cost.nonzeros) * tuple_bits;
  cost.dense_bpp = cost.dense_bits / static_cast<double>(geo.subpixels());
  cost.sparse_bpp = cost.sparse_bits / static_cast<double>(geo.subpixels());
  return cost;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  const U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in, const char* field) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int ch = in.get();
    if (ch == std::char_traits<char>::eof()) throw FormatError(std::string("truncated SDCT file while reading ") + field);
    u |= static_cast<U>(static_cast<U>(ch) << (8 * i));
  }
  return static_cast<T>(u);
}

}  // namespace

void write_sdct(const TupleSeq& seq, std::ostream& out) {
  const Geometry& geo = seq.geometry;
  geo.validate();
  out.write("SDCT", 4);
  put_le<std::uint8_t>(out, kSdctVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(geo.height));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(geo.width));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(geo.block_size));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(geo.quality));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(seq.ordering));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(geo.clip));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.triples.size()));
  for (const Triple& t : seq.triples) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.channel));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.position));
    put_le<std::int16_t>(out, static_cast<std::int16_t>(t.value));
  }
  if (!out) throw InputError("failed writing SDCT stream");
}

void write_sdct(const TupleSeq& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_sdct(seq, out);
}

TupleSeq read_sdct(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "SDCT") throw FormatError("bad magic: expected \"SDCT\"");
  const auto version = get_le<std::uint8_t>(in, "version");
  if (version != kSdctVersion) throw FormatError("unsupported version " + std::to_string(version));
  TupleSeq seq;
  Geometry& geo = seq.geometry;
  const auto height = get_le<std::uint32_t>(in, "height");
  const auto width = get_le<std::uint32_t>(in, "width");
  if (height < 1 || height > (1u << 16)) throw FormatError("height out of range: " + std::to_string(height));
  if (width < 1 || width > (1u << 16)) throw FormatError("width out of range: " + std::to_string(width));
  geo.height = static_cast<int>(height);
  geo.width = static_cast<int>(width);
  geo.block_size = get_le<std::uint8_t>(in, "block size");
  if (!is_supported_block_size(geo.block_size)) throw FormatError("block size out of range: " + std::to_string(geo.block_size));
  geo.quality = get_le<std::uint8_t>(in, "quality");
  if (geo.quality < 1 || geo.quality > 100) throw FormatError("quality out of range: " + std::to_string(geo.quality));
  const auto ordering = get_le<std::uint8_t>(in, "ordering");
  if (ordering > 1) throw FormatError("ordering out of range: " + std::to_string(ordering));
  seq.ordering = static_cast<Ordering>(ordering);
  geo.clip = get_le<std::uint16_t>(in, "clip");
  if (geo.clip < 1 || geo.clip > 32767) throw FormatError("clip out of range: " + std::to_string(geo.clip));
  const auto count = get_le<std::uint32_t>(in, "count");
  if (count > static_cast<std::uint64_t>(geo.num_positions()) * geo.num_channels()) {
    throw FormatError("count out of range: " + std::to_string(count));
  }
  seq.triples.resize(count);
  for (auto& t : seq.triples) {
    t.channel = get_le<std::uint16_t>(in, "record channel");
    t.position = static_cast<int>(get_le<std::uint32_t>(in, "record position"));
    t.value = get_le<std::int16_t>(in, "record value");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after " + std::to_string(count) + " records");
  seq.terminated = true;
  validate_sequence(seq);
  return seq;
}

TupleSeq read_sdct(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_sdct(in);
}

}  // namespace dctgen
