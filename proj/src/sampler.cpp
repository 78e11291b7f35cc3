#include "dctgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dctgen/error.hpp"

namespace dctgen {

namespace {

bool even_position(int position, int blocks_wide) {
  return (position / blocks_wide) % 2 == 0 && (position % blocks_wide) % 2 == 0;
}

// Tracks the ordering key of the last data triple and answers which
// (channel, position, value) choices keep the sequence valid.
class ValidityMask {
 public:
  ValidityMask(const Geometry& geo, Ordering ordering, int min_rank)
      : geo_(geo), ordering_(ordering), min_rank_(min_rank) {}

  void advance(const Triple& t) {
    last_rank_ = channel_rank(t.channel, geo_.block_size, ordering_);
    last_position_ = t.position;
  }

  bool position_ok(int channel, int position) const {
    if (channel >= geo_.band_size() && !even_position(position, geo_.blocks_wide())) return false;
    const int rank = channel_rank(channel, geo_.block_size, ordering_);
    return rank > last_rank_ || position > last_position_;
  }

  std::vector<std::uint8_t> channels() const {
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(geo_.num_channels()) + 1, 0);
    ok[geo_.stop_channel()] = 1;
    for (int c = 0; c < geo_.num_channels(); ++c) {
      const int rank = channel_rank(c, geo_.block_size, ordering_);
      if (rank < min_rank_ || rank < last_rank_) continue;
      if (rank > last_rank_) {
        ok[c] = 1;
        continue;
      }
      for (int p = last_position_ + 1; p < geo_.num_positions(); ++p) {
        if (position_ok(c, p)) {
          ok[c] = 1;
          break;
        }
      }
    }
    return ok;
  }

  std::vector<std::uint8_t> positions(int channel) const {
    std::vector<std::uint8_t> ok(geo_.num_positions(), 0);
    for (int p = 0; p < geo_.num_positions(); ++p) ok[p] = position_ok(channel, p) ? 1 : 0;
    return ok;
  }

  std::vector<std::uint8_t> values() const {
    std::vector<std::uint8_t> ok(geo_.value_vocab(), 1);
    ok[geo_.clip] = 0;  // v = 0
    return ok;
  }

 private:
  Geometry geo_;
  Ordering ordering_;
  int min_rank_;
  int last_rank_ = -1;
  int last_position_ = -1;
};

template <typename T>
int sample_head(DCTransformer<T>& model, Tape<T>& tape, Head which, typename Tape<T>::Var hidden, int row,
                const std::vector<std::uint8_t>& allowed, double temperature, std::mt19937_64& rng) {
  auto last = tape.gather_rows(hidden, {row});
  const Mat<T>& logits = tape.value(model.head(tape, which, last));
  const int choice = sample_masked(logits.data(), allowed, temperature, rng);
  if (choice < 0) throw std::logic_error("sampling mask excluded every option");
  return choice;
}

}  // namespace

template <typename T>
int sample_masked(const T* logits, const std::vector<std::uint8_t>& allowed, double temperature,
                  std::mt19937_64& rng) {
  const int n = static_cast<int>(allowed.size());
  int best = -1;
  for (int i = 0; i < n; ++i) {
    if (allowed[i] && (best < 0 || logits[i] > logits[best])) best = i;
  }
  if (best < 0 || temperature <= 0.0) return best;
  const double top = static_cast<double>(logits[best]);
  std::vector<double> w(n, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!allowed[i]) continue;
    w[i] = std::exp((static_cast<double>(logits[i]) - top) / temperature);
    total += w[i];
  }
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (int i = 0; i < n; ++i) {
    if (!allowed[i]) continue;
    if (u < w[i]) return i;
    u -= w[i];
  }
  return best;
}

template <typename T>
TupleSeq sample_continuation(DCTransformer<T>& model, const TupleSeq& context, std::mt19937_64& rng,
                             const SampleOptions& options) {
  const ModelConfig& cfg = model.config();
  const Geometry& geo = cfg.geometry;
  if (!(context.geometry == geo)) throw InputError("context geometry does not match the model configuration");
  if (context.ordering != cfg.ordering) {
    throw InputError("context ordering " + to_string(context.ordering) + " does not match model ordering " +
                     to_string(cfg.ordering));
  }
  if (options.temperature < 0.0) throw InputError("temperature must be >= 0");
  if (options.max_chunks < 0) throw InputError("max chunks must be >= 0");
  validate_sequence(context);

  TupleSeq seq = context;
  seq.terminated = false;
  if (context.terminated) {
    seq.terminated = true;
    return seq;
  }
  ValidityMask mask(geo, seq.ordering, options.min_rank);
  for (const Triple& t : seq.triples) mask.advance(t);

  const std::size_t chunk = static_cast<std::size_t>(cfg.chunk.size);
  const std::size_t overlap = static_cast<std::size_t>(cfg.chunk.overlap);
  for (int filled = 0; filled < options.max_chunks && !seq.terminated; ++filled) {
    const std::size_t start = seq.triples.size() / chunk * chunk;
    const std::size_t first = start > overlap ? start - overlap : 0;
    TupleSeq prefix = take_prefix(seq, start);
    Mat<T> e_input;
    {
      Tape<T> tape(false);
      e_input = tape.value(model.encode(tape, deserialize(prefix)));
    }
    while (seq.triples.size() < start + chunk) {
      const std::size_t n = seq.triples.size();
      std::optional<Triple> lead;
      if (first > 0) lead = seq.triples[first - 1];
      std::vector<Triple> window(seq.triples.begin() + static_cast<std::ptrdiff_t>(first), seq.triples.end());
      window.push_back(Triple{});  // target slot for the element being sampled
      DecoderInputs in = make_decoder_inputs(lead, window);
      const int row = static_cast<int>(n - first);

      Tape<T> tape(false);
      auto e = tape.constant(e_input);
      auto h_channel = model.channel_stack(tape, e, in);
      const int c = sample_head(model, tape, Head::Channel, h_channel, row, mask.channels(), options.temperature, rng);
      if (c == geo.stop_channel()) {
        seq.terminated = true;
        break;
      }
      std::vector<int> channels(in.rows());
      for (std::size_t r = 0; r < in.rows(); ++r) channels[r] = in.targets[r].channel;
      channels[row] = c;
      auto h_position = model.position_stack(tape, e, h_channel, channels);
      const int p =
          sample_head(model, tape, Head::Position, h_position, row, mask.positions(c), options.temperature, rng);
      std::vector<int> positions(in.rows());
      for (std::size_t r = 0; r < in.rows(); ++r) {
        positions[r] = in.targets[r].channel == geo.stop_channel() ? 0 : in.targets[r].position;
      }
      positions[row] = p;
      auto h_value = model.value_stack(tape, e, h_position, positions);
      const int v = sample_head(model, tape, Head::Value, h_value, row, mask.values(), options.temperature, rng);
      const Triple t{c, p, v - geo.clip};
      seq.triples.push_back(t);
      mask.advance(t);
    }
  }
  return seq;
}

TupleSeq upsample_condition(const TupleSeq& full) {
  if (full.ordering != Ordering::Generation) throw InputError("upsampling needs a generation-ordered sequence");
  const int band = full.geometry.band_size();
  TupleSeq out{full.geometry, full.ordering, {}, false};
  for (const Triple& t : full.triples) {
    if (t.channel % band == 0) out.triples.push_back(t);
  }
  return out;
}

TupleSeq upsample_condition(const RgbImage& low_res, const Geometry& geometry) {
  geometry.validate();
  if (low_res.height != geometry.blocks_high() || low_res.width != geometry.blocks_wide()) {
    throw InputError("conditioning image is " + std::to_string(low_res.width) + "x" + std::to_string(low_res.height) +
                     ", expected " + std::to_string(geometry.blocks_wide()) + "x" +
                     std::to_string(geometry.blocks_high()) + " (1/" + std::to_string(geometry.block_size) +
                     " resolution)");
  }
  const int b = geometry.block_size;
  RgbImage full(geometry.height, geometry.width);
  for (int r = 0; r < full.height; ++r) {
    for (int c = 0; c < full.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) full.at(r, c, ch) = low_res.at(r / b, c / b, ch);
    }
  }
  return upsample_condition(encode_image(full, b, geometry.quality, Ordering::Generation, geometry.clip));
}

TupleSeq colorize_condition(const TupleSeq& full) {
  if (full.ordering != Ordering::Colorization) throw InputError("colorization needs a colorization-ordered sequence");
  TupleSeq out{full.geometry, full.ordering, {}, false};
  out.triples.assign(full.triples.begin(), full.triples.begin() + static_cast<std::ptrdiff_t>(chroma_tail_start(full)));
  return out;
}

TupleSeq colorize_condition(const RgbImage& image, const Geometry& geometry) {
  geometry.validate();
  if (image.height != geometry.height || image.width != geometry.width) {
    throw InputError("image size does not match the model geometry");
  }
  return colorize_condition(
      encode_image(image, geometry.block_size, geometry.quality, Ordering::Colorization, geometry.clip));
}

int upsample_min_rank() { return 3; }

int colorize_min_rank(int block_size) { return block_size * block_size; }

void require_ordering(Ordering model_ordering, Ordering required, const char* task) {
  if (model_ordering != required) {
    throw InputError(std::string(task) + " needs a " + to_string(required) + "-ordered model, checkpoint uses " +
                     to_string(model_ordering));
  }
}

template TupleSeq sample_continuation(DCTransformer<float>&, const TupleSeq&, std::mt19937_64&, const SampleOptions&);
template TupleSeq sample_continuation(DCTransformer<double>&, const TupleSeq&, std::mt19937_64&, const SampleOptions&);
template int sample_masked(const float*, const std::vector<std::uint8_t>&, double, std::mt19937_64&);
template int sample_masked(const double*, const std::vector<std::uint8_t>&, double, std::mt19937_64&);

}  // namespace dctgen
