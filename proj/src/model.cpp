#include "dctgen/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "dctgen/error.hpp"

namespace dctgen {

// ---------------------------------------------------------------------------
// Layer specs and configuration

namespace {

struct SpecParser {
  const std::string& text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) throw InputError("malformed layer spec '" + text + "': expected '" + std::string(1, c) + "'");
  }
  int number() {
    skip_ws();
    const std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (start == pos) throw InputError("malformed layer spec '" + text + "': expected a number");
    return std::stoi(text.substr(start, pos - start));
  }
  std::vector<LayerSpec> term() {
    std::vector<LayerSpec> out;
    expect('[');
    do {
      expect('(');
      LayerSpec s;
      s.attention = number();
      expect(',');
      s.feedforward = number();
      expect(')');
      out.push_back(s);
    } while (eat(','));
    expect(']');
    if (eat('*')) {
      const int times = number();
      std::vector<LayerSpec> rep;
      for (int i = 0; i < times; ++i) rep.insert(rep.end(), out.begin(), out.end());
      out = std::move(rep);
    }
    return out;
  }
};

}  // namespace

std::vector<LayerSpec> parse_layer_spec(const std::string& text) {
  SpecParser p{text};
  std::vector<LayerSpec> out;
  do {
    auto t = p.term();
    out.insert(out.end(), t.begin(), t.end());
  } while (p.eat('+'));
  p.skip_ws();
  if (p.pos != text.size()) throw InputError("malformed layer spec '" + text + "': trailing characters");
  return out;
}

std::string format_layer_spec(const std::vector<LayerSpec>& spec) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (i) os << ", ";
    os << "(" << spec[i].attention << ", " << spec[i].feedforward << ")";
  }
  os << "]";
  return os.str();
}

int ModelConfig::cell_of(int position) const {
  const int wb = geometry.blocks_wide();
  const int i = position / wb;
  const int j = position % wb;
  return (i / stride) * grid_wide() + j / stride;
}

void ModelConfig::validate() const {
  geometry.validate();
  chunk.validate();
  if (hidden < 1 || heads < 1 || hidden % heads != 0) throw InputError("hidden width must be a positive multiple of heads");
  if (ff_multiplier < 1) throw InputError("feedforward multiplier must be >= 1");
  if (kernel < 1 || stride < 1) throw InputError("encoder kernel and stride must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw InputError("dropout must be in [0, 1)");
  for (const auto* spec : {&encoder_spec, &channel_spec, &position_spec, &value_spec}) {
    if (spec->empty()) throw InputError("layer specs must be non-empty");
    for (const LayerSpec& s : *spec) {
      if (s.attention < 0 || s.feedforward < 0 || s.attention + s.feedforward == 0) {
        throw InputError("layer spec entries need at least one layer");
      }
    }
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"height", c.geometry.height},
      {"width", c.geometry.width},
      {"block_size", c.geometry.block_size},
      {"quality", c.geometry.quality},
      {"clip", c.geometry.clip},
      {"ordering", to_string(c.ordering)},
      {"chunk_size", c.chunk.size},
      {"overlap", c.chunk.overlap},
      {"hidden", c.hidden},
      {"heads", c.heads},
      {"ff_multiplier", c.ff_multiplier},
      {"encoder_spec", format_layer_spec(c.encoder_spec)},
      {"channel_spec", format_layer_spec(c.channel_spec)},
      {"position_spec", format_layer_spec(c.position_spec)},
      {"value_spec", format_layer_spec(c.value_spec)},
      {"kernel", c.kernel},
      {"stride", c.stride},
      {"dropout", c.dropout},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.geometry.height = j.value("height", c.geometry.height);
    c.geometry.width = j.value("width", c.geometry.width);
    c.geometry.block_size = j.value("block_size", c.geometry.block_size);
    c.geometry.quality = j.value("quality", c.geometry.quality);
    c.geometry.clip = j.value("clip", c.geometry.clip);
    c.ordering = parse_ordering(j.value("ordering", std::string("generation")));
    c.chunk.size = j.value("chunk_size", c.chunk.size);
    c.chunk.overlap = j.value("overlap", c.chunk.overlap);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
    auto spec = [&j](const char* key, std::vector<LayerSpec>& out) {
      if (j.contains(key)) out = parse_layer_spec(j.at(key).get<std::string>());
    };
    spec("encoder_spec", c.encoder_spec);
    spec("channel_spec", c.channel_spec);
    spec("position_spec", c.position_spec);
    spec("value_spec", c.value_spec);
    c.kernel = j.value("kernel", c.kernel);
    c.stride = j.value("stride", c.stride);
    c.dropout = j.value("dropout", c.dropout);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid model config: ") + e.what());
  }
  return c;
}

DecoderInputs make_decoder_inputs(const std::optional<Triple>& lead, const std::vector<Triple>& window) {
  DecoderInputs in;
  in.targets = window;
  in.inputs.resize(window.size());
  in.bos_first = !lead.has_value();
  for (std::size_t r = 0; r < window.size(); ++r) {
    if (r == 0) {
      in.inputs[r] = lead.value_or(Triple{0, 0, 0});
    } else {
      in.inputs[r] = window[r - 1];
    }
  }
  return in;
}

DecoderInputs make_decoder_inputs(const TrainingExample& example) {
  return make_decoder_inputs(example.lead, example.window);
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
DCTransformer<T>::DCTransformer(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.hidden;
  const int features = config_.kernel * config_.kernel * config_.geometry.num_channels();
  patch_weight_ = &params_.add("encoder.patch.weight", features, d);
  patch_bias_ = &params_.add("encoder.patch.bias", 1, d);
  encoder_position_ = &params_.add("encoder.position", config_.grid_cells(), d);
  channel_embedding_ = &params_.add("embed.channel", config_.channel_vocab(), d);
  position_embedding_ = &params_.add("embed.position", config_.position_vocab(), d);
  value_embedding_ = &params_.add("embed.value", config_.value_vocab(), d);
  chunk_position_embedding_ = &params_.add("embed.chunk_position", config_.max_decoder_length(), d);
  bos_embedding_ = &params_.add("embed.bos", 1, d);
  encoder_ = make_stack("encoder", config_.encoder_spec, false);
  channel_decoder_ = make_stack("channel_decoder", config_.channel_spec, true);
  position_decoder_ = make_stack("position_decoder", config_.position_spec, true);
  value_decoder_ = make_stack("value_decoder", config_.value_spec, true);
  channel_head_ = make_head("channel_head", config_.channel_vocab());
  position_head_ = make_head("position_head", config_.position_vocab());
  value_head_ = make_head("value_head", config_.value_vocab());
}

template <typename T>
typename DCTransformer<T>::AttentionLayer DCTransformer<T>::make_attention(const std::string& prefix, bool cross) {
  const int d = config_.hidden;
  AttentionLayer a;
  a.norm_gain = &params_.add(prefix + ".norm.gain", 1, d);
  a.norm_bias = &params_.add(prefix + ".norm.bias", 1, d);
  if (cross) {
    a.memory_gain = &params_.add(prefix + ".memory_norm.gain", 1, d);
    a.memory_bias = &params_.add(prefix + ".memory_norm.bias", 1, d);
  }
  a.wq = &params_.add(prefix + ".query.weight", d, d);
  a.bq = &params_.add(prefix + ".query.bias", 1, d);
  a.wk = &params_.add(prefix + ".key.weight", d, d);
  a.bk = &params_.add(prefix + ".key.bias", 1, d);
  a.wv = &params_.add(prefix + ".value.weight", d, d);
  a.bv = &params_.add(prefix + ".value.bias", 1, d);
  a.wo = &params_.add(prefix + ".out.weight", d, d);
  a.bo = &params_.add(prefix + ".out.bias", 1, d);
  a.alpha = &params_.add(prefix + ".alpha", 1, 1);
  return a;
}

template <typename T>
typename DCTransformer<T>::FeedForwardLayer DCTransformer<T>::make_feedforward(const std::string& prefix) {
  const int d = config_.hidden;
  const int inner = d * config_.ff_multiplier;
  FeedForwardLayer f;
  f.norm_gain = &params_.add(prefix + ".norm.gain", 1, d);
  f.norm_bias = &params_.add(prefix + ".norm.bias", 1, d);
  f.w1 = &params_.add(prefix + ".fc1.weight", d, inner);
  f.b1 = &params_.add(prefix + ".fc1.bias", 1, inner);
  f.w2 = &params_.add(prefix + ".fc2.weight", inner, d);
  f.b2 = &params_.add(prefix + ".fc2.bias", 1, d);
  f.alpha = &params_.add(prefix + ".alpha", 1, 1);
  return f;
}

template <typename T>
std::vector<typename DCTransformer<T>::Block> DCTransformer<T>::make_stack(const std::string& prefix,
                                                                           const std::vector<LayerSpec>& spec,
                                                                           bool decoder) {
  std::vector<Block> blocks;
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block blk;
    for (int a = 0; a < spec[b].attention; ++a) {
      blk.self.push_back(make_attention(bp + ".self" + std::to_string(a), false));
      if (decoder) blk.cross.push_back(make_attention(bp + ".cross" + std::to_string(a), true));
    }
    for (int f = 0; f < spec[b].feedforward; ++f) blk.ff.push_back(make_feedforward(bp + ".ff" + std::to_string(f)));
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

template <typename T>
typename DCTransformer<T>::OutputHead DCTransformer<T>::make_head(const std::string& prefix, int vocab) {
  const int d = config_.hidden;
  OutputHead h;
  h.norm_gain = &params_.add(prefix + ".norm.gain", 1, d);
  h.norm_bias = &params_.add(prefix + ".norm.bias", 1, d);
  h.weight = &params_.add(prefix + ".weight", d, vocab);
  h.bias = &params_.add(prefix + ".bias", 1, vocab);
  return h;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

template <typename T>
void DCTransformer<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : params_) {
    const std::string& n = p.name;
    double stddev = 0.0;
    double fill = 0.0;
    if (ends_with(n, ".gain")) {
      fill = 1.0;
    } else if (ends_with(n, ".bias") || ends_with(n, ".alpha")) {
      fill = 0.0;
    } else if (starts_with(n, "embed.") || n == "encoder.position") {
      stddev = 0.3;
    } else if (ends_with(n, "_head.weight")) {
      fill = 0.0;
    } else {
      stddev = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<T>(stddev > 0.0 ? stddev * normal(rng) : fill);
    }
    p.grad.setZero();
  }
}

template <typename T>
void DCTransformer<T>::randomize(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : params_) {
    const bool gain = ends_with(p.name, ".gain");
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<T>((gain ? 1.0 : 0.0) + scale * normal(rng));
    }
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename T>
Mat<T> DCTransformer<T>::encoder_features(const DctImage& img) const {
  const Geometry& geo = config_.geometry;
  if (!(img.geometry.blocks_high() == geo.blocks_high() && img.geometry.blocks_wide() == geo.blocks_wide() &&
        img.geometry.block_size == geo.block_size)) {
    throw InputError("DCT image geometry does not match the model configuration");
  }
  const int k = config_.kernel;
  const int s = config_.stride;
  const int channels = geo.num_channels();
  const int hb = geo.blocks_high(), wb = geo.blocks_wide();
  // Patches are centred on their stride cell: origin a*s - floor((k - s) / 2).
  const int offset = (k - s) >= 0 ? (k - s) / 2 : -((s - k + 1) / 2);
  Mat<T> f = Mat<T>::Zero(config_.grid_cells(), static_cast<Eigen::Index>(k) * k * channels);
  for (int a = 0; a < config_.grid_high(); ++a) {
    for (int b = 0; b < config_.grid_wide(); ++b) {
      const int cell = a * config_.grid_wide() + b;
      for (int di = 0; di < k; ++di) {
        const int i = a * s - offset + di;
        if (i < 0 || i >= hb) continue;
        for (int dj = 0; dj < k; ++dj) {
          const int j = b * s - offset + dj;
          if (j < 0 || j >= wb) continue;
          const std::size_t base = static_cast<std::size_t>(i * wb + j) * channels;
          const Eigen::Index col0 = static_cast<Eigen::Index>(di * k + dj) * channels;
          for (int c = 0; c < channels; ++c) {
            const int v = img.values[base + c];
            if (v == 0) continue;
            // signed log compression of coefficient magnitudes
            const double x = std::log2(1.0 + std::abs(v));
            f(cell, col0 + c) = static_cast<T>(v < 0 ? -x : x);
          }
        }
      }
    }
  }
  return f;
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::patch_embedding(TapeT& tape, const DctImage& img) {
  Var x = tape.constant(encoder_features(img));
  Var h = tape.add_bias(tape.matmul(x, tape.param(*patch_weight_)), tape.param(*patch_bias_));
  return tape.add(h, tape.param(*encoder_position_));
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::attend(TapeT& tape, const AttentionLayer& layer, Var h,
                                                        std::optional<Var> memory, bool causal,
                                                        std::mt19937_64* rng) {
  Var x = tape.layer_norm(h, tape.param(*layer.norm_gain), tape.param(*layer.norm_bias));
  Var mem = x;
  if (memory) mem = tape.layer_norm(*memory, tape.param(*layer.memory_gain), tape.param(*layer.memory_bias));
  Var q = tape.add_bias(tape.matmul(x, tape.param(*layer.wq)), tape.param(*layer.bq));
  Var k = tape.add_bias(tape.matmul(mem, tape.param(*layer.wk)), tape.param(*layer.bk));
  Var v = tape.add_bias(tape.matmul(mem, tape.param(*layer.wv)), tape.param(*layer.bv));
  Var o = tape.attention(q, k, v, config_.heads, causal);
  Var f = tape.add_bias(tape.matmul(o, tape.param(*layer.wo)), tape.param(*layer.bo));
  f = tape.dropout(f, config_.dropout, rng);
  return tape.add(h, tape.scale(f, tape.param(*layer.alpha)));
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::feedforward(TapeT& tape, const FeedForwardLayer& layer, Var h,
                                                             std::mt19937_64* rng) {
  Var x = tape.layer_norm(h, tape.param(*layer.norm_gain), tape.param(*layer.norm_bias));
  Var u = tape.gelu(tape.add_bias(tape.matmul(x, tape.param(*layer.w1)), tape.param(*layer.b1)));
  Var f = tape.add_bias(tape.matmul(u, tape.param(*layer.w2)), tape.param(*layer.b2));
  f = tape.dropout(f, config_.dropout, rng);
  return tape.add(h, tape.scale(f, tape.param(*layer.alpha)));
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::run_stack(TapeT& tape, const std::vector<Block>& stack, Var h,
                                                           std::optional<Var> memory, std::mt19937_64* rng) {
  for (const Block& blk : stack) {
    for (std::size_t a = 0; a < blk.self.size(); ++a) {
      // Decoders are right-masked; the encoder attends bidirectionally.
      h = attend(tape, blk.self[a], h, std::nullopt, memory.has_value(), rng);
      if (memory) h = attend(tape, blk.cross[a], h, memory, false, rng);
    }
    for (const FeedForwardLayer& f : blk.ff) h = feedforward(tape, f, h, rng);
  }
  return h;
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::encode(TapeT& tape, const DctImage& img, std::mt19937_64* rng) {
  return run_stack(tape, encoder_, patch_embedding(tape, img), std::nullopt, rng);
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::embed_inputs(TapeT& tape, const DecoderInputs& in) {
  const std::size_t n = in.rows();
  if (n == 0) throw InputError("decoder input is empty");
  if (n > static_cast<std::size_t>(config_.max_decoder_length())) {
    throw InputError("decoder input of " + std::to_string(n) + " rows exceeds the maximum " +
                     std::to_string(config_.max_decoder_length()));
  }
  std::vector<int> ch(n), pos(n), val(n), chunk_pos(n);
  const int clip = config_.geometry.clip;
  for (std::size_t r = 0; r < n; ++r) {
    const Triple& t = in.inputs[r];
    const bool bos = r == 0 && in.bos_first;
    ch[r] = bos ? 0 : t.channel;
    pos[r] = bos ? 0 : t.position;
    val[r] = bos ? clip : t.value + clip;
    chunk_pos[r] = static_cast<int>(r);
    if (!bos && (t.channel < 0 || t.channel >= config_.channel_vocab() || t.position < 0 ||
                 t.position >= config_.position_vocab() || t.value < -clip || t.value > clip)) {
      throw InputError("decoder input triple out of vocabulary range at row " + std::to_string(r));
    }
  }
  Var e = tape.add(tape.gather_rows(tape.param(*channel_embedding_), std::move(ch)),
                   tape.gather_rows(tape.param(*position_embedding_), std::move(pos)));
  e = tape.add(e, tape.gather_rows(tape.param(*value_embedding_), std::move(val)));
  if (in.bos_first) e = tape.replace_row(e, 0, tape.param(*bos_embedding_));
  return tape.add(e, tape.gather_rows(tape.param(*chunk_position_embedding_), std::move(chunk_pos)));
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::channel_stack(TapeT& tape, Var e_input, const DecoderInputs& in,
                                                               std::mt19937_64* rng) {
  return run_stack(tape, channel_decoder_, embed_inputs(tape, in), e_input, rng);
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::position_stack(TapeT& tape, Var e_input, Var h_channel,
                                                                const std::vector<int>& target_channels,
                                                                std::mt19937_64* rng) {
  for (int c : target_channels) {
    if (c < 0 || c >= config_.channel_vocab()) throw InputError("target channel out of vocabulary range");
  }
  Var e = tape.add(h_channel, tape.gather_rows(tape.param(*channel_embedding_), target_channels));
  return run_stack(tape, position_decoder_, e, e_input, rng);
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::value_stack(TapeT& tape, Var e_input, Var h_position,
                                                             const std::vector<int>& target_positions,
                                                             std::mt19937_64* rng) {
  std::vector<int> cells(target_positions.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const int p = target_positions[r];
    if (p < 0 || p >= config_.position_vocab()) throw InputError("target position out of vocabulary range");
    cells[r] = config_.cell_of(p);
  }
  Var e = tape.add(h_position, tape.gather_rows(e_input, std::move(cells)));
  return run_stack(tape, value_decoder_, e, e_input, rng);
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::head(TapeT& tape, Head which, Var hidden) {
  const OutputHead& h = which == Head::Channel ? channel_head_ : which == Head::Position ? position_head_ : value_head_;
  Var x = tape.layer_norm(hidden, tape.param(*h.norm_gain), tape.param(*h.norm_bias));
  return tape.add_bias(tape.matmul(x, tape.param(*h.weight)), tape.param(*h.bias));
}

namespace {

std::vector<int> target_channels(const DecoderInputs& in) {
  std::vector<int> out(in.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = in.targets[r].channel;
  return out;
}

// Stop targets carry no position; any valid index works since they are
// excluded from the position and value losses.
std::vector<int> target_positions(const DecoderInputs& in, int stop_channel) {
  std::vector<int> out(in.rows());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = in.targets[r].channel == stop_channel ? 0 : in.targets[r].position;
  }
  return out;
}

}  // namespace

template <typename T>
typename DCTransformer<T>::Hidden DCTransformer<T>::forward(TapeT& tape, const DctImage& input,
                                                            const DecoderInputs& in, std::mt19937_64* rng) {
  if (in.targets.size() != in.rows()) throw InputError("decoder inputs and targets differ in length");
  Hidden h;
  h.e_input = encode(tape, input, rng);
  h.e_channel = embed_inputs(tape, in);
  h.h_channel = run_stack(tape, channel_decoder_, h.e_channel, h.e_input, rng);
  h.h_position = position_stack(tape, h.e_input, h.h_channel, target_channels(in), rng);
  h.h_value = value_stack(tape, h.e_input, h.h_position, target_positions(in, config_.geometry.stop_channel()), rng);
  return h;
}

template <typename T>
typename DCTransformer<T>::Logits DCTransformer<T>::logits(const DctImage& input, const DecoderInputs& in) {
  TapeT tape(false);
  const Hidden h = forward(tape, input, in);
  return {tape.value(head(tape, Head::Channel, h.h_channel)), tape.value(head(tape, Head::Position, h.h_position)),
          tape.value(head(tape, Head::Value, h.h_value))};
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::loss(TapeT& tape, const DctImage& input, const DecoderInputs& in,
                                                      const std::vector<std::uint8_t>& mask, LossBreakdown* breakdown,
                                                      std::mt19937_64* rng, std::vector<double>* row_nll) {
  if (mask.size() != in.rows()) throw InputError("loss mask length does not match decoder rows");
  const Hidden h = forward(tape, input, in, rng);
  const int stop = config_.geometry.stop_channel();
  const int clip = config_.geometry.clip;

  std::vector<int> rows_c, rows_pv, tgt_c, tgt_p, tgt_v;
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (!mask[r]) continue;
    const Triple& t = in.targets[r];
    rows_c.push_back(static_cast<int>(r));
    tgt_c.push_back(t.channel);
    if (t.channel != stop) {
      rows_pv.push_back(static_cast<int>(r));
      tgt_p.push_back(t.position);
      tgt_v.push_back(t.value + clip);
    }
  }
  LossBreakdown b;
  b.tokens = rows_c.size();
  if (row_nll) row_nll->assign(mask.size(), 0.0);
  Mat<T> zero(1, 1);
  zero(0, 0) = T(0);
  Var total = tape.constant(zero);

  auto term = [&](Head which, Var hidden, const std::vector<int>& rows, const std::vector<int>& targets, double* sum) {
    if (rows.empty()) return;
    std::vector<T> nll;
    Var logits_v = head(tape, which, tape.gather_rows(hidden, rows));
    Var ce = tape.cross_entropy(logits_v, targets, std::vector<T>(rows.size(), T(1)), &nll);
    double s = 0.0;
    for (std::size_t i = 0; i < nll.size(); ++i) {
      s += static_cast<double>(nll[i]);
      if (row_nll) (*row_nll)[static_cast<std::size_t>(rows[i])] += static_cast<double>(nll[i]);
    }
    *sum = s;
    total = tape.add(total, ce);
  };
  term(Head::Channel, h.h_channel, rows_c, tgt_c, &b.channel);
  term(Head::Position, h.h_position, rows_pv, tgt_p, &b.position);
  term(Head::Value, h.h_value, rows_pv, tgt_v, &b.value);
  if (breakdown) *breakdown = b;
  return total;
}

template <typename T>
typename DCTransformer<T>::Var DCTransformer<T>::loss(TapeT& tape, const TrainingExample& example,
                                                      LossBreakdown* breakdown, std::mt19937_64* rng) {
  return loss(tape, example.input, make_decoder_inputs(example), example.loss_mask, breakdown, rng);
}

template <typename T>
LossBreakdown DCTransformer<T>::evaluate(const TrainingExample& example) {
  TapeT tape(false);
  LossBreakdown b;
  loss(tape, example, &b);
  return b;
}

template <typename To, typename From>
void copy_parameters(DCTransformer<To>& to, const DCTransformer<From>& from) {
  for (auto& p : to.params()) {
    const Parameter<From>* src = from.params().find(p.name);
    if (!src || src->value.rows() != p.value.rows() || src->value.cols() != p.value.cols()) {
      throw InputError("parameter " + p.name + " missing or mis-shaped in source model");
    }
    p.value = src->value.template cast<To>();
  }
}

template class DCTransformer<float>;
template class DCTransformer<double>;
template void copy_parameters(DCTransformer<float>&, const DCTransformer<float>&);
template void copy_parameters(DCTransformer<float>&, const DCTransformer<double>&);
template void copy_parameters(DCTransformer<double>&, const DCTransformer<float>&);
template void copy_parameters(DCTransformer<double>&, const DCTransformer<double>&);

}  // namespace dctgen
