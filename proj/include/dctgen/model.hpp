#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dctgen/chunker.hpp"
#include "dctgen/sparse_codec.hpp"
#include "dctgen/tape.hpp"

namespace dctgen {

// One Transformer block: `attention` attention layers followed by
// `feedforward` dense layers.
struct LayerSpec {
  int attention = 1;
  int feedforward = 2;
  bool operator==(const LayerSpec&) const = default;
};

// Parses "[(1,2)]*3+[(1,4)]" style layer specs.
std::vector<LayerSpec> parse_layer_spec(const std::string& text);
std::string format_layer_spec(const std::vector<LayerSpec>& spec);

struct ModelConfig {
  Geometry geometry;
  Ordering ordering = Ordering::Generation;
  ChunkSpec chunk;
  int hidden = 64;
  int heads = 2;
  int ff_multiplier = 4;
  std::vector<LayerSpec> encoder_spec{{1, 2}};
  std::vector<LayerSpec> channel_spec{{1, 2}};
  std::vector<LayerSpec> position_spec{{1, 2}};
  std::vector<LayerSpec> value_spec{{1, 2}};
  int kernel = 1;  // encoder patch size over the DCT image
  int stride = 1;
  double dropout = 0.0;

  int channel_vocab() const { return geometry.num_channels() + 1; }
  int position_vocab() const { return geometry.num_positions(); }
  int value_vocab() const { return geometry.value_vocab(); }
  int max_decoder_length() const { return chunk.size + chunk.overlap; }
  int grid_high() const { return ceil_div(geometry.blocks_high(), stride); }
  int grid_wide() const { return ceil_div(geometry.blocks_wide(), stride); }
  int grid_cells() const { return grid_high() * grid_wide(); }
  // Encoder cell that a DCT-image position gathers from.
  int cell_of(int position) const;

  void validate() const;  // throws InputError
};

nlohmann::json to_json(const ModelConfig& config);
// Missing keys keep their defaults; the result is not validated.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Per-row decoder inputs. Row r predicts `targets[r]` from the previous
// element `inputs[r]`; row 0 uses the begin-of-sequence embedding when
// `bos_first` is set.
struct DecoderInputs {
  std::vector<Triple> inputs;
  bool bos_first = false;
  std::vector<Triple> targets;

  std::size_t rows() const { return inputs.size(); }
};

DecoderInputs make_decoder_inputs(const std::optional<Triple>& lead, const std::vector<Triple>& window);
DecoderInputs make_decoder_inputs(const TrainingExample& example);

// Negative log-likelihood in nats over the loss-masked rows.
struct LossBreakdown {
  double channel = 0.0;
  double position = 0.0;
  double value = 0.0;
  std::size_t tokens = 0;
  double total() const { return channel + position + value; }
};

enum class Head { Channel, Position, Value };

template <typename T>
class DCTransformer {
 public:
  using TapeT = Tape<T>;
  using Var = typename TapeT::Var;

  explicit DCTransformer(ModelConfig config);
  DCTransformer(const DCTransformer&) = delete;
  DCTransformer& operator=(const DCTransformer&) = delete;
  DCTransformer(DCTransformer&&) = default;
  DCTransformer& operator=(DCTransformer&&) = default;

  // Training initialisation: random weights, ReZero scalars at 0, zero
  // output projections (uniform initial predictions).
  void initialize(std::uint64_t seed);
  // Every parameter random, ReZero scalars included. Used by gradient checks.
  void randomize(std::uint64_t seed, double scale = 0.5);

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  // Patch features of a (densified) DCT image: grid_cells x kernel^2 * 3B^2.
  Mat<T> encoder_features(const DctImage& img) const;

  Var encode(TapeT& tape, const DctImage& img, std::mt19937_64* dropout_rng = nullptr);
  Var patch_embedding(TapeT& tape, const DctImage& img);
  Var channel_stack(TapeT& tape, Var e_input, const DecoderInputs& in, std::mt19937_64* dropout_rng = nullptr);
  // target_channels has one entry per row.
  Var position_stack(TapeT& tape, Var e_input, Var h_channel, const std::vector<int>& target_channels,
                     std::mt19937_64* dropout_rng = nullptr);
  Var value_stack(TapeT& tape, Var e_input, Var h_position, const std::vector<int>& target_positions,
                  std::mt19937_64* dropout_rng = nullptr);
  Var head(TapeT& tape, Head which, Var hidden);

  // E_channel, the embedded decoder input before the channel decoder.
  Var embed_inputs(TapeT& tape, const DecoderInputs& in);

  struct Hidden {
    Var e_input;
    Var e_channel;
    Var h_channel;
    Var h_position;
    Var h_value;
  };
  Hidden forward(TapeT& tape, const DctImage& input, const DecoderInputs& in, std::mt19937_64* dropout_rng = nullptr);

  struct Logits {
    Mat<T> channel;
    Mat<T> position;
    Mat<T> value;
  };
  Logits logits(const DctImage& input, const DecoderInputs& in);

  // Builds the loss on `tape`; returns the summed NLL variable and fills
  // `breakdown`. Position and value terms skip stop targets.
  Var loss(TapeT& tape, const DctImage& input, const DecoderInputs& in, const std::vector<std::uint8_t>& mask,
           LossBreakdown* breakdown, std::mt19937_64* dropout_rng = nullptr,
           std::vector<double>* row_nll = nullptr);
  Var loss(TapeT& tape, const TrainingExample& example, LossBreakdown* breakdown,
           std::mt19937_64* dropout_rng = nullptr);
  LossBreakdown evaluate(const TrainingExample& example);

 private:
  struct AttentionLayer {
    Parameter<T>* norm_gain = nullptr;
    Parameter<T>* norm_bias = nullptr;
    Parameter<T>* memory_gain = nullptr;  // cross-attention only
    Parameter<T>* memory_bias = nullptr;
    Parameter<T>* wq = nullptr;
    Parameter<T>* bq = nullptr;
    Parameter<T>* wk = nullptr;
    Parameter<T>* bk = nullptr;
    Parameter<T>* wv = nullptr;
    Parameter<T>* bv = nullptr;
    Parameter<T>* wo = nullptr;
    Parameter<T>* bo = nullptr;
    Parameter<T>* alpha = nullptr;
  };
  struct FeedForwardLayer {
    Parameter<T>* norm_gain = nullptr;
    Parameter<T>* norm_bias = nullptr;
    Parameter<T>* w1 = nullptr;
    Parameter<T>* b1 = nullptr;
    Parameter<T>* w2 = nullptr;
    Parameter<T>* b2 = nullptr;
    Parameter<T>* alpha = nullptr;
  };
  struct Block {
    std::vector<AttentionLayer> self;
    std::vector<AttentionLayer> cross;
    std::vector<FeedForwardLayer> ff;
  };
  struct OutputHead {
    Parameter<T>* norm_gain = nullptr;
    Parameter<T>* norm_bias = nullptr;
    Parameter<T>* weight = nullptr;
    Parameter<T>* bias = nullptr;
  };

  AttentionLayer make_attention(const std::string& prefix, bool cross);
  FeedForwardLayer make_feedforward(const std::string& prefix);
  std::vector<Block> make_stack(const std::string& prefix, const std::vector<LayerSpec>& spec, bool decoder);
  OutputHead make_head(const std::string& prefix, int vocab);

  Var attend(TapeT& tape, const AttentionLayer& layer, Var h, std::optional<Var> memory, bool causal,
             std::mt19937_64* rng);
  Var feedforward(TapeT& tape, const FeedForwardLayer& layer, Var h, std::mt19937_64* rng);
  Var run_stack(TapeT& tape, const std::vector<Block>& stack, Var h, std::optional<Var> memory,
                std::mt19937_64* rng);

  ModelConfig config_;
  ParameterSet<T> params_;

  Parameter<T>* patch_weight_ = nullptr;
  Parameter<T>* patch_bias_ = nullptr;
  Parameter<T>* encoder_position_ = nullptr;
  Parameter<T>* channel_embedding_ = nullptr;
  Parameter<T>* position_embedding_ = nullptr;
  Parameter<T>* value_embedding_ = nullptr;
  Parameter<T>* chunk_position_embedding_ = nullptr;
  Parameter<T>* bos_embedding_ = nullptr;
  std::vector<Block> encoder_;
  std::vector<Block> channel_decoder_;
  std::vector<Block> position_decoder_;
  std::vector<Block> value_decoder_;
  OutputHead channel_head_;
  OutputHead position_head_;
  OutputHead value_head_;
};

// Copies parameter values by name between models of equal configuration.
template <typename To, typename From>
void copy_parameters(DCTransformer<To>& to, const DCTransformer<From>& from);

}  // namespace dctgen
