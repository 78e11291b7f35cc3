#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dctgen/chunker.hpp"
#include "dctgen/model.hpp"

namespace dctgen {

struct TrainConfig {
  double lr_max = 1e-3;
  long warmup_steps = 1000;
  long total_steps = 0;   // 0: estimated from the token budget
  long token_budget = 1000000;
  int batch_size = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  std::uint64_t seed = 0;
  std::size_t lmax = 0;    // length filter L_max; 0 disables
  SelectionPolicy policy;
  bool chroma_only = false;  // colorization training
  long log_every = 1;

  void validate() const;  // throws InputError
};

// Linear warmup to lr_max, then cosine decay reaching 0 at total_steps.
double lr_schedule(long step, double lr_max, long warmup_steps, long total_steps);

template <typename T>
class Adam {
 public:
  Adam(ParameterSet<T>& params, double beta1, double beta2, double epsilon);
  void step(double lr);
  long steps() const { return t_; }

 private:
  ParameterSet<T>& params_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<Mat<T>> m_;
  std::vector<Mat<T>> v_;
};

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
template <typename T>
double clip_gradients(ParameterSet<T>& params, double max_norm);

struct StepRecord {
  long step = 0;
  double loss = 0.0;  // nats per loss-masked element
  double lr = 0.0;
  long tokens = 0;    // cumulative
  double bpd = 0.0;   // batch NLL in bits per subpixel of the selected images
  LossBreakdown breakdown;
};

struct TrainResult {
  long steps = 0;
  long tokens = 0;
  long total_steps = 0;
  std::vector<StepRecord> history;
};

// Mean loss-masked tokens per sampled example under the selection policy.
double expected_tokens_per_example(const std::vector<TupleSeq>& data, const ChunkSpec& spec, const TrainConfig& cfg);

// Adam until the cumulative token count reaches the budget. One JSON line
// per logged step goes to `metrics` when non-null. Throws NumericError on a
// non-finite loss.
TrainResult train(DCTransformer<float>& model, const std::vector<TupleSeq>& data, const TrainConfig& cfg,
                  std::ostream* metrics = nullptr);

struct BpdReport {
  double total = 0.0;
  double channel = 0.0;
  double position = 0.0;
  double value = 0.0;
  // Mean bpd contributed by chunk k (zero for images without that chunk);
  // sums to total.
  std::vector<double> per_chunk;
  std::vector<long> chunk_tokens;
  long tokens = 0;
  std::size_t images = 0;
};

nlohmann::json to_json(const BpdReport& report);

// Enumerates every chunk of every sequence; bits divided by H * W * 3 and
// averaged over images.
template <typename T>
BpdReport eval_bpd(DCTransformer<T>& model, const std::vector<TupleSeq>& data, bool chroma_only = false);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

// Tiny configuration used by gradient checks: d=8, one head, [(1,1)] specs,
// vocabularies of at most 20 entries.
ModelConfig tiny_config();

// Analytic against central-difference gradients over every scalar
// parameter, double precision, on a random example of at most 6 elements.
GradCheckReport grad_check(const ModelConfig& config, std::uint64_t seed, double step = 1e-5);

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-4);

}  // namespace dctgen
