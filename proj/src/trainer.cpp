#include "dctgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dctgen/error.hpp"
#include "dctgen/synthetic.hpp"

namespace dctgen {

void TrainConfig::validate() const {
  if (!(lr_max > 0.0)) throw InputError("learning rate must be > 0");
  if (warmup_steps < 0) throw InputError("warmup steps must be >= 0");
  if (token_budget <= 0) throw InputError("token budget must be > 0");
  if (batch_size < 1) throw InputError("batch size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InputError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw InputError("Adam epsilon must be > 0");
  if (total_steps != 0 && warmup_steps >= total_steps) throw InputError("warmup steps must be below total steps");
  if (log_every < 1) throw InputError("log interval must be >= 1");
}

double lr_schedule(long step, double lr_max, long warmup_steps, long total_steps) {
  if (step < 0) throw InputError("step must be >= 0");
  if (warmup_steps >= total_steps) throw InputError("warmup steps must be below total steps");
  if (step <= warmup_steps) {
    return warmup_steps == 0 ? lr_max : lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
Adam<T>::Adam(ParameterSet<T>& params, double beta1, double beta2, double epsilon)
    : params_(params), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    m_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  ++t_;
  const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
  const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(epsilon_);
  std::size_t i = 0;
  for (auto& p : params_) {
    Mat<T>& m = m_[i];
    Mat<T>& v = v_[i];
    ++i;
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

template <typename T>
double clip_gradients(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params) p.grad *= s;
  }
  return norm;
}

double expected_tokens_per_example(const std::vector<TupleSeq>& data, const ChunkSpec& spec, const TrainConfig& cfg) {
  if (data.empty()) throw InputError("training set is empty");
  double total = 0.0;
  double weight = 0.0;
  for (const TupleSeq& seq : data) {
    const auto candidates = eligible_chunks(seq, spec, cfg.chroma_only);
    if (candidates.empty()) continue;
    const auto chunks = enumerate_chunks(seq.num_elements(), spec.size);
    const auto w = chunk_weights(candidates.size(), cfg.policy);
    const double keep = cfg.lmax > 0 ? keep_probability(seq.num_elements(), cfg.lmax) : 1.0;
    double expected = 0.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      expected += w[k] * static_cast<double>(chunks[candidates[k]].length);
    }
    total += keep * expected;
    weight += keep;
  }
  if (weight <= 0.0) throw InputError("no training sequence has an eligible chunk");
  return total / weight;
}

namespace {

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.channel) && std::isfinite(b.position) && std::isfinite(b.value);
}

std::string dump_state(long step, double lr, long tokens, std::size_t image, std::size_t chunk,
                       const LossBreakdown& b) {
  nlohmann::json j = {{"step", step},         {"lr", lr},
                      {"tokens", tokens},     {"image", image},
                      {"chunk", chunk},       {"channel_nats", std::to_string(b.channel)},
                      {"position_nats", std::to_string(b.position)}, {"value_nats", std::to_string(b.value)}};
  return j.dump();
}

}  // namespace

TrainResult train(DCTransformer<float>& model, const std::vector<TupleSeq>& data, const TrainConfig& cfg,
                  std::ostream* metrics) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  for (const TupleSeq& seq : data) {
    if (!(seq.geometry == mc.geometry)) throw InputError("training sequence geometry does not match the model");
    if (seq.ordering != mc.ordering) throw InputError("training sequence ordering does not match the model");
  }
  TrainResult result;
  const double per_example = expected_tokens_per_example(data, mc.chunk, cfg);
  result.total_steps = cfg.total_steps > 0
                           ? cfg.total_steps
                           : std::max<long>(cfg.warmup_steps + 1,
                                            static_cast<long>(std::ceil(static_cast<double>(cfg.token_budget) /
                                                                        (per_example * cfg.batch_size))));
  if (cfg.warmup_steps >= result.total_steps) throw InputError("warmup steps must be below total steps");

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Adam<float> adam(model.params(), cfg.beta1, cfg.beta2, cfg.epsilon);
  const ExampleOptions options{cfg.chroma_only};

  while (result.tokens < cfg.token_budget) {
    const long step = result.steps + 1;
    const double lr = lr_schedule(std::min(step, result.total_steps), cfg.lr_max, cfg.warmup_steps,
                                  result.total_steps);
    model.params().zero_grad();
    StepRecord rec;
    rec.step = step;
    rec.lr = lr;
    long subpixels = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      std::size_t idx = 0;
      std::vector<std::size_t> candidates;
      for (;;) {
        idx = pick(rng);
        candidates = eligible_chunks(data[idx], mc.chunk, cfg.chroma_only);
        if (candidates.empty()) continue;
        if (cfg.lmax == 0 || unit(rng) < keep_probability(data[idx].num_elements(), cfg.lmax)) break;
      }
      const std::size_t k = select_chunk(candidates, cfg.policy, rng);
      const TrainingExample ex = build_training_example(data[idx], k, mc.chunk, options);
      Tape<float> tape;
      LossBreakdown br;
      auto loss = model.loss(tape, ex, &br, mc.dropout > 0.0 ? &dropout_rng : nullptr);
      if (!finite(br)) {
        throw NumericError("non-finite loss; state " + dump_state(step, lr, result.tokens, idx, k, br));
      }
      tape.backward(loss);
      rec.breakdown.channel += br.channel;
      rec.breakdown.position += br.position;
      rec.breakdown.value += br.value;
      rec.breakdown.tokens += br.tokens;
      subpixels += data[idx].geometry.subpixels();
    }
    const long tokens = static_cast<long>(rec.breakdown.tokens);
    if (tokens > 0) {
      const float inv = 1.0f / static_cast<float>(tokens);
      for (auto& p : model.params()) p.grad *= inv;
      clip_gradients(model.params(), cfg.grad_clip);
      adam.step(lr);
    }
    result.tokens += tokens;
    result.steps = step;
    rec.tokens = result.tokens;
    rec.loss = tokens > 0 ? rec.breakdown.total() / static_cast<double>(tokens) : 0.0;
    rec.bpd = rec.breakdown.total() / std::numbers::ln2 / static_cast<double>(subpixels);
    result.history.push_back(rec);
    if (metrics && (step % cfg.log_every == 0 || result.tokens >= cfg.token_budget)) {
      nlohmann::json j = {{"step", rec.step},
                          {"loss", rec.loss},
                          {"lr", rec.lr},
                          {"tokens", rec.tokens},
                          {"batch_bpd", rec.bpd},
                          {"channel_nats", rec.breakdown.channel},
                          {"position_nats", rec.breakdown.position},
                          {"value_nats", rec.breakdown.value}};
      *metrics << j.dump() << "\n";
      metrics->flush();
    }
  }
  return result;
}

nlohmann::json to_json(const BpdReport& r) {
  return {{"total_bpd", r.total},     {"channel_bpd", r.channel}, {"position_bpd", r.position},
          {"value_bpd", r.value},     {"per_chunk_bpd", r.per_chunk}, {"chunk_tokens", r.chunk_tokens},
          {"tokens", r.tokens},       {"images", r.images}};
}

template <typename T>
BpdReport eval_bpd(DCTransformer<T>& model, const std::vector<TupleSeq>& data, bool chroma_only) {
  BpdReport report;
  if (data.empty()) return report;
  const ChunkSpec& spec = model.config().chunk;
  const ExampleOptions options{chroma_only};
  for (const TupleSeq& seq : data) {
    const double scale = 1.0 / (std::numbers::ln2 * static_cast<double>(seq.geometry.subpixels()));
    const auto chunks = enumerate_chunks(seq.num_elements(), spec.size);
    if (report.per_chunk.size() < chunks.size()) {
      report.per_chunk.resize(chunks.size(), 0.0);
      report.chunk_tokens.resize(chunks.size(), 0);
    }
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      const LossBreakdown b = model.evaluate(build_training_example(seq, k, spec, options));
      report.channel += b.channel * scale;
      report.position += b.position * scale;
      report.value += b.value * scale;
      report.per_chunk[k] += b.total() * scale;
      report.chunk_tokens[k] += static_cast<long>(b.tokens);
      report.tokens += static_cast<long>(b.tokens);
    }
  }
  const double n = static_cast<double>(data.size());
  report.images = data.size();
  report.channel /= n;
  report.position /= n;
  report.value /= n;
  for (double& x : report.per_chunk) x /= n;
  report.total = report.channel + report.position + report.value;
  return report;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.geometry = Geometry{8, 8, 2, 50, 9};
  c.chunk = ChunkSpec{3, 1};
  c.hidden = 8;
  c.heads = 1;
  c.encoder_spec = c.channel_spec = c.position_spec = c.value_spec = {{1, 1}};
  c.kernel = 3;
  c.stride = 2;
  return c;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

double total_loss(DCTransformer<double>& model, const std::vector<TrainingExample>& examples, bool backward) {
  double total = 0.0;
  for (const TrainingExample& ex : examples) {
    Tape<double> tape(backward);
    LossBreakdown b;
    auto loss = model.loss(tape, ex, &b);
    if (backward) tape.backward(loss);
    total += tape.value(loss)(0, 0);
  }
  return total;
}

}  // namespace

GradCheckReport grad_check(const ModelConfig& config, std::uint64_t seed, double step) {
  ModelConfig cfg = config;
  cfg.dropout = 0.0;
  DCTransformer<double> model(cfg);
  model.randomize(seed);
  std::mt19937_64 rng(seed + 1);
  const std::size_t max_triples = 5;
  const std::size_t capacity = static_cast<std::size_t>(cfg.geometry.num_positions()) * cfg.geometry.band_size();
  const TupleSeq seq =
      serialize(make_random_dct_image(rng, cfg.geometry, std::min(max_triples, capacity)), cfg.ordering);
  std::vector<TrainingExample> examples;
  for (std::size_t k = 0; k < enumerate_chunks(seq.num_elements(), cfg.chunk.size).size(); ++k) {
    examples.push_back(build_training_example(seq, k, cfg.chunk));
  }

  model.params().zero_grad();
  total_loss(model, examples, true);
  GradCheckReport report;
  for (auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + step;
      const double up = total_loss(model, examples, false);
      x = saved - step;
      const double down = total_loss(model, examples, false);
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(p.grad.data()[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

template class Adam<float>;
template class Adam<double>;
template double clip_gradients(ParameterSet<float>&, double);
template double clip_gradients(ParameterSet<double>&, double);
template BpdReport eval_bpd(DCTransformer<float>&, const std::vector<TupleSeq>&, bool);
template BpdReport eval_bpd(DCTransformer<double>&, const std::vector<TupleSeq>&, bool);

}  // namespace dctgen
