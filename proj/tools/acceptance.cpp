// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dctgen/chunker.hpp"
#include "dctgen/dct_quant.hpp"
#include "dctgen/error.hpp"
#include "dctgen/model.hpp"
#include "dctgen/sampler.hpp"
#include "dctgen/sparse_codec.hpp"
#include "dctgen/synthetic.hpp"
#include "dctgen/trainer.hpp"

using namespace dctgen;

namespace {

// Collects the first few failure messages of a criterion.
class Outcome {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 5) messages_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failures_ == 0; }
  std::string summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < notes_.size(); ++i) os << (i ? "; " : "") << notes_[i];
    if (failures_ > 0) {
      os << (notes_.empty() ? "" : "; ") << failures_ << " failed check(s):";
      for (const auto& m : messages_) os << " [" << m << "]";
    }
    return os.str();
  }

 private:
  long failures_ = 0;
  std::vector<std::string> messages_;
  std::vector<std::string> notes_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

template <typename F>
bool throws(F&& f) {
  try {
    f();
  } catch (const Error&) {
    return true;
  }
  return false;
}

Block random_block(std::mt19937_64& rng, int b) {
  std::uniform_real_distribution<double> u(-128.0, 127.0);
  Block out(b);
  for (auto& v : out.values) v = u(rng);
  return out;
}

double energy(const Block& b) {
  double s = 0.0;
  for (double v : b.values) s += v * v;
  return s;
}

void codec_suite(Outcome& o) {
  std::mt19937_64 rng(101);
  double worst_round = 0.0, worst_parseval = 0.0;
  for (int b : {4, 8, 16, 32}) {
    const QuantMatrix ql = quant_matrix(75, QuantKind::Luma, b);
    for (int t = 0; t < 1000; ++t) {
      const Block p = random_block(rng, b);
      const Block d = dct2(p);
      const Block back = idct2(d);
      double err = 0.0;
      for (std::size_t i = 0; i < p.values.size(); ++i) err = std::max(err, std::abs(back.values[i] - p.values[i]));
      worst_round = std::max(worst_round, err);
      const double rel = std::abs(energy(d) - energy(p)) / energy(p);
      worst_parseval = std::max(worst_parseval, rel);
      const Block deq = dequantize(quantize(d, ql, ClipBound{}), ql);
      for (std::size_t i = 0; i < d.values.size(); ++i) {
        o.expect(std::abs(deq.values[i] - d.values[i]) <= ql.entries[i] / 2.0 + 1e-9, "quantization error > Q/2");
      }
    }
  }
  o.expect(worst_round <= 1e-9, "round trip error " + fmt(worst_round));
  o.expect(worst_parseval <= 1e-9, "Parseval error " + fmt(worst_parseval));

  const QuantMatrix l50 = quant_matrix(50, QuantKind::Luma, 8);
  const QuantMatrix c50 = quant_matrix(50, QuantKind::Chroma, 8);
  o.expect(std::equal(l50.entries.begin(), l50.entries.end(), base_luma_table().begin()), "q=50 luma table");
  o.expect(std::equal(c50.entries.begin(), c50.entries.end(), base_chroma_table().begin()), "q=50 chroma table");

  for (QuantKind kind : {QuantKind::Luma, QuantKind::Chroma}) {
    for (int b : {4, 8, 16, 32}) {
      QuantMatrix prev = quant_matrix(1, kind, b);
      for (int q = 2; q <= 100; ++q) {
        const QuantMatrix cur = quant_matrix(q, kind, b);
        for (std::size_t i = 0; i < cur.entries.size(); ++i) {
          o.expect(cur.entries[i] <= prev.entries[i] && cur.entries[i] >= 1,
                   "monotonicity at q=" + std::to_string(q) + " B=" + std::to_string(b));
        }
        prev = cur;
      }
    }
  }
  o.note("round trip " + fmt(worst_round) + ", Parseval " + fmt(worst_parseval));
}

void bijection_suite(Outcome& o) {
  std::mt19937_64 rng(202);
  for (Ordering ord : {Ordering::Generation, Ordering::Colorization}) {
    for (int t = 0; t < 1000; ++t) {
      const int b = 4 << (rng() % 4);
      const Geometry g{1 + static_cast<int>(rng() % 96), 1 + static_cast<int>(rng() % 96), b,
                       1 + static_cast<int>(rng() % 100), 1 + static_cast<int>(rng() % 1200)};
      const std::size_t nz = rng() % (static_cast<std::size_t>(g.num_positions()) * 3 + 1);
      const DctImage img = make_random_dct_image(rng, g, nz);
      const TupleSeq s = serialize(img, ord);
      o.expect(deserialize(s) == img, "deserialize(serialize(x)) != x");
      o.expect(serialize(deserialize(s), ord) == s, "serialize(deserialize(s)) != s");
    }
  }

  const Geometry g{64, 64, 8, 50, 1200};
  int rejected = 0, cases = 0;
  auto bad = [&](std::vector<Triple> t, bool terminated = true) {
    ++cases;
    const TupleSeq s{g, Ordering::Generation, std::move(t), terminated};
    if (throws([&] { deserialize(s); })) ++rejected;
  };
  bad({{0, 3, 1}, {0, 3, 2}});
  bad({{0, 3, 0}});
  bad({{0, 64, 1}});
  bad({{0, -1, 1}});
  bad({{192, 0, 0}});
  bad({{193, 0, 1}});
  bad({{-1, 0, 1}});
  bad({{64, 1, 1}});
  bad({{64, 8, 1}});
  bad({{0, 0, 1201}});
  bad({{0, 0, -1201}});
  bad({{1, 0, 1}, {0, 0, 1}});
  bad({{0, 5, 1}, {0, 4, 1}});

  std::ostringstream good;
  write_sdct(encode_image(RgbImage(16, 16, 40), 8, 50, Ordering::Generation), good);
  const std::string bytes = good.str();
  auto bad_file = [&](std::string b) {
    ++cases;
    std::istringstream in(b);
    if (throws([&] { read_sdct(in); })) ++rejected;
  };
  std::string m = bytes;
  m[0] = 'X';
  bad_file(m);
  m = bytes;
  m[4] = 9;
  bad_file(m);
  m = bytes;
  m[15] = 7;
  bad_file(m);
  bad_file(bytes.substr(0, bytes.size() - 3));
  bad_file(bytes + "x");
  bad_file(bytes.substr(0, 10));
  o.expect(rejected == cases, std::to_string(cases - rejected) + " malformed input(s) accepted");
  o.note("2000 round trips, " + std::to_string(rejected) + "/" + std::to_string(cases) + " malformed inputs rejected");
}

void bits_trend(Outcome& o) {
  std::mt19937_64 rng(303);
  std::vector<RgbImage> shapes, noise;
  for (int i = 0; i < 10; ++i) shapes.push_back(make_shapes_image(rng, 64, 64));
  for (int i = 0; i < 10; ++i) noise.push_back(make_noise_image(rng, 64, 64));
  std::ostringstream ratios;
  for (int q : {10, 25, 50, 75}) {
    // Noise images only serve as the ratio baseline.
    auto ratio = [&](const std::vector<RgbImage>& set, bool require_sparse) {
      double sparse = 0.0, dense = 0.0;
      for (const RgbImage& img : set) {
        const BitCost c = bit_cost(encode_dct_image(img, 8, q));
        if (require_sparse) o.expect(c.sparse_bits < c.dense_bits, "sparse >= dense at q=" + std::to_string(q));
        sparse += c.sparse_bpp;
        dense += c.dense_bpp;
      }
      return sparse / dense;
    };
    const double rs = ratio(shapes, true), rn = ratio(noise, false);
    o.expect(rs < rn, "shapes ratio not below noise at q=" + std::to_string(q));
    ratios << (q == 10 ? "" : ", ") << "q" << q << " " << fmt(rs) << " vs " << fmt(rn);
  }
  o.note("sparse/dense " + ratios.str());
}

void progressive(Outcome& o) {
  std::mt19937_64 rng(404);
  std::size_t steps = 0;
  for (int i = 0; i < 20; ++i) {
    const int h = 32 + static_cast<int>(rng() % 33), w = 32 + static_cast<int>(rng() % 33);
    const TupleSeq s = encode_image(make_shapes_image(rng, h, w), 8, 50, i % 2 ? Ordering::Colorization : Ordering::Generation);
    const DctImage full = deserialize(s);
    double prev = coefficient_sq_error(deserialize(take_prefix(s, 0)), full);
    for (std::size_t n = 1; n <= s.triples.size(); ++n) {
      const double e = coefficient_sq_error(deserialize(take_prefix(s, n)), full);
      o.expect(e < prev, "error did not decrease at prefix " + std::to_string(n));
      prev = e;
      ++steps;
    }
    o.expect(prev == 0.0, "full prefix error nonzero");
  }
  o.note(std::to_string(steps) + " prefixes checked");
}

ModelConfig mechanism_config(int stride, int kernel) {
  ModelConfig c;
  c.geometry = Geometry{24, 32, 4, 50, 20};
  c.chunk = ChunkSpec{6, 2};
  c.hidden = 12;
  c.heads = 3;
  c.encoder_spec = {{1, 1}};
  c.channel_spec = {{1, 2}};
  c.position_spec = {{1, 1}};
  c.value_spec = {{2, 1}};
  c.kernel = kernel;
  c.stride = stride;
  return c;
}

TupleSeq random_seq(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return serialize(make_random_dct_image(rng, c.geometry, n), c.ordering);
}

void chunker_stats(Outcome& o) {
  const auto w = chunk_weights(3, SelectionPolicy{});
  const double expected[] = {0.8163, 0.1020, 0.0816};
  for (int k = 0; k < 3; ++k) o.expect(std::abs(w[k] - expected[k]) < 5e-5, "chunk weight " + std::to_string(k));
  std::mt19937_64 rng(505);
  const std::vector<std::size_t> candidates{0, 1, 2};
  std::vector<long> counts(3, 0);
  const long n = 100000;
  double worst_sigma = 0.0;
  for (long i = 0; i < n; ++i) ++counts[select_chunk(candidates, SelectionPolicy{}, rng)];
  for (int k = 0; k < 3; ++k) {
    const double sigma = std::sqrt(n * w[k] * (1 - w[k]));
    const double dev = std::abs(counts[k] - n * w[k]) / sigma;
    worst_sigma = std::max(worst_sigma, dev);
    o.expect(dev < 3.0, "frequency of chunk " + std::to_string(k) + " off by " + fmt(dev) + " sigma");
  }

  // Sum over all chunks (uniform policy, no overlap) against each element
  // scored alone with its full conditioning.
  ModelConfig c = mechanism_config(2, 3);
  c.chunk = ChunkSpec{7, 0};
  DCTransformer<double> m(c);
  m.randomize(9, 0.4);
  double worst = 0.0;
  for (std::size_t len : {1u, 3u, 13u, 29u, 30u, 49u}) {
    const TupleSeq seq = random_seq(c, len, len + 17);
    const auto elements = seq.elements();
    const auto chunks = enumerate_chunks(elements.size(), 7);
    double chunked = 0.0;
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      chunked += m.evaluate(build_training_example(seq, k, c.chunk)).total();
    }
    double mono = 0.0;
    for (std::size_t i = 0; i < elements.size(); ++i) {
      const std::size_t start = i / 7 * 7;
      std::optional<Triple> lead;
      if (start > 0) lead = elements[start - 1];
      std::vector<Triple> window(elements.begin() + static_cast<std::ptrdiff_t>(start),
                                 elements.begin() + static_cast<std::ptrdiff_t>(i + 1));
      std::vector<std::uint8_t> mask(window.size(), 0);
      mask.back() = 1;
      Tape<double> tape(false);
      LossBreakdown b;
      m.loss(tape, deserialize(take_prefix(seq, start)), make_decoder_inputs(lead, window), mask, &b);
      mono += b.total();
    }
    const double err = std::abs(chunked - mono) / std::max(1.0, mono);
    worst = std::max(worst, err);
  }
  o.expect(worst <= 1e-9, "chunked loss identity error " + fmt(worst));
  o.note("max deviation " + fmt(worst_sigma) + " sigma, loss identity " + fmt(worst));
}

void model_suite(Outcome& o) {
  {
    ModelConfig c = mechanism_config(2, 3);
    DCTransformer<double> m(c);
    m.randomize(7, 0.4);
    const TrainingExample ex = build_training_example(random_seq(c, 20, 8), 1, c.chunk);
    const DecoderInputs base = make_decoder_inputs(ex);
    const auto ref = m.logits(ex.input, base);
    const int rows = static_cast<int>(base.rows());
    for (int j = 1; j < rows; ++j) {
      DecoderInputs mod = base;
      mod.inputs[j] = Triple{(base.inputs[j].channel + 5) % 48, (base.inputs[j].position + 3) % 48, 7};
      mod.targets[j] = Triple{(base.targets[j].channel + 11) % 48, (base.targets[j].position + 1) % 48, -4};
      const auto out = m.logits(ex.input, mod);
      o.expect(out.channel.topRows(j) == ref.channel.topRows(j) && out.position.topRows(j) == ref.position.topRows(j) &&
                   out.value.topRows(j) == ref.value.topRows(j),
               "future change leaked into row < " + std::to_string(j));
    }
  }
  {
    ModelConfig c = mechanism_config(2, 3);
    DCTransformer<double> m(c);
    m.initialize(5);
    const TrainingExample ex = build_training_example(random_seq(c, 15, 6), 1, c.chunk);
    const DecoderInputs in = make_decoder_inputs(ex);
    Tape<double> tape(false);
    const auto h = m.forward(tape, ex.input, in);
    o.expect(tape.value(h.h_channel) == tape.value(h.e_channel), "ReZero channel stack not identity");
    const Mat<double> patch = tape.value(m.patch_embedding(tape, ex.input));
    o.expect(tape.value(h.e_input) == patch, "ReZero encoder not identity");
  }
  for (int s : {1, 2, 3}) {
    ModelConfig c = mechanism_config(s, s);
    c.geometry = Geometry{64, 64, 8, 50, 10};
    c.chunk = ChunkSpec{8, 2};
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        o.expect(c.cell_of(i * 8 + j) == (i / s) * c.grid_wide() + j / s, "cell_of with s=" + std::to_string(s));
      }
    }
    DCTransformer<double> m(c);
    m.initialize(3);
    const TrainingExample ex = build_training_example(random_seq(c, 7, 4), 0, c.chunk);
    const DecoderInputs in = make_decoder_inputs(ex);
    Tape<double> tape(false);
    const auto h = m.forward(tape, ex.input, in);
    const Mat<double>& e = tape.value(h.e_input);
    const Mat<double>& hp = tape.value(h.h_position);
    const Mat<double>& hv = tape.value(h.h_value);
    for (std::size_t r = 0; r < in.rows(); ++r) {
      if (in.targets[r].channel == c.geometry.stop_channel()) continue;
      const int cell = c.cell_of(in.targets[r].position);
      o.expect((hv.row(r) - (hp.row(r) + e.row(cell))).cwiseAbs().maxCoeff() == 0.0,
               "gather row mismatch, s=" + std::to_string(s));
    }
  }
  double worst = 0.0;
  for (std::uint64_t seed : {1u, 2u}) {
    const GradCheckReport r = grad_check(tiny_config(), seed);
    worst = std::max(worst, r.max_rel_error);
    o.expect(r.max_rel_error < 1e-4, "grad_check " + fmt(r.max_rel_error) + " at " + r.worst_parameter);
  }
  int samples = 0;
  for (int run = 0; run < 100; ++run) {
    ModelConfig c;
    c.geometry = Geometry{16, 16, 4, 50, 5};
    c.ordering = run % 2 ? Ordering::Colorization : Ordering::Generation;
    c.chunk = ChunkSpec{8, 2};
    c.hidden = 8;
    c.heads = 2;
    c.encoder_spec = c.channel_spec = c.position_spec = c.value_spec = {{1, 1}};
    c.kernel = 3;
    c.stride = 2;
    DCTransformer<float> m(c);
    m.randomize(static_cast<std::uint64_t>(run), 0.8);
    std::mt19937_64 rng(static_cast<std::uint64_t>(run) + 1000);
    SampleOptions opts;
    opts.temperature = 0.5 + 0.01 * run;
    opts.max_chunks = 3;
    const TupleSeq out = sample_continuation(m, TupleSeq{c.geometry, c.ordering, {}, false}, rng, opts);
    const bool ok = !throws([&] { deserialize(out); });
    o.expect(ok, "sample " + std::to_string(run) + " does not deserialize");
    samples += ok;
  }
  o.note("grad_check " + fmt(worst) + ", " + std::to_string(samples) + "/100 samples valid");
}

std::vector<TupleSeq> encode_set(const std::vector<RgbImage>& images) {
  std::vector<TupleSeq> out;
  for (const RgbImage& img : images) out.push_back(encode_image(img, 8, 75, Ordering::Generation));
  return out;
}

void toy_training(Outcome& o) {
  const std::vector<TupleSeq> train_set = encode_set(make_shapes_dataset(200, 1, 32, 32));
  const std::vector<TupleSeq> held_out = encode_set(make_shapes_dataset(50, 999, 32, 32));
  ModelConfig c;
  c.geometry = Geometry{32, 32, 8, 75, kDefaultClip};
  c.chunk = ChunkSpec{128, 32};
  c.hidden = 64;
  c.heads = 2;
  c.encoder_spec = c.channel_spec = c.position_spec = c.value_spec = parse_layer_spec("[(1,2)]*2");
  c.kernel = 3;
  c.stride = 1;
  DCTransformer<float> m(c);
  m.initialize(1);
  const BpdReport before = eval_bpd(m, held_out);

  TrainConfig t;
  t.lr_max = 2e-3;
  t.warmup_steps = 100;
  t.batch_size = 8;
  t.token_budget = 600000;
  t.seed = 1;
  t.log_every = 1000;
  const TrainResult r = train(m, train_set, t);
  const BpdReport after = eval_bpd(m, held_out);

  const double drop = 1.0 - after.total / before.total;
  o.expect(r.tokens <= 2000000, "token budget exceeded");
  o.expect(drop >= 0.20, "bpd drop " + fmt(100 * drop) + "%");
  o.expect(after.value > after.position, "value bpd not above position bpd");
  o.expect(after.position > after.channel, "position bpd not above channel bpd");
  o.note("bpd " + fmt(before.total) + " -> " + fmt(after.total) + " (" + fmt(100 * drop) + "% drop, " +
         std::to_string(r.tokens) + " tokens); channel " + fmt(after.channel) + ", position " + fmt(after.position) +
         ", value " + fmt(after.value));
}

void conditioning(Outcome& o) {
  std::mt19937_64 rng(808);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const RgbImage img = make_shapes_image(rng, 32, 48);
    const TupleSeq full = encode_image(img, 8, 75, Ordering::Generation);
    const YccPlanes target = dct_image_to_planes(deserialize(full));
    const YccPlanes got = dct_image_to_planes(deserialize(upsample_condition(full)));
    auto check = [&](const Plane& ref, const Plane& p) {
      for (int bi = 0; bi < ref.height / 8; ++bi) {
        for (int bj = 0; bj < ref.width / 8; ++bj) {
          double mean = 0.0;
          for (int r = 0; r < 8; ++r) {
            for (int col = 0; col < 8; ++col) mean += ref.at(bi * 8 + r, bj * 8 + col);
          }
          mean /= 64.0;
          for (int r = 0; r < 8; ++r) {
            for (int col = 0; col < 8; ++col) worst = std::max(worst, std::abs(p.at(bi * 8 + r, bj * 8 + col) - mean));
          }
        }
      }
    };
    check(target.y, got.y);
    check(target.cb, got.cb);
    check(target.cr, got.cr);
  }
  o.expect(worst <= 1e-9, "upsample prefix differs from block mean by " + fmt(worst));

  ModelConfig c;
  c.geometry = Geometry{32, 32, 8, 75, kDefaultClip};
  c.ordering = Ordering::Colorization;
  c.chunk = ChunkSpec{16, 4};
  c.hidden = 8;
  c.heads = 2;
  c.encoder_spec = c.channel_spec = c.position_spec = c.value_spec = {{1, 1}};
  c.kernel = 3;
  c.stride = 2;
  DCTransformer<float> m(c);
  for (int i = 0; i < 10; ++i) {
    m.randomize(static_cast<std::uint64_t>(i), 0.8);
    const RgbImage img = make_shapes_image(rng, 32, 32);
    const TupleSeq prefix = colorize_condition(img, c.geometry);
    SampleOptions opts;
    opts.min_rank = colorize_min_rank(8);
    opts.max_chunks = 3;
    const TupleSeq out = sample_continuation(m, prefix, rng, opts);
    o.expect(dct_image_to_planes(deserialize(out)).y.data == dct_image_to_planes(deserialize(prefix)).y.data,
             "colorized luma differs");
  }

  std::size_t luma_rows = 0, chroma_rows = 0;
  const ChunkSpec spec{64, 16};
  for (int i = 0; i < 20; ++i) {
    const TupleSeq seq = encode_image(make_shapes_image(rng, 48, 48), 8, 75, Ordering::Colorization);
    const std::size_t tail = chroma_tail_start(seq);
    for (std::size_t k : eligible_chunks(seq, spec, true)) {
      const TrainingExample ex = build_training_example(seq, k, spec, ExampleOptions{true});
      o.expect(ex.chunk_start + 64 > tail, "ineligible chunk selected");
      for (std::size_t r = 0; r < ex.window.size(); ++r) {
        if (!ex.loss_mask[r]) continue;
        const bool luma = ex.first + r < tail;
        o.expect(!luma, "loss on a luma element");
        (luma ? luma_rows : chroma_rows) += 1;
      }
    }
  }
  o.expect(chroma_rows > 0, "no chroma loss rows");
  o.note("block mean error " + fmt(worst) + ", " + std::to_string(chroma_rows) + " chroma loss rows, " +
         std::to_string(luma_rows) + " luma");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "codec correctness", codec_suite},
      {2, "sparse representation bijection", bijection_suite},
      {3, "sparse versus dense bit cost", bits_trend},
      {4, "progressive decoding", progressive},
      {5, "chunker statistics", chunker_stats},
      {6, "model mechanisms", model_suite},
      {7, "toy training", toy_training},
      {8, "conditioning", conditioning},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.ok() ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.summary() << " ["
              << fmt(secs) << " s]" << std::endl;
    failed += !o.ok();
  }
  return failed == 0 ? 0 : 1;
}
