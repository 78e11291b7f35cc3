#include "dctgen/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "dctgen/checkpoint.hpp"
#include "dctgen/error.hpp"
#include "dctgen/image_io.hpp"
#include "dctgen/sampler.hpp"
#include "dctgen/synthetic.hpp"
#include "dctgen/trainer.hpp"

namespace dctgen {

namespace fs = std::filesystem;

namespace {

struct CodecFlags {
  int quality = 50;
  int block_size = 8;
  std::string ordering = "generation";
  int clip = kDefaultClip;

  void add(CLI::App* cmd, bool with_ordering = true) {
    cmd->add_option("--quality,-q", quality, "JPEG quality 1-100")->check(CLI::Range(1, 100));
    cmd->add_option("--block-size,-b", block_size, "DCT block size (4, 8, 16, 32)")
        ->check(CLI::IsMember({4, 8, 16, 32}));
    if (with_ordering) {
      cmd->add_option("--ordering", ordering, "sequence ordering")->check(CLI::IsMember({"generation", "colorization"}));
    }
    cmd->add_option("--clip", clip, "coefficient clip bound")->check(CLI::Range(1, 32767));
  }
};

struct DataFlags {
  std::string dir;
  int synthetic = 0;
  int size = 32;
  std::uint64_t data_seed = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--data", dir, "directory of PNG/PPM images");
    cmd->add_option("--synthetic", synthetic, "use N generated shape images instead")->check(CLI::Range(1, 1000000));
    cmd->add_option("--image-size", size, "side of generated images")->check(CLI::Range(1, 4096));
    cmd->add_option("--data-seed", data_seed, "seed of the generated images");
  }

  std::vector<RgbImage> load() const {
    if (dir.empty() == (synthetic == 0)) throw InputError("give exactly one of --data or --synthetic");
    if (synthetic > 0) return make_shapes_dataset(synthetic, data_seed, size, size);
    std::vector<RgbImage> images;
    for (const auto& p : list_images(dir)) images.push_back(read_image(p));
    if (images.empty()) throw InputError("no PNG or PPM images in " + dir);
    return images;
  }
};

std::vector<TupleSeq> encode_all(const std::vector<RgbImage>& images, const CodecFlags& codec) {
  std::vector<TupleSeq> out;
  for (const RgbImage& img : images) {
    if (img.height != images.front().height || img.width != images.front().width) {
      throw InputError("all images must share one size; found " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " and " + std::to_string(images.front().width) + "x" +
                       std::to_string(images.front().height));
    }
    out.push_back(encode_image(img, codec.block_size, codec.quality, parse_ordering(codec.ordering), codec.clip));
  }
  return out;
}

std::string fixed(double x, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

int cmd_encode(const std::string& input, const std::string& output, const CodecFlags& codec, std::ostream& out) {
  const RgbImage img = read_image(input);
  const TupleSeq seq = encode_image(img, codec.block_size, codec.quality, parse_ordering(codec.ordering), codec.clip);
  write_sdct(seq, fs::path(output));
  const BitCost cost = bit_cost(deserialize(seq));
  out << "triples " << seq.triples.size() << " dense_bpp " << fixed(cost.dense_bpp) << " sparse_bpp "
      << fixed(cost.sparse_bpp) << "\n";
  return 0;
}

int cmd_decode(const std::string& input, const std::string& output, long prefix, bool stats, std::ostream& out) {
  const TupleSeq full = read_sdct(fs::path(input));
  if (prefix > static_cast<long>(full.triples.size())) {
    throw InputError("prefix " + std::to_string(prefix) + " exceeds the " + std::to_string(full.triples.size()) +
                     " triples in " + input);
  }
  const TupleSeq seq = prefix >= 0 ? take_prefix(full, static_cast<std::size_t>(prefix)) : full;
  write_image(decode_to_rgb(seq), output);
  if (stats) {
    out << "prefix " << seq.triples.size() << " of " << full.triples.size() << " coefficient_sq_error "
        << fixed(coefficient_sq_error(deserialize(seq), deserialize(full))) << "\n";
  }
  return 0;
}

int cmd_bits(const std::string& dir, const std::vector<int>& qualities, int block_size, const std::string& output,
             std::ostream& out) {
  const auto paths = list_images(dir);
  if (paths.empty()) throw InputError("no PNG or PPM images in " + dir);
  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw InputError("cannot write " + output);
  }
  std::ostream& csv = output.empty() ? out : file;
  csv << "image,quality,dense_bpp,sparse_bpp\n";
  for (const auto& path : paths) {
    const RgbImage img = read_image(path);
    for (int q : qualities) {
      const BitCost cost = bit_cost(encode_dct_image(img, block_size, q));
      csv << path.filename().string() << "," << q << "," << fixed(cost.dense_bpp) << "," << fixed(cost.sparse_bpp)
          << "\n";
    }
  }
  return 0;
}

int cmd_synth(const std::string& dir, int count, std::uint64_t seed, int min_size, int max_size, bool noise,
              std::ostream& out) {
  if (min_size > max_size) throw InputError("--min-size must not exceed --max-size");
  fs::create_directories(dir);
  std::vector<RgbImage> images;
  if (noise) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> side(min_size, max_size);
    for (int i = 0; i < count; ++i) {
      const int s = side(rng);
      images.push_back(make_noise_image(rng, s, s));
    }
  } else {
    images = make_shapes_dataset(count, seed, min_size, max_size);
  }
  for (int i = 0; i < count; ++i) {
    std::ostringstream name;
    name << (noise ? "noise_" : "shapes_") << std::setw(5) << std::setfill('0') << i << ".png";
    write_image(images[static_cast<std::size_t>(i)], fs::path(dir) / name.str());
  }
  out << "wrote " << count << " images to " << dir << "\n";
  return 0;
}

void write_sample(const TupleSeq& seq, const std::string& image_path, const std::string& sdct_path,
                  std::ostream& out) {
  write_image(decode_to_rgb(seq), image_path);
  const std::string raw = sdct_path.empty() ? fs::path(image_path).replace_extension(".sdct").string() : sdct_path;
  write_sdct(seq, fs::path(raw));
  out << "triples " << seq.triples.size() << (seq.terminated ? " terminated" : " truncated") << " image "
      << image_path << " sequence " << raw << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse DCT image codec and DCT-domain Transformer generator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // encode
  std::string enc_in, enc_out;
  CodecFlags enc_codec;
  auto* encode = app.add_subcommand("encode", "encode an image to an SDCT sequence file");
  encode->add_option("image", enc_in, "input PNG or PPM")->required();
  encode->add_option("-o,--output", enc_out, "output .sdct")->required();
  enc_codec.add(encode);

  // decode
  std::string dec_in, dec_out;
  long dec_prefix = -1;
  bool dec_stats = false;
  auto* decode = app.add_subcommand("decode", "decode an SDCT file (or a prefix of it) to an image");
  decode->add_option("sequence", dec_in, "input .sdct")->required();
  decode->add_option("-o,--output", dec_out, "output .png or .ppm")->required();
  decode->add_option("--prefix", dec_prefix, "decode only the first N triples")->check(CLI::NonNegativeNumber);
  decode->add_flag("--stats", dec_stats, "print the coefficient-space error against the full sequence");

  // bits
  std::string bits_dir, bits_out;
  std::vector<int> bits_q{10, 25, 50, 75, 95};
  int bits_b = 8;
  auto* bits = app.add_subcommand("bits", "dense versus sparse bits per subpixel as CSV");
  bits->add_option("dir", bits_dir, "image directory")->required()->check(CLI::ExistingDirectory);
  bits->add_option("--quality,-q", bits_q, "quality levels")->delimiter(',')->check(CLI::Range(1, 100));
  bits->add_option("--block-size,-b", bits_b, "DCT block size")->check(CLI::IsMember({4, 8, 16, 32}));
  bits->add_option("-o,--output", bits_out, "CSV path (default stdout)");

  // synth
  std::string syn_dir;
  int syn_count = 10, syn_min = 32, syn_max = 64;
  std::uint64_t syn_seed = 0;
  bool syn_noise = false;
  auto* synth = app.add_subcommand("synth", "write a synthetic image corpus");
  synth->add_option("dir", syn_dir, "output directory")->required();
  synth->add_option("--count,-n", syn_count, "number of images")->check(CLI::Range(1, 1000000));
  synth->add_option("--seed", syn_seed, "random seed");
  synth->add_option("--min-size", syn_min, "smallest side")->check(CLI::Range(1, 4096));
  synth->add_option("--max-size", syn_max, "largest side")->check(CLI::Range(1, 4096));
  synth->add_flag("--noise", syn_noise, "uniform noise instead of shapes");

  // train
  CodecFlags tr_codec;
  DataFlags tr_data;
  std::string tr_config, tr_out, tr_metrics;
  TrainConfig tcfg;
  int tr_chunk = 0, tr_overlap = -1;
  bool tr_chroma = false;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  tr_codec.add(train_cmd);
  tr_data.add(train_cmd);
  train_cmd->add_option("--config", tr_config, "model config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--output", tr_out, "checkpoint path")->required();
  train_cmd->add_option("--metrics", tr_metrics, "JSON-lines metrics log");
  train_cmd->add_option("--chunk-size", tr_chunk, "chunk size C")->check(CLI::Range(1, 1 << 20));
  train_cmd->add_option("--overlap", tr_overlap, "chunk overlap O")->check(CLI::Range(0, 1 << 20));
  train_cmd->add_option("--tokens", tcfg.token_budget, "token budget")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tcfg.batch_size, "examples per step")->check(CLI::Range(1, 4096));
  train_cmd->add_option("--lr", tcfg.lr_max, "maximum learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--warmup", tcfg.warmup_steps, "warmup steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--steps", tcfg.total_steps, "schedule length (default from the token budget)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", tcfg.seed, "random seed");
  train_cmd->add_option("--lmax", tcfg.lmax, "length filter L_max (0 disables)")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--grad-clip", tcfg.grad_clip, "global gradient norm clip (0 disables)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_flag("--colorize-train", tr_chroma, "loss on chroma only, chunks intersecting the chroma tail");

  // eval
  std::string ev_ckpt;
  DataFlags ev_data;
  bool ev_chroma = false;
  auto* eval = app.add_subcommand("eval", "bits per subpixel of a checkpoint on a dataset");
  eval->add_option("--checkpoint,-c", ev_ckpt, "checkpoint path")->required();
  ev_data.add(eval);
  eval->add_flag("--chroma-only", ev_chroma, "score chroma elements only");

  // sample / upsample / colorize
  std::string sa_ckpt, sa_out, sa_sdct, sa_input;
  std::uint64_t sa_seed = 0;
  double sa_temp = 1.0;
  int sa_chunks = 1000000;
  auto add_sampling = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint,-c", sa_ckpt, "checkpoint path")->required();
    cmd->add_option("-o,--output", sa_out, "output image")->required();
    cmd->add_option("--sdct", sa_sdct, "output sequence (default: image path with .sdct)");
    cmd->add_option("--seed", sa_seed, "random seed");
    cmd->add_option("--temperature", sa_temp, "sampling temperature (0 = arg max)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-chunks", sa_chunks, "chunk limit")->check(CLI::Range(0, 1000000));
  };
  auto* sample = app.add_subcommand("sample", "sample an image");
  add_sampling(sample);
  auto* upsample = app.add_subcommand("upsample", "sample detail for a 1/B resolution image");
  add_sampling(upsample);
  upsample->add_option("--input,-i", sa_input, "low-resolution image")->required();
  auto* colorize = app.add_subcommand("colorize", "sample colour for an image's luma");
  add_sampling(colorize);
  colorize->add_option("--input,-i", sa_input, "grayscale image")->required();

  // gradcheck
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the training gradients");
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_option("--tolerance", gc_tol, "maximum relative error")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*encode) return cmd_encode(enc_in, enc_out, enc_codec, out);
    if (*decode) return cmd_decode(dec_in, dec_out, dec_prefix, dec_stats, out);
    if (*bits) return cmd_bits(bits_dir, bits_q, bits_b, bits_out, out);
    if (*synth) return cmd_synth(syn_dir, syn_count, syn_seed, syn_min, syn_max, syn_noise, out);
    if (*train_cmd) {
      const auto sequences = encode_all(tr_data.load(), tr_codec);
      ModelConfig mc;
      if (!tr_config.empty()) {
        std::ifstream in(tr_config);
        nlohmann::json j;
        try {
          in >> j;
        } catch (const nlohmann::json::exception& e) {
          throw InputError("config " + tr_config + ": " + e.what());
        }
        mc = model_config_from_json(j);
      }
      mc.geometry = sequences.front().geometry;
      mc.ordering = parse_ordering(tr_codec.ordering);
      if (tr_chunk > 0) mc.chunk.size = tr_chunk;
      if (tr_overlap >= 0) mc.chunk.overlap = tr_overlap;
      mc.validate();
      if (tr_chroma) require_ordering(mc.ordering, Ordering::Colorization, "colorization training");
      tcfg.chroma_only = tr_chroma;
      tcfg.log_every = 10;
      DCTransformer<float> model(mc);
      model.initialize(tcfg.seed);
      std::ofstream metrics;
      if (!tr_metrics.empty()) {
        metrics.open(tr_metrics);
        if (!metrics) throw InputError("cannot write " + tr_metrics);
        nlohmann::json flags = {{"args", std::vector<std::string>(args.begin() + 1, args.end())},
                                {"model", to_json(mc)},
                                {"lr", tcfg.lr_max},
                                {"warmup", tcfg.warmup_steps},
                                {"tokens", tcfg.token_budget},
                                {"batch", tcfg.batch_size},
                                {"seed", tcfg.seed},
                                {"lmax", tcfg.lmax}};
        metrics << nlohmann::json{{"flags", flags}}.dump() << "\n";
      }
      const TrainResult r = train(model, sequences, tcfg, tr_metrics.empty() ? nullptr : &metrics);
      save_checkpoint(model, tr_out);
      const double final_loss = r.history.empty() ? 0.0 : r.history.back().loss;
      out << "steps " << r.steps << " tokens " << r.tokens << " final_loss " << fixed(final_loss) << " checkpoint "
          << tr_out << "\n";
      return 0;
    }
    if (*eval) {
      DCTransformer<float> model = load_checkpoint(ev_ckpt);
      CodecFlags codec;
      const Geometry& geo = model.config().geometry;
      codec.block_size = geo.block_size;
      codec.quality = geo.quality;
      codec.clip = geo.clip;
      codec.ordering = to_string(model.config().ordering);
      const auto sequences = encode_all(ev_data.load(), codec);
      if (!(sequences.front().geometry == geo)) throw InputError("dataset image size does not match the checkpoint");
      out << to_json(eval_bpd(model, sequences, ev_chroma)).dump(2) << "\n";
      return 0;
    }
    if (*sample || *upsample || *colorize) {
      DCTransformer<float> model = load_checkpoint(sa_ckpt);
      const ModelConfig& mc = model.config();
      std::mt19937_64 rng(sa_seed);
      SampleOptions opts;
      opts.temperature = sa_temp;
      opts.max_chunks = sa_chunks;
      TupleSeq context{mc.geometry, mc.ordering, {}, false};
      if (*upsample) {
        require_ordering(mc.ordering, Ordering::Generation, "upsampling");
        context = upsample_condition(read_image(sa_input), mc.geometry);
        opts.min_rank = upsample_min_rank();
      } else if (*colorize) {
        require_ordering(mc.ordering, Ordering::Colorization, "colorization");
        context = colorize_condition(read_image(sa_input), mc.geometry);
        opts.min_rank = colorize_min_rank(mc.geometry.block_size);
      }
      write_sample(sample_continuation(model, context, rng, opts), sa_out, sa_sdct, out);
      return 0;
    }
    if (*gradcheck) {
      const GradCheckReport r = grad_check(tiny_config(), gc_seed);
      out << "checked " << r.checked << " max_rel_error " << std::scientific << r.max_rel_error << " worst "
          << r.worst_parameter << "\n";
      if (r.max_rel_error >= gc_tol) throw NumericError("gradient check exceeded tolerance");
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dctgen
