// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthesize test beds, compress fine-tuning deltas
// under a per-layer bit budget, sweep the rank relaxation, decompress and
// report storage/error figures as CSV.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "osd/compress.hpp"
#include "osd/record.hpp"
#include "osd/sweep.hpp"
#include "osd/synth.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kArgument = 2, kData = 3, kEvaluation = 4 };

struct Inputs {
  std::string manifest, pretrained, finetuned, delta, grad, importance;
};

struct Loaded {
  std::optional<osd::LayerSet> pretrained;
  osd::LayerSet delta;
  std::vector<osd::ImportanceMap> importance;  // empty: all-ones
};

void add_input_flags(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--manifest", in.manifest, "JSON manifest mapping roles to SDT1 containers");
  cmd->add_option("--pretrained", in.pretrained, "SDT1 container of pre-trained weights");
  cmd->add_option("--finetuned", in.finetuned, "SDT1 container of fine-tuned weights");
  cmd->add_option("--delta", in.delta, "SDT1 container of fine-tuning deltas");
  cmd->add_option("--grad", in.grad, "SDT1 container of loss gradients w.r.t. fine-tuned weights");
  cmd->add_option("--importance", in.importance, "SDT1 container of precomputed importance maps");
}

void fill_from_manifest(Inputs& in) {
  if (in.manifest.empty()) return;
  const auto m = osd::load_manifest(in.manifest);
  const auto fill = [&](std::string& slot, const char* role) {
    if (slot.empty() && m.has(role)) slot = m.path(role).string();
  };
  fill(in.pretrained, "pretrained");
  fill(in.finetuned, "finetuned");
  fill(in.delta, "delta");
  // Explicit --grad/--importance win; otherwise a stored importance map is
  // preferred over recomputing it from the gradient.
  if (in.grad.empty() && in.importance.empty()) {
    fill(in.importance, "importance");
    if (in.importance.empty()) fill(in.grad, "gradient");
  }
}

// Flag combinations are checked before anything is loaded.
void check_inputs(const Inputs& in, bool need_delta) {
  if (need_delta && in.delta.empty() && (in.pretrained.empty() || in.finetuned.empty()))
    throw osd::ArgumentError("need --delta, or both --pretrained and --finetuned");
  if (!in.grad.empty() && !in.importance.empty())
    throw osd::ArgumentError("--grad and --importance are mutually exclusive");
  if (!in.grad.empty() && in.finetuned.empty() && (in.pretrained.empty() || in.delta.empty()))
    throw osd::ArgumentError("--grad needs the fine-tuned weights (--finetuned, or --pretrained with --delta)");
}

void check_aligned(const osd::LayerSet& delta, const osd::LayerSet& scores, const char* what) {
  if (scores.ids() != delta.ids())
    throw osd::StructuralError(std::string(what) + " layers do not match the delta layers");
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (scores[i].matrix.rows() != delta[i].matrix.rows() || scores[i].matrix.cols() != delta[i].matrix.cols())
      throw osd::StructuralError(std::string(what) + " layer '" + delta[i].id + "' has the wrong shape");
}

Loaded load_inputs(const Inputs& in) {
  Loaded out;
  std::optional<osd::LayerSet> fine;
  if (!in.pretrained.empty()) out.pretrained = osd::load_layer_set(in.pretrained);
  if (!in.finetuned.empty()) fine = osd::load_layer_set(in.finetuned);
  if (!in.delta.empty()) {
    out.delta = osd::load_layer_set(in.delta);
  } else if (fine && out.pretrained) {
    out.delta = osd::delta(*fine, *out.pretrained);
  }

  if (!in.importance.empty()) {
    const auto scores = osd::load_layer_set(in.importance);
    check_aligned(out.delta, scores, "importance");
    for (const auto& layer : scores) {
      try {
        out.importance.emplace_back(layer.matrix);
      } catch (const osd::DataError& e) {
        throw osd::DataError("layer '" + layer.id + "': " + e.what());
      }
    }
  } else if (!in.grad.empty()) {
    if (!fine) fine = osd::add(*out.pretrained, out.delta);
    const auto grad = osd::load_layer_set(in.grad);
    check_aligned(out.delta, grad, "gradient");
    for (std::size_t i = 0; i < grad.size(); ++i)
      out.importance.push_back(osd::importance_from_gradient(grad[i].matrix, fine->at(grad[i].id).matrix));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvSink {
  explicit CsvSink(const std::string& path) {
    if (!path.empty()) {
      file.open(path, std::ios::trunc);
      if (!file) throw osd::ArgumentError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& out() { return file.is_open() ? static_cast<std::ostream&>(file) : std::cout; }
  std::ofstream file;
};

void print_stats(const osd::CompressedLayer& layer) {
  std::uint64_t entries_u = 0, entries_v = 0, k = layer.r;
  if (const auto* sp = std::get_if<osd::SparseFactorPair>(&layer.payload)) {
    entries_u = sp->entries_u.size();
    entries_v = sp->entries_v.size();
    k = sp->k;
  } else if (const auto* sm = std::get_if<osd::SparseMatrix>(&layer.payload)) {
    entries_u = sm->entries.size();
    k = 0;
  }
  std::cout << "layer " << layer.id << " method=" << osd::to_string(layer.method) << " n=" << layer.n
            << " d=" << layer.d << " r=" << layer.r << " c=" << layer.c << " k=" << k << " entries_u=" << entries_u
            << " entries_v=" << entries_v << " payload_bits=" << layer.payload_bits().total_bits()
            << " budget_bits=" << layer.budget_bits() << " overhead_bits=" << layer.overhead_bits() << "\n";
}

// Re-verifies the budget of every layer, then writes the model.
void write_model(const std::string& out, osd::CompressedModel& model, const Inputs& in) {
  for (const auto& layer : model.layers) {
    if (!layer.within_budget())
      throw osd::DataError("layer '" + layer.id + "' exceeds its budget; nothing written");
    print_stats(layer);
  }
  if (!in.pretrained.empty()) model.pretrained = fs::absolute(in.pretrained);
  osd::save_compressed_model(out, model);
}

struct Common {
  std::string method = "osd";
  std::uint32_t rank = 1;
  std::uint32_t c = 1;
  std::uint32_t max_c = 5;
  std::string hook_cmd, out, csv, model;
  unsigned threads = 1;
};

int run_compress(Inputs in, const Common& o) {
  fill_from_manifest(in);
  check_inputs(in, true);
  const osd::Method method = osd::parse_method(o.method);
  if (o.rank < 1) throw osd::ArgumentError("--rank must be >= 1");
  if (o.out.empty()) throw osd::ArgumentError("--out is required");
  const std::uint32_t c = (method == osd::Method::Mag || method == osd::Method::Osd) ? o.c : 0;

  const Loaded data = load_inputs(in);
  osd::CompressedModel model;
  model.method = method;
  model.r = o.rank;
  model.c = c;
  model.layers = osd::compress_layers(method, data.delta, data.importance, o.rank, c, o.threads);
  write_model(o.out, model, in);
  return kOk;
}

int run_decompress(Inputs in, const Common& o) {
  fill_from_manifest(in);
  if (o.model.empty() || o.out.empty()) throw osd::ArgumentError("--model and --out are required");
  const auto model = osd::load_compressed_model(o.model);
  const auto deltas = model.reconstruct_deltas();

  std::string pre_path = in.pretrained;
  if (pre_path.empty() && model.pretrained) pre_path = model.pretrained->string();
  if (pre_path.empty()) {
    std::cerr << "note: no pre-trained container; writing reconstructed deltas\n";
    osd::save_layer_set(o.out, deltas);
  } else {
    osd::save_layer_set(o.out, osd::add(osd::load_layer_set(pre_path), deltas));
  }
  return kOk;
}

int run_sweep(Inputs in, const Common& o) {
  fill_from_manifest(in);
  check_inputs(in, true);
  osd::SweepOptions opt;
  opt.method = osd::parse_method(o.method);
  opt.threads = o.threads;
  if (opt.method != osd::Method::Osd && opt.method != osd::Method::Mag)
    throw osd::ArgumentError("sweep needs a relaxed-rank method (osd or mag)");
  if (o.max_c < 1) throw osd::ArgumentError("--max-c must be >= 1");
  if (o.rank < 1) throw osd::ArgumentError("--rank must be >= 1");
  CsvSink csv(o.csv);

  const Loaded data = load_inputs(in);
  std::unique_ptr<osd::EvaluationHook> hook;
  if (o.hook_cmd.empty())
    hook = std::make_unique<osd::ProxyHook>(data.delta, data.importance);
  else
    hook = std::make_unique<osd::ExternalHook>(o.hook_cmd, data.pretrained);

  osd::SweepResult result;
  int code = kOk;
  try {
    result = osd::sweep_c(data.delta, data.importance, o.rank, o.max_c, *hook, opt);
  } catch (const osd::SweepFailed& e) {
    result = e.partial;
    code = kEvaluation;
  }

  auto& out = csv.out();
  out << "c,score,total_bits,header_bits,wall_ms\n";
  for (const auto& cand : result.per_c) {
    out << cand.c << ',';
    if (cand.ok)
      out << fmt_double(cand.score) << ',' << cand.payload_bits << ',' << cand.overhead_bits;
    else
      out << ",,";
    out << ',' << fmt_double(std::round(cand.wall_ms * 1000.0) / 1000.0) << '\n';
    if (!cand.ok) std::cerr << "c=" << cand.c << " failed: " << cand.error << "\n";
  }
  out.flush();
  if (code != kOk) {
    std::cerr << "error: no candidate succeeded\n";
    return code;
  }

  std::cerr << "c* = " << result.c_star << "\n";
  if (!o.out.empty()) {
    osd::CompressedModel model;
    model.method = opt.method;
    model.r = o.rank;
    model.c = result.c_star;
    model.layers = result.best().layers;
    write_model(o.out, model, in);
  }
  return kOk;
}

double fro_error(const osd::DenseMatrix& a, const osd::DenseMatrix& b) {
  return (a.cast<double>() - b.cast<double>()).norm();
}

int run_report(Inputs in, const Common& o) {
  fill_from_manifest(in);
  const bool have_inputs = !in.delta.empty() || (!in.pretrained.empty() && !in.finetuned.empty());
  if (o.model.empty() && !have_inputs)
    throw osd::ArgumentError("report needs --model, or delta inputs for an error-vs-c curve");
  if (have_inputs) check_inputs(in, true);
  CsvSink csv(o.csv);
  auto& out = csv.out();

  std::optional<Loaded> data;
  if (have_inputs) data = load_inputs(in);

  if (!o.model.empty()) {
    const auto model = osd::load_compressed_model(o.model);
    if (data && data->delta.ids() != [&] {
          std::vector<std::string> ids;
          for (const auto& l : model.layers) ids.push_back(l.id);
          return ids;
        }())
      throw osd::StructuralError("compressed model layers do not match the delta layers");
    out << "layer,method,n,d,r,c,payload_bits,value_bits,index_bits,budget_bits,overhead_bits,within_budget,"
           "fro_error,proxy_error\n";
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      const auto& layer = model.layers[i];
      const auto bits = layer.payload_bits();
      out << layer.id << ',' << osd::to_string(layer.method) << ',' << layer.n << ',' << layer.d << ','
          << layer.r << ',' << layer.c << ',' << bits.total_bits() << ',' << bits.value_bits << ','
          << bits.index_bits << ',' << layer.budget_bits() << ',' << layer.overhead_bits() << ','
          << (layer.within_budget() ? "yes" : "no") << ',';
      if (data) {
        const auto& dw = data->delta[i].matrix;
        const auto recon = layer.reconstruct();
        osd::LayerSet one_delta, one_recon;
        one_delta.add(layer.id, dw);
        one_recon.add(layer.id, recon);
        std::vector<osd::ImportanceMap> z;
        if (!data->importance.empty()) z.push_back(data->importance[i]);
        out << fmt_double(fro_error(dw, recon)) << ',' << fmt_double(osd::proxy_error(one_delta, one_recon, z));
      } else {
        out << ',';
      }
      out << '\n';
    }
    return kOk;
  }

  if (o.rank < 1 || o.max_c < 1) throw osd::ArgumentError("--rank and --max-c must be >= 1");
  out << "method,c,total_bits,budget_bits,fro_error,proxy_error\n";
  const auto row = [&](osd::Method method, std::uint32_t c) {
    const auto layers = osd::compress_layers(method, data->delta, data->importance, o.rank, c, o.threads);
    std::uint64_t bits = 0, budget = 0;
    double fro2 = 0.0;
    osd::LayerSet recon;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      bits += layers[i].payload_bits().total_bits();
      budget += layers[i].budget_bits();
      recon.add(layers[i].id, layers[i].reconstruct());
      const double e = fro_error(data->delta[i].matrix, recon[i].matrix);
      fro2 += e * e;
    }
    out << osd::to_string(method) << ',' << c << ',' << bits << ',' << budget << ',' << fmt_double(std::sqrt(fro2))
        << ',' << fmt_double(osd::proxy_error(data->delta, recon, data->importance)) << '\n';
  };
  row(osd::Method::TruncSvd, 0);
  row(osd::Method::SparseOnly, 0);
  for (auto method : {osd::Method::Mag, osd::Method::Osd})
    for (std::uint32_t c = 1; c <= o.max_c; ++c) {
      try {
        row(method, c);
      } catch (const osd::ArgumentError& e) {
        std::cerr << osd::to_string(method) << " c=" << c << " skipped: " << e.what() << "\n";
      }
    }
  return kOk;
}

int run_synth(const osd::SynthConfig& cfg, const std::string& out) {
  if (out.empty()) throw osd::ArgumentError("--out directory is required");
  const auto model = osd::synthesize(cfg);
  const fs::path dir = out;
  fs::create_directories(dir);
  osd::save_layer_set(dir / "pretrained.sdt", model.pretrained);
  osd::save_layer_set(dir / "finetuned.sdt", model.finetuned);
  osd::save_layer_set(dir / "delta.sdt", model.delta);
  osd::save_layer_set(dir / "gradient.sdt", model.gradient);
  osd::save_layer_set(dir / "importance.sdt", model.importance);
  osd::Manifest manifest;
  manifest.roles = {{"pretrained", "pretrained.sdt"},
                    {"finetuned", "finetuned.sdt"},
                    {"delta", "delta.sdt"},
                    {"gradient", "gradient.sdt"},
                    {"importance", "importance.sdt"}};
  osd::save_manifest(dir / "manifest.json", manifest);
  std::cout << "wrote " << cfg.layers << " layer(s) of " << cfg.rows << "x" << cfg.cols << " to " << dir.string()
            << "\n";
  return kOk;
}

int exit_code(const osd::Error& e) {
  switch (e.kind()) {
    case osd::Error::Kind::Argument: return kArgument;
    case osd::Error::Kind::Evaluation: return kEvaluation;
    default: return kData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted compression of fine-tuning deltas (truncated SVD, MagTruncSVD, OSD)"};
  app.require_subcommand(1);

  Inputs in;
  Common o;
  osd::SynthConfig synth;

  const auto add_method = [&](CLI::App* cmd) {
    cmd->add_option("--method", o.method, "truncsvd | mag | osd | sparse-only")->capture_default_str();
    cmd->add_option("--rank", o.rank, "reference rank r")->capture_default_str();
    cmd->add_option("--threads", o.threads, "worker threads for per-layer work")->capture_default_str();
  };

  auto* compress = app.add_subcommand("compress", "compress every layer at a fixed (r, c)");
  add_input_flags(compress, in);
  add_method(compress);
  compress->add_option("--c", o.c, "rank relaxation c (mag, osd)")->capture_default_str();
  compress->add_option("--out", o.out, "compressed model manifest to write");

  auto* decompress = app.add_subcommand("decompress", "rebuild fine-tuned weights from a compressed model");
  decompress->add_option("--model", o.model, "compressed model manifest");
  decompress->add_option("--pretrained", in.pretrained, "override the pre-trained container");
  decompress->add_option("--manifest", in.manifest, "input manifest (for the pretrained role)");
  decompress->add_option("--out", o.out, "SDT1 container to write");

  auto* sweep = app.add_subcommand("sweep", "try c = 1..C and keep the best-scoring candidate");
  add_input_flags(sweep, in);
  add_method(sweep);
  sweep->add_option("--max-c", o.max_c, "largest relaxation C")->capture_default_str();
  sweep->add_option("--hook-cmd", o.hook_cmd, "scoring command; {} is replaced by the candidate path");
  sweep->add_option("--csv", o.csv, "CSV of c,score,total_bits,header_bits,wall_ms (default stdout)");
  sweep->add_option("--out", o.out, "compressed model manifest for c*");

  auto* report = app.add_subcommand("report", "CSV of bits and errors for a model or an error-vs-c curve");
  add_input_flags(report, in);
  report->add_option("--model", o.model, "compressed model manifest");
  report->add_option("--rank", o.rank, "reference rank r")->capture_default_str();
  report->add_option("--max-c", o.max_c, "largest relaxation C")->capture_default_str();
  report->add_option("--threads", o.threads, "worker threads")->capture_default_str();
  report->add_option("--csv", o.csv, "output CSV (default stdout)");

  auto* synth_cmd = app.add_subcommand("synth", "write a planted low-rank + sparse test bed");
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--rows", synth.rows)->capture_default_str();
  synth_cmd->add_option("--cols", synth.cols)->capture_default_str();
  synth_cmd->add_option("--true-rank", synth.true_rank)->capture_default_str();
  synth_cmd->add_option("--spike-frac", synth.spike_fraction)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise_scale, "noise std relative to the low-rank RMS")->capture_default_str();
  synth_cmd->add_option("--layers", synth.layers)->capture_default_str();
  synth_cmd->add_option("--factor-density", synth.factor_density)->capture_default_str();
  synth_cmd->add_option("--decay", synth.decay, "geometric singular value decay")->capture_default_str();
  synth_cmd->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kArgument;
  }

  try {
    if (*compress) return run_compress(in, o);
    if (*decompress) return run_decompress(in, o);
    if (*sweep) return run_sweep(in, o);
    if (*report) return run_report(in, o);
    if (*synth_cmd) return run_synth(synth, o.out);
  } catch (const osd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kArgument;
}
