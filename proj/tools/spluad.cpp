// spluad: synth | train | eval | cluster | ablate | report
//
// Every failure prints one line "E_CODE: message" to stderr and exits 1.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "spluad/metrics/report.hpp"
#include "spluad/train/experiment.hpp"
#include "spluad/train/run_dir.hpp"

namespace fs = std::filesystem;
using namespace spluad;
using train::ExperimentConfig;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config.empty()) c = train::load_experiment_config(g.config);
  if (g.seed) c.train.seed = *g.seed;
  return c;
}

// Hash over the canonical config plus every external input file it names.
std::string input_hash(const ExperimentConfig& c) {
  std::uint64_t h = train::fnv1a_bytes(train::to_json(c).dump());
  if (!c.manifest.empty()) {
    const fs::path m = c.manifest;
    h = train::fnv1a_bytes(train::read_file_bytes(m), h);
    for (const auto& s : data::load_manifest(m)) h = fnv1a(s.image.data(), h);
  }
  if (!c.class_prompts.empty()) h = train::fnv1a_bytes(train::read_file_bytes(c.class_prompts), h);
  return train::hex64(h);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::io, "cannot write " + path.string());
  os << text;
}

// A run directory or a checkpoint file inside one.
fs::path run_dir_of(const fs::path& p) {
  if (fs::is_directory(p)) return p;
  require(fs::exists(p), ErrorCode::io, "checkpoint not found: " + p.string());
  return p.parent_path().empty() ? fs::path(".") : p.parent_path();
}

struct LoadedRun {
  ExperimentConfig config;
  train::ExperimentModel model;
};

LoadedRun load_run(const fs::path& path) {
  const fs::path dir = run_dir_of(path);
  const fs::path ckpt = fs::is_directory(path) ? dir / "checkpoint.ckpt" : path;
  ExperimentConfig c = train::load_experiment_config(dir / "config.json");
  if (fs::exists(dir / "class_prompts.json")) c.class_prompts = (dir / "class_prompts.json").string();
  const TensorMap tensors = read_checkpoint(ckpt);
  return {c, train::build_model(c, &tensors)};
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("SPLUAD_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    require(end != env && *end == '\0' && v > 0, ErrorCode::config, "SPLUAD_THREADS must be a positive integer");
    return v;
  }
  return 1;
}

void cmd_synth(const Globals& g) {
  ExperimentConfig c = load_config(g);
  if (g.seed) c.synth.seed = *g.seed;
  train::prepare_run_dir(g.out, g.force);
  const auto ds = data::generate(c.synth);
  data::write_corpus(g.out, ds);
  train::write_run_manifest(g.out, "synth", train::to_json(c), c.synth.seed, input_hash(c));
  const auto hist = data::label_histogram(ds);
  std::cout << "wrote " << ds.size() << " samples (" << hist[0] << " live, " << hist[1] << " physical, "
            << hist[2] << " digital) to " << (fs::path(g.out) / "manifest.csv").string() << '\n';
}

void write_eval_artifacts(const fs::path& dir, const std::vector<metrics::ScoreRecord>& scores,
                          const std::string& method) {
  metrics::write_scores_csv(dir / "scores.csv", scores);
  metrics::write_roc_csv(dir / "roc.csv", scores);
  const auto text = metrics::format_report(method, metrics::summarize(scores));
  write_text(dir / "report.txt", text);
  std::cout << text;
}

std::string method_name(const ExperimentConfig& c) {
  std::string m = "SPL-UAD";
  if (!c.train.scpg_on) m += " -SCPG";
  if (!c.train.caa_on) m += " -CAA";
  return m;
}

void cmd_train(const Globals& g, bool no_scpg, bool no_caa) {
  ExperimentConfig c = load_config(g);
  if (no_scpg) c.train.scpg_on = false;
  if (no_caa) c.train.caa_on = false;
  c.validate();
  const fs::path dir = g.out;
  const auto split = train::load_split(c);
  train::prepare_run_dir(dir, g.force);
  train::save_experiment_config(c, dir / "config.json");
  auto model = train::build_model(c);
  model.model->vocabulary().save(dir / "vocab.txt");
  write_text(dir / "class_prompts.json", clip::class_prompts_to_json(model.model->class_prompts()).dump(2) + "\n");

  std::ofstream log(dir / "train_log.tsv");
  if (!log) fail(ErrorCode::io, "cannot write " + (dir / "train_log.tsv").string());
  const auto result = train::run_training(*model.model, c.train, split.train, split.eval, &log);
  require(result.backbone_checksum_before == result.backbone_checksum_after, ErrorCode::internal,
          "backbone changed during training");
  write_checkpoint(dir / "checkpoint.ckpt", train::model_tensors(model));
  if (!result.scores.empty()) write_eval_artifacts(dir, result.scores, method_name(c));
  train::write_run_manifest(dir, "train", train::to_json(c), c.train.seed, input_hash(c));
  std::cout << "run directory: " << dir.string() << '\n';
}

void cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& manifest) {
  require(!checkpoint.empty(), ErrorCode::config, "eval needs --checkpoint");
  auto run = load_run(checkpoint);
  data::Dataset ds;
  if (!manifest.empty())
    ds = data::load_manifest(manifest, run.config.encoder.image_size);
  else
    ds = train::load_split(run.config).eval;
  const auto scores = train::evaluate(*run.model.model, ds);
  if (g.out.empty()) {
    std::cout << metrics::format_report(method_name(run.config), metrics::summarize(scores));
    return;
  }
  train::prepare_run_dir(g.out, g.force);
  write_eval_artifacts(g.out, scores, method_name(run.config));
  ExperimentConfig snapshot = run.config;
  if (!manifest.empty()) snapshot.manifest = manifest;
  train::write_run_manifest(g.out, "eval", train::to_json(snapshot), run.config.train.seed, input_hash(snapshot));
}

void cmd_cluster(const Globals& g, const std::string& checkpoint) {
  std::string text;
  if (!checkpoint.empty()) {
    auto run = load_run(checkpoint);
    text = prompt::context_report(run.model.model->bank(), run.model.model->descriptions());
  } else {
    auto m = train::build_model(load_config(g));
    text = prompt::context_report(m.model->bank(), m.model->descriptions());
  }
  std::cout << text;
  if (!g.out.empty()) {
    train::prepare_run_dir(g.out, g.force);
    write_text(fs::path(g.out) / "context.txt", text);
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      require(used == tok.size(), ErrorCode::config, "bad seed '" + tok + "'");
    } catch (const std::logic_error&) {
      fail(ErrorCode::config, "bad seed '" + tok + "'");
    }
  }
  require(!out.empty(), ErrorCode::config, "--seeds needs at least one seed");
  return out;
}

void cmd_ablate(const Globals& g, const std::string& seeds_arg) {
  const ExperimentConfig base = load_config(g);
  const auto seeds = parse_seeds(seeds_arg);
  const auto split = train::load_split(base);
  const fs::path dir = g.out;
  train::prepare_run_dir(dir, g.force);
  train::save_experiment_config(base, dir / "config.json");

  // Cells in fixed order; workers pull indices, results land in their slot.
  auto cells = train::ablation_grid(seeds);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      try {
        train::run_ablation_cell(base, split, cells[i]);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(thread_cap(), cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);

  std::ostringstream csv;
  csv << "scpg,caa,seed,acc,auc,eer,acer\n";
  char buf[160];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%d,%d,%llu,%.17g,%.17g,%.17g,%.17g\n", c.scpg, c.caa,
                  static_cast<unsigned long long>(c.seed), c.summary.acc, c.summary.auc, c.summary.eer,
                  c.summary.acer);
    csv << buf;
  }
  write_text(dir / "cells.csv", csv.str());
  const auto table = metrics::format_ablation(cells);
  write_text(dir / "ablation.txt", table);
  auto snapshot = train::to_json(base);
  snapshot["seeds"] = seeds;
  train::write_run_manifest(dir, "ablate", snapshot, base.train.seed, input_hash(base));
  std::cout << table;
}

void cmd_report(const Globals& g, const std::vector<std::string>& score_files, const std::string& method,
                const std::vector<double>& rates) {
  if (!rates.empty()) {
    require(rates.size() == 4, ErrorCode::config, "--rates takes ACC AUC EER ACER");
    std::cout << metrics::format_table({{method, rates[0], rates[1], rates[2], rates[3]}});
    return;
  }
  require(!score_files.empty(), ErrorCode::config, "report needs --scores or --rates");
  const auto first = metrics::read_scores_csv(score_files[0]);
  const auto summary = metrics::summarize(first);
  std::vector<metrics::ReportRow> comparisons;
  for (std::size_t i = 1; i < score_files.size(); ++i)
    comparisons.push_back(
        metrics::row_from(fs::path(score_files[i]).stem().string(), metrics::summarize(metrics::read_scores_csv(score_files[i]))));
  const auto text = metrics::format_report(method, summary, comparisons);
  std::cout << text;
  if (!g.out.empty()) {
    train::prepare_run_dir(g.out, g.force);
    write_text(fs::path(g.out) / "report.txt", text);
    metrics::write_roc_csv(fs::path(g.out) / "roc.csv", first);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPL-UAD prompt learning for unified attack detection"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "run seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "overwrite an existing output directory");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  auto* trn = app.add_subcommand("train", "train prompts and context projections");
  bool no_scpg = false, no_caa = false;
  trn->add_flag("--no-scpg", no_scpg, "disable spoof-aware context (K = 0)");
  trn->add_flag("--no-caa", no_caa, "disable cues-awareness augmentation");
  auto* ev = app.add_subcommand("eval", "score a manifest with a trained run");
  std::string checkpoint, manifest;
  ev->add_option("--checkpoint", checkpoint, "run directory or checkpoint file")->required();
  ev->add_option("--manifest", manifest, "CSV manifest (default: the run's eval split)");
  auto* cl = app.add_subcommand("cluster", "print the context clustering report");
  cl->add_option("--checkpoint", checkpoint, "run directory or checkpoint file (default: fresh build)");
  auto* abl = app.add_subcommand("ablate", "SCPG x CAA grid over seeds");
  std::string seeds = "1,2,3,4,5";
  abl->add_option("--seeds", seeds, "comma-separated seeds");
  auto* rep = app.add_subcommand("report", "format metrics tables");
  std::vector<std::string> score_files;
  std::string method = "SPL-UAD";
  std::vector<double> rates;
  rep->add_option("--scores", score_files, "score CSV files; the first is the reported model");
  rep->add_option("--method", method, "method name for the first row");
  rep->add_option("--rates", rates, "format ACC AUC EER ACER fractions directly")->expected(4);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "E_USAGE: " << msg << '\n';
    return 2;
  }

  try {
    if (*synth) cmd_synth(g);
    if (*trn) cmd_train(g, no_scpg, no_caa);
    if (*ev) cmd_eval(g, checkpoint, manifest);
    if (*cl) cmd_cluster(g, checkpoint);
    if (*abl) cmd_ablate(g, seeds);
    if (*rep) cmd_report(g, score_files, method, rates);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << error_code_name(e.code()) << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "E_INTERNAL: " << msg << '\n';
    return 1;
  }
  return 0;
}
