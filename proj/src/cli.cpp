/**
 * @file cli.cpp
 * @brief Subcommand wiring for the muspike tool.
 */
#include "muspike/cli.h"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "muspike/error.h"
#include "muspike/metrics.h"
#include "muspike/midi.h"
#include "muspike/server.h"
#include "muspike/srnn.h"
#include "muspike/stats.h"
#include "muspike/study.h"
#include "muspike/tokenizer.h"

namespace muspike::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  const std::string s = read_text(p);
  return {s.begin(), s.end()};
}

void write_text(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_bytes(const fs::path& p, std::span<const std::uint8_t> b) {
  write_text(p, std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

/// Every .mid/.midi under `dir`, sorted.
std::vector<fs::path> midi_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".mid" || ext == ".midi") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Score load_midi(const fs::path& p) { return parse_midi(read_bytes(p)); }

std::vector<int> parse_int_list(const std::string& s, std::size_t n, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size() || out.back() < 0) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated non-negative integers");
    }
  }
  if (out.size() != n) throw CLI::ValidationError(flag, "expected " + std::to_string(n) + " comma-separated integers");
  return out;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// dataset/source from `<root>/<dataset>/<source>/.../file`.
std::pair<std::string, std::string> labels_for(const fs::path& root, const fs::path& file) {
  const fs::path rel = fs::relative(file, root);
  std::vector<std::string> parts;
  for (const auto& p : rel.parent_path()) parts.push_back(p.string());
  if (parts.size() >= 2) return {parts[0], parts[1]};
  if (parts.size() == 1) return {parts[0], ""};
  return {root.filename().string(), ""};
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

std::vector<std::vector<CompoundToken>> tokenize_dir(const fs::path& dir, int resolution, std::ostream& err,
                                                     std::vector<fs::path>* used = nullptr) {
  std::vector<std::vector<CompoundToken>> seqs;
  for (const auto& f : midi_files(dir)) {
    try {
      const auto q = quantize(load_midi(f), resolution);
      if (q.empty()) {
        err << "skip " << f.string() << ": no notes\n";
        continue;
      }
      seqs.push_back(encode(q));
      if (used) used->push_back(f);
    } catch (const Error& e) {
      err << "skip " << f.string() << ": " << e.name() << "\n";
    }
  }
  if (seqs.empty()) throw Error(ErrorCode::EmptyCorpus, "no usable MIDI files under " + dir.string());
  return seqs;
}

std::array<int, study::kNumGroups> to_array3(const std::vector<int>& v) { return {v[0], v[1], v[2]}; }

api::HttpServer* g_serving = nullptr;

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking-network music benchmark and listening-study toolkit", "muspike"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  std::function<void()> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse and validate a MIDI corpus");
  std::string ingest_dir;
  ingest->add_option("dir", ingest_dir, "Corpus directory")->required();
  ingest->callback([&] {
    action = [&] {
      int ok = 0, bad = 0;
      std::optional<ErrorCode> first;
      for (const auto& f : midi_files(ingest_dir)) {
        try {
          const Score s = load_midi(f);
          out << "ok\t" << f.string() << "\tnotes=" << s.notes.size() << "\tseconds=" << s.end_time() << "\n";
          ++ok;
        } catch (const Error& e) {
          out << "fail\t" << f.string() << "\t" << e.name() << "\n";
          ++bad;
          if (!first) first = e.code();
        }
      }
      err << ok << " parsed, " << bad << " failed\n";
      if (bad) throw Error(*first, std::to_string(bad) + " file(s) failed to parse");
    };
  });

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Encode a MIDI corpus as compound tokens");
  std::string tok_dir, tok_vocab, tok_out;
  int tok_res = 4;
  tok->add_option("dir", tok_dir, "Corpus directory")->required();
  tok->add_option("--vocab", tok_vocab, "Vocabulary output file")->required();
  tok->add_option("--out", tok_out, "Directory for per-file token dumps");
  tok->add_option("--resolution", tok_res, "Grid cells per beat")->check(CLI::IsMember({1, 2, 4, 8, 12, 16}));
  tok->callback([&] {
    action = [&] {
      std::vector<fs::path> files;
      const auto seqs = tokenize_dir(tok_dir, tok_res, err, &files);
      const Vocab vocab = build_vocab_from_tokens(seqs, tok_res);
      write_text(tok_vocab, vocab.serialize());
      std::size_t total = 0;
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        total += seqs[i].size();
        if (!tok_out.empty()) {
          fs::path rel = fs::relative(files[i], tok_dir);
          rel.replace_extension(".tokens");
          write_text(fs::path(tok_out) / rel, write_token_dump(seqs[i], vocab));
        }
      }
      out << seqs.size() << " files, " << total << " tokens\n";
    };
  });

  // train-toy
  auto* train = app.add_subcommand("train-toy", "Train the toy spiking RNN on a MIDI corpus");
  std::string tr_corpus, tr_out;
  int tr_epochs = 100, tr_res = 4, tr_hidden = 256, tr_enc = 256, tr_window = 32;
  std::uint64_t tr_seed = 0;
  double tr_lr = 0.05;
  train->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  train->add_option("--epochs", tr_epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tr_seed, "Initialization seed");
  train->add_option("--out", tr_out, "Checkpoint output")->required();
  train->add_option("--hidden", tr_hidden, "Hidden LIF units")->check(CLI::PositiveNumber);
  train->add_option("--enc", tr_enc, "Spike encoder width")->check(CLI::PositiveNumber);
  train->add_option("--lr", tr_lr, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--bptt", tr_window, "Truncated BPTT window")->check(CLI::PositiveNumber);
  train->add_option("--resolution", tr_res, "Grid cells per beat")->check(CLI::IsMember({1, 2, 4, 8, 12, 16}));
  train->callback([&] {
    action = [&] {
      const auto seqs = tokenize_dir(tr_corpus, tr_res, err);
      ToySRNNConfig cfg;
      cfg.hidden = tr_hidden;
      cfg.enc_dim = tr_enc;
      cfg.learning_rate = tr_lr;
      cfg.bptt_window = tr_window;
      cfg.seed = tr_seed;
      const ToySRNN model(cfg, build_vocab_from_tokens(seqs, tr_res));
      const auto res = train_toy(model, seqs, tr_epochs);
      for (std::size_t e = 0; e < res.loss_curve.size(); ++e) err << "epoch " << e << " loss " << res.loss_curve[e] << "\n";
      write_bytes(tr_out, save_checkpoint(res.model));
      out << "loss " << res.loss_curve.front() << " -> " << *std::min_element(res.loss_curve.begin(), res.loss_curve.end())
          << ", accuracy " << res.accuracy.overall << "\n";
    };
  });

  // generate
  auto* gen = app.add_subcommand("generate", "Sample a piece from a trained checkpoint");
  std::string gen_model, gen_out, gen_tokens;
  int gen_len = 64;
  std::uint64_t gen_seed = 0;
  double gen_temp = 1.0;
  gen->add_option("--model", gen_model, "Checkpoint")->required();
  gen->add_option("--length", gen_len, "New tokens to sample")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--temperature", gen_temp, "Softmax temperature")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "MIDI output")->required();
  gen->add_option("--tokens", gen_tokens, "Also write the token dump here");
  gen->callback([&] {
    action = [&] {
      const ToySRNN model = load_checkpoint(read_bytes(gen_model));
      const Vocab& v = model.vocab();
      auto first = [&](Field f) { return v.values(f).empty() ? kNone : v.values(f).front(); };
      const std::vector<CompoundToken> prompt{CompoundToken::metric(first(Field::Tempo), first(Field::Chord), 0)};
      const auto seq = generate(model, prompt, {gen_len, gen_temp, gen_seed});
      write_bytes(gen_out, write_midi(decode(seq, v)));
      if (!gen_tokens.empty()) write_text(gen_tokens, write_token_dump(seq, v));
      out << seq.size() << " tokens\n";
    };
  });

  // eval-objective
  auto* ev = app.add_subcommand("eval-objective", "Objective metric battery over a MIDI directory");
  std::string ev_dir, ev_chords, ev_out, ev_dataset, ev_source;
  int ev_res = 4, ev_threads = 0;
  ev->add_option("dir", ev_dir, "Directory laid out as <dataset>/<source>/*.mid")->required();
  ev->add_option("--chords", ev_chords, "Chord sidecar directory mirroring <dir> (.chords files)");
  ev->add_option("--out", ev_out, "Report CSV")->required();
  ev->add_option("--dataset", ev_dataset, "Dataset label for every file");
  ev->add_option("--source", ev_source, "Source label for every file");
  ev->add_option("--resolution", ev_res, "Grid cells per beat")->check(CLI::IsMember({1, 2, 4, 8, 12, 16}));
  ev->add_option("--threads", ev_threads, "Worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  ev->callback([&] {
    action = [&] {
      const auto files = midi_files(ev_dir);
      std::vector<LabeledReport> reports(files.size());
      std::vector<std::string> failures(files.size());
      std::atomic<std::size_t> next{0};
      auto work = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
          auto [ds, src] = labels_for(ev_dir, files[i]);
          LabeledReport& r = reports[i];
          r.piece = fs::relative(files[i], ev_dir).string();
          r.dataset = ev_dataset.empty() ? ds : ev_dataset;
          r.source = ev_source.empty() ? src : ev_source;
          try {
            Score s = load_midi(files[i]);
            if (!ev_chords.empty()) {
              fs::path side = fs::path(ev_chords) / fs::relative(files[i], ev_dir);
              side.replace_extension(".chords");
              if (fs::exists(side)) s.chord_annotations = parse_chord_sidecar(read_text(side));
              s.normalize();
            }
            r.report = evaluate_all(s, {.resolution = ev_res});
          } catch (const Error& e) {
            failures[i] = std::string(e.name());
          }
        }
      };
      unsigned n = ev_threads > 0 ? static_cast<unsigned>(ev_threads) : std::max(1u, std::thread::hardware_concurrency());
      n = std::min<unsigned>(n, std::max<std::size_t>(1, files.size()));
      std::vector<std::thread> pool;
      for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
      work();
      for (auto& t : pool) t.join();
      std::vector<LabeledReport> ok;
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (failures[i].empty()) {
          ok.push_back(std::move(reports[i]));
        } else {
          err << "skip " << files[i].string() << ": " << failures[i] << "\n";
        }
      }
      write_text(ev_out, write_report_csv(ok));
      err << ok.size() << " evaluated, " << (files.size() - ok.size()) << " skipped\n";
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "Grouped metric tables and NLTM heatmaps from a report CSV");
  std::string rep_in, rep_out = ".";
  bool rep_aggregate = false, rep_heatmaps = false;
  rep->add_option("--report", rep_in, "Per-piece report CSV from eval-objective")->required();
  rep->add_option("--out", rep_out, "Output directory");
  rep->add_flag("--aggregate", rep_aggregate, "Write pitch/rhythm/harmony tables");
  rep->add_flag("--heatmaps", rep_heatmaps, "Write one NLTM heatmap per (dataset, source)");
  rep->callback([&] {
    action = [&] {
      if (!rep_aggregate && !rep_heatmaps) throw CLI::ValidationError("--aggregate/--heatmaps", "choose at least one");
      const auto reports = read_report_csv(read_text(rep_in));
      if (rep_aggregate) {
        const auto table = aggregate(reports);
        for (MetricGroup g : {MetricGroup::Pitch, MetricGroup::Rhythm, MetricGroup::Harmony}) {
          const fs::path p = fs::path(rep_out) / (std::string(group_name(g)) + ".csv");
          write_text(p, write_aggregate_csv(table, g));
          out << p.string() << "\n";
        }
      }
      if (rep_heatmaps) {
        std::vector<std::pair<std::string, std::string>> keys;
        for (const auto& r : reports) {
          const std::pair<std::string, std::string> k{r.dataset, r.source};
          if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
        }
        for (const auto& [ds, src] : keys) {
          std::vector<LabeledReport> sel;
          for (const auto& r : reports) {
            if (r.dataset == ds && r.source == src) sel.push_back(r);
          }
          const auto m = mean_nltm(sel);
          const std::string stem = "nltm_" + safe_name(ds) + "_" + safe_name(src);
          write_text(fs::path(rep_out) / (stem + ".pgm"), nltm_pgm(m));
          write_text(fs::path(rep_out) / (stem + ".csv"), nltm_csv(m));
          out << (fs::path(rep_out) / (stem + ".pgm")).string() << "\n";
        }
      }
    };
  });

  // study
  auto* st = app.add_subcommand("study", "Listening-study administration");
  st->require_subcommand(1);

  auto* st_init = st->add_subcommand("init", "Curate a catalog and create a study directory");
  std::string init_dir, init_catalog, init_cohort = "48,15,13", init_quota = "24,16,4,4";
  bool init_synthetic = false;
  std::uint64_t init_seed = 1;
  int init_rate = 22050, init_lease = 30;
  st_init->add_option("--dir", init_dir, "Study directory")->required();
  st_init->add_option("--catalog", init_catalog, "Catalog laid out as <dataset>/<source>/*.mid");
  st_init->add_flag("--synthetic", init_synthetic, "Use a generated catalog instead");
  st_init->add_option("--seed", init_seed, "Selection and presentation seed");
  st_init->add_option("--sample-rate", init_rate, "Pre-rendered audio rate (0 = render on demand)")
      ->check(CLI::IsMember({0, 22050, 44100}));
  st_init->add_option("--cohort", init_cohort, "Expected participants N,A,E");
  st_init->add_option("--quota", init_quota, "Minimum ratings total,N,A,E");
  st_init->add_option("--lease-minutes", init_lease, "Assignment lease")->check(CLI::PositiveNumber);
  st_init->callback([&] {
    action = [&] {
      if (init_catalog.empty() == !init_synthetic) {
        throw CLI::ValidationError("--catalog/--synthetic", "give exactly one");
      }
      study::StudyConfig cfg;
      const auto q = parse_int_list(init_quota, 4, "--quota");
      cfg.quota = {q[0], {q[1], q[2], q[3]}};
      cfg.cohort = to_array3(parse_int_list(init_cohort, 3, "--cohort"));
      cfg.lease_seconds = static_cast<std::int64_t>(init_lease) * 60;
      cfg.seed = init_seed;
      std::vector<study::CatalogEntry> catalog;
      if (init_synthetic) {
        catalog = study::synthetic_catalog(init_seed);
      } else {
        for (const auto& f : midi_files(init_catalog)) {
          auto [ds, src] = labels_for(init_catalog, f);
          try {
            catalog.push_back({f.string(), ds, src, load_midi(f)});
          } catch (const Error& e) {
            err << "skip " << f.string() << ": " << e.name() << "\n";
          }
        }
      }
      const auto pieces = study::curate(catalog, {.seed = init_seed});
      err << "rendering " << pieces.size() << " pieces\n";
      study::Study::create(init_dir, pieces, cfg, init_rate);
      api::load_or_create_admin_key(init_dir);
      out << pieces.size() << " pieces in " << init_dir << "; admin key in "
          << (fs::path(init_dir) / "admin.key").string() << "\n";
    };
  });

  auto* st_serve = st->add_subcommand("serve", "Serve a study over HTTP");
  std::string serve_addr = env_or("MUSPIKE_ADDR", "127.0.0.1:8080");
  std::string serve_dir = env_or("MUSPIKE_STUDY", "");
  st_serve->add_option("--addr", serve_addr, "Bind address host:port (env MUSPIKE_ADDR)");
  st_serve->add_option("--dir", serve_dir, "Study directory (env MUSPIKE_STUDY)");
  st_serve->callback([&] {
    action = [&] {
      if (serve_dir.empty()) throw CLI::ValidationError("--dir", "study directory required (or MUSPIKE_STUDY)");
      const auto [host, port] = api::parse_address(serve_addr);
      auto s = study::Study::open(serve_dir);
      api::Service service(*s, api::load_or_create_admin_key(serve_dir));
      api::HttpServer http(service);
      g_serving = &http;
      auto on_signal = [](int) {
        if (g_serving) std::thread([] { g_serving->stop(); }).detach();
      };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      err << "serving " << serve_dir << " on " << host << ":" << port << "\n";
      const bool ok = http.listen(host, port);
      g_serving = nullptr;
      s->snapshot();
      if (!ok) throw Error(ErrorCode::IoError, "cannot bind " + serve_addr);
    };
  });

  auto* st_sim = st->add_subcommand("simulate", "Run scripted participants to completion");
  std::string sim_participants = "48,15,13", sim_dir, sim_catalog, sim_quota = "24,16,4,4";
  std::uint64_t sim_seed = 1;
  double sim_crash = -1.0, sim_abandon = 0.01;
  st_sim->add_option("--participants", sim_participants, "Cohort N,A,E");
  st_sim->add_option("--dir", sim_dir, "Study directory (kept); default is a temporary one");
  st_sim->add_option("--seed", sim_seed, "Seed for curation and behaviour");
  st_sim->add_option("--quota", sim_quota, "Minimum ratings total,N,A,E");
  st_sim->add_option("--crash-at", sim_crash, "Kill and restart after this fraction of responses")
      ->check(CLI::Range(0.0, 1.0));
  st_sim->add_option("--abandon-rate", sim_abandon, "Chance of walking away from an assignment")
      ->check(CLI::Range(0.0, 0.5));
  st_sim->callback([&] {
    action = [&] {
      const auto cohort = to_array3(parse_int_list(sim_participants, 3, "--participants"));
      const auto q = parse_int_list(sim_quota, 4, "--quota");
      fs::path dir = sim_dir;
      const bool temp = dir.empty();
      if (temp) dir = fs::temp_directory_path() / ("muspike_sim_" + api::random_token().substr(0, 12));
      study::StudyConfig cfg;
      cfg.quota = {q[0], {q[1], q[2], q[3]}};
      cfg.cohort = cohort;
      cfg.seed = sim_seed;
      cfg.sync_writes = false;
      const auto pieces = study::curate(study::synthetic_catalog(sim_seed), {.seed = sim_seed});
      study::Study::create(dir, pieces, cfg, 0);
      study::SimulationOptions o;
      o.cohort = cohort;
      o.seed = sim_seed;
      o.crash_at = sim_crash;
      o.abandon_rate = sim_abandon;
      const auto report = study::simulate(dir, o);
      out << "pieces: " << pieces.size() << "\n" << report.text();
      if (temp) fs::remove_all(dir);
      if (!report.quotas_met || !report.replay_matches) {
        throw Error(ErrorCode::InsufficientData, "simulation did not meet every quota");
      }
    };
  });

  auto* st_export = st->add_subcommand("export", "Write the response table");
  std::string exp_dir, exp_out;
  st_export->add_option("--dir", exp_dir, "Study directory")->required();
  st_export->add_option("--out", exp_out, "CSV output (default stdout)");
  st_export->callback([&] {
    action = [&] {
      auto s = study::Study::open(exp_dir);
      const auto csv = write_responses_csv(s->export_rows());
      if (exp_out.empty()) {
        out << csv;
      } else {
        write_text(exp_out, csv);
      }
    };
  });

  // analyze
  auto* an = app.add_subcommand("analyze", "Descriptives, ANOVA, Tukey HSD and Turing accuracy");
  std::string an_in, an_out;
  bool an_per = false;
  double an_alpha = 0.05;
  an->add_option("--responses", an_in, "Response export CSV")->required();
  an->add_option("--out", an_out, "Output directory (default: tables to stdout)");
  an->add_flag("--per-participant", an_per, "Average per participant before testing");
  an->add_option("--alpha", an_alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  an->callback([&] {
    action = [&] {
      const auto rows = read_responses_csv(read_text(an_in));
      const auto a = analyze(rows, {an_alpha, an_per});
      const std::pair<const char*, std::string> tables[] = {{"descriptives", write_descriptives_csv(a.descriptives)},
                                                            {"anova", write_anova_csv(a.anova)},
                                                            {"tukey", write_tukey_csv(a.tukey)},
                                                            {"turing", write_turing_csv(a.turing)}};
      for (const auto& [name, text] : tables) {
        if (an_out.empty()) {
          out << "# " << name << "\n" << text << "\n";
        } else {
          write_text(fs::path(an_out) / (std::string(name) + ".csv"), text);
        }
      }
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: IoError: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace muspike::cli
