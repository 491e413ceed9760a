#include "gazemine/cli.hpp"

#include <csignal>
#include <sstream>

#include <CLI11.hpp>

#include "gazemine/app.hpp"
#include "gazemine/server.hpp"
#include "gazemine/synthetic.hpp"

namespace gazemine {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string run_id;
  std::optional<std::uint64_t> seed;
  std::string provider;
  std::string store;
};

struct StageFlags {
  // generate
  std::string out_dir;
  std::size_t experts = 10, students = 9;
  double missing_rate = 0.0, noise_rate = 0.0, irrelevant_rate = 0.0;
  // ingest
  std::string input, aois;
  // mine
  std::optional<int> runs;
  // kappa
  std::string verdicts;
  bool simulate = false;
  double agreement = 0.85;
  // detect
  std::optional<double> k;
  std::optional<int> epochs, hidden, window, stride;
  // predict-difficulty
  std::string questions;
  std::optional<int> repetitions;
  // serve
  std::string host, ui_dir;
  std::optional<int> port;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

AppConfig resolve_config(const Globals& g, const RunStore* store, const std::string& run_id) {
  AppConfig cfg;
  if (!g.config.empty()) {
    cfg = load_config(fs::path(g.config));
  } else if (store && store->exists(run_id)) {
    cfg = AppConfig::from_json(store->load_manifest(run_id).config);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.provider.empty()) cfg.provider = g.provider;
  if (!g.store.empty()) cfg.store = g.store;
  return cfg;
}

std::string count_line(const std::map<std::string, std::size_t>& m) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : m) {
    os << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return os.str();
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Eye-tracking pattern mining and review pipeline", "gazemine"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  StageFlags f;
  app.add_option("--config", g.config, "Config file (JSON)");
  app.add_option("--run-id", g.run_id, "Run directory under the store (default: new for ingest, latest otherwise)");
  app.add_option("--seed", g.seed, "Seed for every stochastic step");
  app.add_option("--provider", g.provider, "Force every model onto this provider (mock or http)")
      ->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--store", g.store, "Run store directory");

  auto* generate = app.add_subcommand("generate", "Write a synthetic gaze export, AOI file and manifest");
  generate->add_option("--out", f.out_dir, "Output directory")->required();
  generate->add_option("--experts", f.experts, "Number of experts");
  generate->add_option("--students", f.students, "Number of students");
  generate->add_option("--missing-rate", f.missing_rate, "Fraction of rows with a blank fixation duration");
  generate->add_option("--noise-rate", f.noise_rate, "Fraction of rows with a 5 ms fixation");
  generate->add_option("--irrelevant-rate", f.irrelevant_rate, "Fraction of rows for unknown questions");

  auto* ingest = app.add_subcommand("ingest", "Parse, clean and AOI-annotate a gaze export");
  ingest->add_option("--input", f.input, "Gaze export (.csv or .tsv)");
  ingest->add_option("--aois", f.aois, "AOI definitions (JSON)");

  auto* segment = app.add_subcommand("segment", "Write horizontal, vertical and raw payloads");
  auto* mine = app.add_subcommand("mine", "Run the pattern-mining grid");
  mine->add_option("--runs", f.runs, "Repetitions per cell")->check(CLI::PositiveNumber);
  auto* score = app.add_subcommand("score", "Collect literature evidence and score composite patterns");

  auto* kappa = app.add_subcommand("kappa", "Expert vs literature agreement");
  kappa->add_option("--verdicts", f.verdicts, "Expert verdicts to import (.jsonl)");
  kappa->add_flag("--simulate-expert", f.simulate, "Generate seeded expert verdicts");
  kappa->add_option("--agreement", f.agreement, "Agreement rate of the simulated expert")->check(CLI::Range(0.0, 1.0));

  auto* detect = app.add_subcommand("detect", "Train the autoencoder on experts and flag student windows");
  detect->add_option("--k", f.k, "Threshold width in standard deviations")->check(CLI::NonNegativeNumber);
  detect->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  detect->add_option("--hidden", f.hidden, "LSTM hidden size")->check(CLI::PositiveNumber);
  detect->add_option("--window", f.window, "Window length")->check(CLI::PositiveNumber);
  detect->add_option("--stride", f.stride, "Window stride")->check(CLI::PositiveNumber);

  auto* predict = app.add_subcommand("predict-difficulty", "Question difficulty prediction grid");
  predict->add_option("--questions", f.questions, "Questions file (JSON)");
  predict->add_option("--repetitions", f.repetitions, "Repetitions per cell")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Render report tables and the run summary");

  auto* serve = app.add_subcommand("serve", "Serve the review API and UI bundle");
  serve->add_option("--host", f.host, "Bind address");
  serve->add_option("--port", f.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--ui-dir", f.ui_dir, "Review UI bundle directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (generate->parsed()) {
      AppConfig cfg = resolve_config(g, nullptr, {});
      SyntheticConfig sc;
      sc.seed = cfg.seed;
      sc.experts = f.experts;
      sc.students = f.students;
      sc.missing_rate = f.missing_rate;
      sc.noise_rate = f.noise_rate;
      sc.irrelevant_rate = f.irrelevant_rate;
      const SyntheticDataset ds = generate_gaze_dataset(sc);
      const fs::path dir(f.out_dir);
      write_text_file(dir / "gaze.csv", ds.csv);
      write_text_file(dir / "aois.json", canonical_dump(aoi_definitions_to_json(ds.aois)) + "\n");
      json participants = json::object();
      for (const auto& [p, e] : ds.manifest.expertise) participants[p] = to_string(e);
      write_text_file(dir / "manifest.json", canonical_dump(json{{"seed", sc.seed},
                                                                 {"rows", ds.manifest.rows},
                                                                 {"participants", participants},
                                                                 {"missing_rows", ds.manifest.missing_rows},
                                                                 {"noise_rows", ds.manifest.noise_rows},
                                                                 {"irrelevant_rows", ds.manifest.irrelevant_rows}}) +
                                                 "\n");
      out << "wrote " << (dir / "gaze.csv").string() << " (" << ds.manifest.rows << " rows)\n";
      return kExitOk;
    }

    // The store comes from flags or the config file before a run is chosen.
    AppConfig base = resolve_config(g, nullptr, {});
    RunStore store(base.store);
    std::string run_id = g.run_id;
    if (run_id.empty()) {
      if (ingest->parsed()) {
        run_id = make_run_id(base.seed);
      } else if (serve->parsed()) {
        run_id = {};
      } else {
        const auto latest = store.latest();
        if (!latest)
          throw Error(ErrorKind::precondition,
                      "no runs in " + store.root().string() + " (missing manifest.json; run `ingest` first)");
        run_id = *latest;
      }
    } else if (!ingest->parsed() && !serve->parsed() && !store.exists(run_id)) {
      throw Error(ErrorKind::precondition, "run '" + run_id + "' has no manifest.json in " + store.root().string());
    }

    if (serve->parsed()) {
      HttpServer server(store, f.ui_dir.empty() ? base.ui_dir : fs::path(f.ui_dir));
      const std::string host = f.host.empty() ? base.host : f.host;
      const int port = server.bind(host, f.port.value_or(base.port));
      out << "listening on http://" << host << ":" << port << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
      return kExitOk;
    }

    AppConfig cfg = resolve_config(g, &store, run_id);
    if (ingest->parsed()) {
      if (!f.input.empty()) cfg.input = f.input;
      if (!f.aois.empty()) cfg.aois = f.aois;
      if (!cfg.input) throw Error(ErrorKind::configuration, "ingest needs --input or an `input` config entry");
    }
    if (f.runs) cfg.mining.n_runs = *f.runs;
    if (f.k) cfg.k = *f.k;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.hidden) cfg.train.hidden_dim = *f.hidden;
    if (f.window) cfg.windows.window_len = *f.window;
    if (f.stride) cfg.windows.stride = *f.stride;
    if (!f.questions.empty()) cfg.questions = f.questions;
    if (f.repetitions) cfg.repetitions = *f.repetitions;

    Pipeline pipe(cfg, store, run_id);
    out << "run " << run_id << "\n";

    if (ingest->parsed()) {
      const CleanReport r = pipe.ingest(*cfg.input);
      out << "rows_in=" << r.rows_in << " rows_out=" << r.rows_out << " dropped_missing=" << r.dropped_missing
          << " dropped_noise=" << r.dropped_noise << " dropped_irrelevant=" << r.dropped_irrelevant << "\n";
    } else if (segment->parsed()) {
      out << count_line(pipe.segment()) << "\n";
    } else if (mine->parsed()) {
      const GridResult r = pipe.mine();
      for (const auto& [key, set] : r.cells) out << key.file_stem() << "\t" << set.patterns.size() << "\n";
      out << "composite\t" << r.composite.patterns.size() << "\n";
      for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    } else if (score->parsed()) {
      const auto scores = pipe.score();
      std::size_t valid = 0;
      for (const auto& [id, s] : scores) valid += s.literature_verdict == Verdict::valid;
      out << "scored=" << scores.size() << " valid=" << valid << " invalid=" << scores.size() - valid << "\n";
    } else if (kappa->parsed()) {
      std::optional<fs::path> file;
      if (!f.verdicts.empty()) file = f.verdicts;
      const KappaSummary k = pipe.kappa(file, f.simulate, f.agreement);
      if (k.overall)
        out << "kappa=" << format_number(k.overall->kappa) << " n=" << k.overall->n
            << " consistent=" << (k.overall->consistent ? "yes" : "no") << "\n";
      else
        out << "kappa=NA\n";
      out << k.grid.render_tsv();
    } else if (detect->parsed()) {
      const AnomalyReport r = pipe.detect();
      out << "threshold=" << format_number(r.threshold) << " windows=" << r.windows.size()
          << " flagged=" << r.flagged() << "\n";
      for (const auto& q : r.double_zero) out << "double_zero " << q << "\n";
    } else if (predict->parsed()) {
      out << pipe.predict_difficulty().grid.render_tsv();
    } else if (report->parsed()) {
      pipe.report();
      out << (pipe.dir() / artifact::summary).string() << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return e.kind() == ErrorKind::precondition ? kExitPrecondition : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace gazemine
