// tespulse: predicted timing jitter, trace simulation, and the measurement
// pipeline behind it, as four subcommands (predict, sweep, simulate,
// analyze). Flags override config-file values; configs carry display units
// (mK, nH, ns, MHz, eV), the --inductance/--bandwidth overrides take SI.
// Exit codes: 0 ok, 1 validation, 2 runtime failure, 3 partial results.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tes/config.hpp"
#include "tes/report.hpp"
#include "tes/tesb.hpp"

namespace {

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char b[32];
  std::strftime(b, sizeof b, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return b;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

std::string csv_stem(const std::string& out) {
  const std::string suffix = ".json";
  if (out.size() > suffix.size() &&
      out.compare(out.size() - suffix.size(), suffix.size(), suffix) == 0)
    return out.substr(0, out.size() - suffix.size());
  return out;
}

void parse_grid(const std::string& spec, double& lo, double& hi,
                std::size_t& n) {
  unsigned long long count = 0;
  char tail = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%llu%c", &lo, &hi, &count, &tail) != 3)
    throw std::invalid_argument("sweep: malformed grid spec '" + spec +
                                "', expected lo:hi:n in nH");
  n = static_cast<std::size_t>(count);
}

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  double inductance = 0;  // H
  double bandwidth = 0;   // Hz
  CLI::Option* seed_opt = nullptr;
  CLI::Option* l_opt = nullptr;
  CLI::Option* bw_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file (defaults used when omitted)");
    seed_opt = cmd->add_option("--seed", seed, "override the config seed");
    l_opt = cmd->add_option("--inductance", inductance,
                            "override the input inductance, henry (SI)");
    bw_opt = cmd->add_option("--bandwidth", bandwidth,
                             "override the amplifier bandwidth, hertz (SI)");
  }

  tes::RunConfig config() const {
    tes::RunConfig cfg = config_path.empty() ? tes::default_config()
                                             : tes::load_config(config_path);
    if (seed_opt->count()) cfg.seed = seed;
    if (l_opt->count()) cfg.device.inductance_nh = inductance * 1e9;
    if (bw_opt->count()) cfg.device.amp_bandwidth_mhz = bandwidth * 1e-6;
    return cfg;
  }
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"transition-edge-sensor pulse timing toolkit"};
  app.set_version_flag("--version", std::string(tes::kToolVersion));
  app.require_subcommand(1);

  CLI::App* predict_cmd =
      app.add_subcommand("predict", "closed-form jitter prediction");
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "jitter envelope over an inductance grid");
  CLI::App* simulate_cmd =
      app.add_subcommand("simulate", "write a simulated trace batch");
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "run the measurement pipeline on a batch");

  CommonFlags predict_flags, sweep_flags, simulate_flags, analyze_flags;
  predict_flags.attach(predict_cmd);
  sweep_flags.attach(sweep_cmd);
  simulate_flags.attach(simulate_cmd);
  analyze_flags.attach(analyze_cmd);

  std::string predict_out;
  predict_cmd->add_option("--out", predict_out, "also write the report JSON");

  std::string sweep_out = "sweep.csv";
  std::string grid_spec = "10:50:81";
  std::string overlay_report;
  sweep_cmd->add_option("--out", sweep_out, "output CSV path");
  sweep_cmd->add_option("--grid", grid_spec, "inductance grid, lo:hi:n in nH");
  sweep_cmd->add_option("--report", overlay_report,
                        "analysis report JSON for measured-point overlay");

  std::string simulate_out = "traces.tesb";
  std::uint64_t n_traces = 20000;
  simulate_cmd->add_option("--out", simulate_out, "output trace file");
  simulate_cmd->add_option("--traces", n_traces, "number of traces to write");

  std::string analyze_in;
  std::string analyze_out = "report.json";
  std::vector<double> thresholds;
  analyze_cmd->add_option("traces", analyze_in, "input trace batch file")
      ->required();
  analyze_cmd->add_option("--out", analyze_out, "report JSON path");
  CLI::Option* th_opt =
      analyze_cmd
          ->add_option("--thresholds", thresholds,
                       "threshold fractions, comma separated")
          ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (predict_cmd->parsed()) {
      tes::RunConfig cfg = predict_flags.config();
      tes::validate(cfg);
      tes::Prediction p = tes::predict(cfg);
      std::fputs(tes::predict_text(p).c_str(), stdout);
      if (!predict_out.empty())
        write_file(predict_out, tes::predict_json(p, cfg, now_iso8601()));
      return 0;
    }

    if (sweep_cmd->parsed()) {
      tes::RunConfig cfg = sweep_flags.config();
      tes::validate(cfg);
      double lo = 0, hi = 0;
      std::size_t n = 0;
      parse_grid(grid_spec, lo, hi, n);
      tes::SweepTable table = tes::sweep_envelope(cfg, lo, hi, n);
      std::vector<tes::SweepOverlayPoint> overlay;
      if (!overlay_report.empty())
        overlay = tes::overlay_from_report(read_file(overlay_report));
      write_file(sweep_out, tes::sweep_csv(table, overlay));
      std::string extra;
      if (!overlay.empty())
        extra = ", " + std::to_string(overlay.size()) + " overlay points";
      std::printf("wrote %s (%zu grid points%s)\n", sweep_out.c_str(),
                  table.inductance_nh.size(), extra.c_str());
      return 0;
    }

    if (simulate_cmd->parsed()) {
      tes::RunConfig cfg = simulate_flags.config();
      tes::validate(cfg);
      if (n_traces == 0)
        throw std::invalid_argument("simulate: --traces must be positive");
      tes::ShapeModel shape(cfg.shape_params());
      tes::TraceBatch batch =
          tes::simulate_batch(cfg.source_params(), shape, cfg.device_params(),
                              cfg.noise_params(), cfg.digitizer_params(),
                              static_cast<std::size_t>(n_traces));
      batch.params_hash = tes::config_hash(cfg);
      tes::write_tesb(simulate_out, batch);
      std::printf("wrote %s: %zu traces x %u samples, seed %llu, %llu clipped\n",
                  simulate_out.c_str(), batch.traces.size(),
                  batch.digitizer.trace_length,
                  static_cast<unsigned long long>(batch.seed),
                  static_cast<unsigned long long>(batch.clipped_samples));
      return 0;
    }

    // analyze
    tes::RunConfig cfg = analyze_flags.config();
    if (th_opt->count()) cfg.analysis.thresholds = thresholds;
    tes::validate(cfg);
    tes::TraceBatch batch = tes::read_tesb(analyze_in);
    if (cfg.digitizer.pre_trigger >= batch.digitizer.trace_length)
      throw std::invalid_argument(
          "config: digitizer.pre_trigger: must be below the trace length of "
          "the input file");
    batch.digitizer.pre_trigger = cfg.digitizer.pre_trigger;
    tes::AnalysisResult r = tes::analyze_batch(batch, cfg);
    write_file(analyze_out,
               tes::analysis_report_json(r, cfg, batch, analyze_in,
                                         now_iso8601()));
    const std::string stem = csv_stem(analyze_out);
    write_file(stem + "_area_hist.csv", tes::area_hist_csv(r.hist));
    write_file(stem + "_mean_pulses.csv", tes::mean_pulses_csv(r));
    write_file(stem + "_crossings.csv", tes::crossings_csv(r, batch));
    write_file(stem + "_jitter.csv", tes::jitter_csv(r));
    std::printf("%s: %zu traces, %zu peaks, %zu jitter curves -> %s\n",
                analyze_in.c_str(), batch.traces.size(),
                r.hist.peak_centers.size(), r.curves.size(),
                analyze_out.c_str());
    if (r.partial) {
      for (const std::string& why : r.partial_reasons)
        std::fprintf(stderr, "partial: %s\n", why.c_str());
      return 3;
    }
    return 0;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
