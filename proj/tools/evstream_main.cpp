// Command-line front end: deterministic scenario runs, bandwidth sweeps,
// synthetic event-stream generation, and the rate calculators.
//
//   evstream run    --config scenario.json [--out report.json] [--format json|csv] [--seed N]
//   evstream sweep  --config scenario.json --bandwidths 5,50,100 [--out sweep.csv]
//   evstream gen    --out events.csv [--format csv|bin] --rate 100000 --duration-ms 1000
//                   [--width 1280] [--height 720] [--seed 0] [--burst start_ms:end_ms:mult]...
//   evstream rates  --framed W H BIT_DEPTH FPS | --event EVENTS_PER_SECOND BYTES_PER_EVENT
//
// Set EVSTREAM_LOG=error|warn|info|debug for log verbosity.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evstream/evstream.hpp"

namespace {

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw evstream::ConfigError(out_path + ": cannot open for writing");
  out << text;
  if (!out) throw evstream::ConfigError(out_path + ": write failed");
}

evstream::ScenarioConfig load_config(const std::string& path,
                                     std::optional<uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw evstream::ConfigError(path + ": cannot open");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw evstream::ConfigError(path + ": " + e.what());
  }
  if (seed_override) j["seed"] = *seed_override;  // echoed, so reruns reproduce
  return evstream::parse_scenario_json(j);
}

evstream::BurstInterval parse_burst(const std::string& text) {
  evstream::BurstInterval b;
  size_t first = text.find(':');
  size_t second = first == std::string::npos ? std::string::npos : text.find(':', first + 1);
  if (first == std::string::npos || second == std::string::npos)
    throw CLI::ValidationError("--burst", "expected start_ms:end_ms:multiplier");
  try {
    b.start_us = std::stoull(text.substr(0, first)) * 1000;
    b.end_us = std::stoull(text.substr(first + 1, second - first - 1)) * 1000;
    b.rate_multiplier = std::stod(text.substr(second + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--burst", "expected start_ms:end_ms:multiplier");
  }
  return b;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-stream transport simulator and codec toolkit"};
  app.require_subcommand(1);

  // --- run ---
  std::string run_config, run_out, run_format = "json";
  std::optional<uint64_t> run_seed;
  CLI::App* run = app.add_subcommand("run", "Run one scenario and report metrics");
  run->add_option("--config", run_config, "Scenario config (JSON)")->required();
  run->add_option("--out", run_out, "Output path (default: stdout)");
  run->add_option("--format", run_format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));
  run->add_option("--seed", run_seed, "Override the config seed");

  // --- sweep ---
  std::string sweep_config, sweep_out;
  std::vector<double> sweep_bandwidths;
  std::optional<uint64_t> sweep_seed;
  CLI::App* sweep = app.add_subcommand("sweep", "Run one scenario per egress bandwidth");
  sweep->add_option("--config", sweep_config, "Scenario config (JSON)")->required();
  sweep->add_option("--bandwidths", sweep_bandwidths, "Egress bandwidths in Mbps")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "Output CSV path (default: stdout)");
  sweep->add_option("--seed", sweep_seed, "Override the config seed");

  // --- gen ---
  std::string gen_out, gen_format = "csv";
  double gen_rate = 0.0;
  uint64_t gen_duration_ms = 1000, gen_seed = 0, gen_width = 1280, gen_height = 720;
  std::vector<std::string> gen_bursts;
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic event stream file");
  gen->add_option("--out", gen_out, "Output path")->required();
  gen->add_option("--format", gen_format, "File format")
      ->check(CLI::IsMember({"csv", "bin"}));
  gen->add_option("--rate", gen_rate, "Mean events per second")->required();
  gen->add_option("--duration-ms", gen_duration_ms, "Stream duration in ms");
  gen->add_option("--width", gen_width, "Sensor width in pixels");
  gen->add_option("--height", gen_height, "Sensor height in pixels");
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--burst", gen_bursts, "Burst interval start_ms:end_ms:multiplier");

  // --- rates ---
  std::vector<uint64_t> rates_framed, rates_event;
  CLI::App* rates = app.add_subcommand("rates", "Raw-rate calculators (bits per second)");
  auto* framed_opt = rates->add_option("--framed", rates_framed,
                                       "WIDTH HEIGHT BIT_DEPTH FPS")
                         ->expected(4);
  auto* event_opt = rates->add_option("--event", rates_event,
                                      "EVENTS_PER_SECOND BYTES_PER_EVENT")
                        ->expected(2);
  framed_opt->excludes(event_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      evstream::ScenarioConfig cfg = load_config(run_config, run_seed);
      evstream::RunReport report = evstream::run_scenario(cfg);
      write_output(run_format == "json" ? evstream::export_json(report)
                                        : evstream::export_csv(report),
                   run_out);
    } else if (*sweep) {
      evstream::ScenarioConfig cfg = load_config(sweep_config, sweep_seed);
      auto reports = evstream::sweep_scenario(cfg, sweep_bandwidths);
      std::string csv = evstream::kCsvHeader;
      csv += '\n';
      for (const evstream::RunReport& r : reports) csv += evstream::export_csv_rows(r);
      write_output(csv, sweep_out);
    } else if (*gen) {
      evstream::SourceModel model;
      model.kind = gen_bursts.empty() ? evstream::SourceKind::kConstantPoisson
                                      : evstream::SourceKind::kBursty;
      model.rate_eps = gen_rate;
      model.seed = gen_seed;
      model.geometry = {static_cast<uint16_t>(gen_width), static_cast<uint16_t>(gen_height)};
      for (const std::string& b : gen_bursts) model.bursts.push_back(parse_burst(b));
      auto events = evstream::generate(model, gen_duration_ms * 1000);
      evstream::save_events(gen_out,
                            gen_format == "csv" ? evstream::FileFormat::kCsv
                                                : evstream::FileFormat::kPackedBinary,
                            events);
    } else if (*rates) {
      if (!rates_framed.empty()) {
        std::cout << evstream::framed_rate_bps(rates_framed[0], rates_framed[1],
                                               rates_framed[2], rates_framed[3])
                  << '\n';
      } else if (!rates_event.empty()) {
        std::cout << evstream::event_raw_rate_bps(rates_event[0], rates_event[1]) << '\n';
      } else {
        std::cerr << "error: rates needs --framed or --event\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
