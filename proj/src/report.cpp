#include "hfr/report.hpp"

#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace hfr {

namespace {

using nlohmann::json;

json metrics_json(const std::optional<MaskedMetrics>& m) {
  if (!m) return nullptr;
  return json{{"mpsnr", m->mpsnr}, {"mssim", m->mssim}, {"mask_coverage", m->mask_coverage}};
}

std::optional<MaskedMetrics> metrics_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return MaskedMetrics{j.at("mpsnr").get<double>(), j.at("mssim").get<double>(), j.at("mask_coverage").get<double>()};
}

}  // namespace

std::vector<PercentileRow> summarize(const std::vector<FrameRecord>& frames) {
  using Getter = std::function<std::optional<double>(const FrameRecord&)>;
  const std::vector<std::pair<std::string, Getter>> series = {
      {"full_mpsnr", [](const FrameRecord& f) { return f.full ? std::optional(f.full->mpsnr) : std::nullopt; }},
      {"full_mssim", [](const FrameRecord& f) { return f.full ? std::optional(f.full->mssim) : std::nullopt; }},
      {"foveal_mpsnr", [](const FrameRecord& f) { return f.foveal ? std::optional(f.foveal->mpsnr) : std::nullopt; }},
      {"foveal_mssim", [](const FrameRecord& f) { return f.foveal ? std::optional(f.foveal->mssim) : std::nullopt; }},
      {"peripheral_foveal_mpsnr",
       [](const FrameRecord& f) { return f.peripheral_foveal ? std::optional(f.peripheral_foveal->mpsnr) : std::nullopt; }},
      {"response_ms", [](const FrameRecord& f) { return std::optional(f.response_ms); }},
  };
  std::vector<PercentileRow> rows;
  const double ps[] = {10.0, 50.0, 90.0};
  for (const auto& [name, get] : series) {
    std::vector<double> values;
    for (const auto& f : frames) {
      if (auto v = get(f)) values.push_back(*v);
    }
    if (values.empty()) continue;
    const auto q = percentiles(values, ps);
    rows.push_back(PercentileRow{name, q[0], q[1], q[2], values.size()});
  }
  return rows;
}

std::string emit_report(const BenchmarkReport& r) {
  json frames = json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"index", f.index},
                      {"frame_id", f.frame_id},
                      {"generation", f.generation},
                      {"full", metrics_json(f.full)},
                      {"foveal", metrics_json(f.foveal)},
                      {"peripheral_foveal", metrics_json(f.peripheral_foveal)},
                      {"response_ms", f.response_ms},
                      {"server_render_ms", f.server_render_ms}});
  }
  json summary = json::array();
  for (const auto& s : r.summary) {
    summary.push_back({{"name", s.name}, {"p10", s.p10}, {"p50", s.p50}, {"p90", s.p90}, {"samples", s.samples}});
  }
  const json j{{"volume", r.volume},
               {"preset", r.preset},
               {"display_resolution", r.display_resolution},
               {"foveal_resolution", r.foveal_resolution},
               {"foveal_fov_deg", r.foveal_fov_deg},
               {"ground_truth_spp", r.ground_truth_spp},
               {"lpips", r.lpips},
               {"frames", frames},
               {"summary", summary}};
  return j.dump(2);
}

BenchmarkReport parse_report(const std::string& text) {
  BenchmarkReport r;
  try {
    const json j = json::parse(text);
    r.volume = j.at("volume").get<std::string>();
    r.preset = j.at("preset").get<std::string>();
    r.display_resolution = j.at("display_resolution").get<int>();
    r.foveal_resolution = j.at("foveal_resolution").get<int>();
    r.foveal_fov_deg = j.at("foveal_fov_deg").get<double>();
    r.ground_truth_spp = j.at("ground_truth_spp").get<int>();
    r.lpips = j.at("lpips").get<std::string>();
    for (const auto& f : j.at("frames")) {
      FrameRecord rec;
      rec.index = f.at("index").get<std::size_t>();
      rec.frame_id = f.at("frame_id").get<std::uint64_t>();
      rec.generation = f.at("generation").get<std::uint64_t>();
      rec.full = metrics_from(f.at("full"));
      rec.foveal = metrics_from(f.at("foveal"));
      rec.peripheral_foveal = metrics_from(f.at("peripheral_foveal"));
      rec.response_ms = f.at("response_ms").get<double>();
      rec.server_render_ms = f.at("server_render_ms").get<double>();
      r.frames.push_back(rec);
    }
    for (const auto& s : j.at("summary")) {
      r.summary.push_back(PercentileRow{s.at("name").get<std::string>(), s.at("p10").get<double>(),
                                        s.at("p50").get<double>(), s.at("p90").get<double>(),
                                        s.at("samples").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const BenchmarkReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << emit_report(report) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace hfr
