#pragma once

#include "hfr/metrics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hfr {

struct FrameRecord {
  std::size_t index = 0;
  std::uint64_t frame_id = 0;
  std::uint64_t generation = 0;  // peripheral model used for the composite
  std::optional<MaskedMetrics> full;
  std::optional<MaskedMetrics> foveal;
  std::optional<MaskedMetrics> peripheral_foveal;  // model-only render, foveal region
  double response_ms = 0.0;
  double server_render_ms = 0.0;
  bool operator==(const FrameRecord&) const = default;
};

struct PercentileRow {
  std::string name;
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  std::size_t samples = 0;
  bool operator==(const PercentileRow&) const = default;
};

struct BenchmarkReport {
  std::string volume;
  std::string preset;
  int display_resolution = 0;
  int foveal_resolution = 0;
  double foveal_fov_deg = 0.0;
  int ground_truth_spp = 0;
  std::vector<FrameRecord> frames;
  std::vector<PercentileRow> summary;
  std::string lpips;  // not computed; kept as a labelled field so readers do not assume it
  bool operator==(const BenchmarkReport&) const = default;
};

/// p10/p50/p90 rows for full-image and foveal metrics and response time.
std::vector<PercentileRow> summarize(const std::vector<FrameRecord>& frames);

std::string emit_report(const BenchmarkReport& report);
BenchmarkReport parse_report(const std::string& json_text);
void write_report(const BenchmarkReport& report, const std::filesystem::path& path);

}  // namespace hfr
