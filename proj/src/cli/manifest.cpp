#include "reconeval/cli/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "reconeval/core/io.hpp"
#include "reconeval/error.hpp"

namespace reconeval {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double number(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw MalformedFile("'" + text + "' is not a number" + where);
  }
  if (used != text.size() || !std::isfinite(v)) throw MalformedFile("'" + text + "' is not a finite number" + where);
  return v;
}

double wrapped_difference(double a, double b) {
  double d = std::fmod(b - a, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

}  // namespace

CaptureManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open manifest " + path.string());
  CaptureManifest out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(t);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(trim(c));
    if (out.empty() && !cols.empty() && cols[0] == "path") continue;
    const std::string where = " (" + path.string() + " line " + std::to_string(lineno) + ")";
    if (cols.size() != 3 && cols.size() != 6) {
      throw MalformedFile("expected path,timestamp,yaw[,x,y,z]" + where);
    }
    if (cols[0].empty()) throw MalformedFile("empty image path" + where);
    CaptureRecord r;
    r.path = cols[0];
    r.timestamp = number(cols[1], where);
    r.yaw = number(cols[2], where);
    if (std::abs(r.yaw) > std::numbers::pi) throw MalformedFile("yaw outside [-pi, pi]" + where);
    if (cols.size() == 6) r.position = Point3(number(cols[3], where), number(cols[4], where), number(cols[5], where));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<std::size_t>> group_images(const CaptureManifest& manifest, double yaw_bin,
                                                   double time_gap) {
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return manifest[a].timestamp < manifest[b].timestamp;
  });
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    bool split = groups.empty();
    if (!split) {
      const CaptureRecord& prev = manifest[order[k - 1]];
      split = std::abs(wrapped_difference(prev.yaw, manifest[i].yaw)) > yaw_bin ||
              manifest[i].timestamp - prev.timestamp > time_gap;
    }
    if (split) groups.emplace_back();
    groups.back().push_back(i);
  }
  return groups;
}

CaptureSummary summarize_capture(const CaptureManifest& manifest, const std::filesystem::path& image_dir,
                                 double yaw_bin, double time_gap) {
  CaptureSummary s;
  s.n_taken = manifest.size();
  CaptureManifest usable;
  for (const auto& r : manifest) {
    const std::filesystem::path p = image_dir / r.path;  // absolute entries replace image_dir
    try {
      (void)load_image(p);
      usable.push_back(r);
    } catch (const Error& e) {
      s.skipped.push_back(r.path + ": " + e.what());
    }
  }
  s.n_used = usable.size();
  s.n_groups = usable.empty() ? 0 : group_images(usable, yaw_bin, time_gap).size();
  return s;
}

}  // namespace reconeval
