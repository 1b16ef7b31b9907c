#include "apn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "apn/error.hpp"
#include "json.hpp"

namespace apn {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Curve mean_curve(const std::vector<const Curve*>& curves) {
  Curve out = *curves.front();
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (const Curve* c : curves) {
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += c->values[k];
  }
  for (double& v : out.values) v /= static_cast<double>(curves.size());
  return out;
}

SliceReport make_slice(const std::string& name, const std::vector<const SequenceMetrics*>& members) {
  SliceReport s;
  s.name = name;
  std::vector<const Curve*> succ, prec;
  double fps_sum = 0.0;
  int fps_n = 0;
  for (const auto* m : members) {
    s.members.push_back(m->name);
    succ.push_back(&m->success);
    prec.push_back(&m->precision);
    s.auc += m->auc;
    s.precision20 += m->precision20;
    if (m->fps) {
      fps_sum += *m->fps;
      ++fps_n;
    }
  }
  s.success = mean_curve(succ);
  s.precision = mean_curve(prec);
  s.auc /= static_cast<double>(members.size());
  s.precision20 /= static_cast<double>(members.size());
  if (fps_n > 0) s.fps = fps_sum / fps_n;
  return s;
}

void write_slice_csv(const std::filesystem::path& path, const SliceReport& slice,
                     const std::vector<SequenceMetrics>& sequences) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "section,name,key,value\n";
  os << "summary," << slice.name << ",sequences," << slice.members.size() << "\n";
  os << "summary," << slice.name << ",auc," << fmt(slice.auc) << "\n";
  os << "summary," << slice.name << ",precision@20," << fmt(slice.precision20) << "\n";
  os << "summary," << slice.name << ",fps," << (slice.fps ? fmt(*slice.fps) : "nan") << "\n";
  const std::set<std::string> members(slice.members.begin(), slice.members.end());
  for (const auto& m : sequences) {
    if (!members.count(m.name)) continue;
    os << "sequence," << m.name << ",frames," << m.frames_scored << "\n";
    os << "sequence," << m.name << ",auc," << fmt(m.auc) << "\n";
    os << "sequence," << m.name << ",precision@20," << fmt(m.precision20) << "\n";
    os << "sequence," << m.name << ",fps," << (m.fps ? fmt(*m.fps) : "nan") << "\n";
  }
  for (std::size_t k = 0; k < slice.success.values.size(); ++k) {
    os << "success," << slice.name << "," << fmt(slice.success.thresholds[k]) << "," << fmt(slice.success.values[k])
       << "\n";
  }
  for (std::size_t k = 0; k < slice.precision.values.size(); ++k) {
    os << "precision," << slice.name << "," << fmt(slice.precision.thresholds[k]) << ","
       << fmt(slice.precision.values[k]) << "\n";
  }
}

void write_svg(const std::filesystem::path& path, const std::string& title, const std::string& xlabel, double xmax,
               const std::vector<std::pair<std::string, const Curve*>>& series, const std::vector<double>& scores) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double left = 60, top = 40, width = 420, height = 300;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"400\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n";
  os << "<rect width=\"660\" height=\"400\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title
     << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double fx = left + width * k / 5.0;
    const double fy = top + height - height * k / 5.0;
    os << "<text x=\"" << fx << "\" y=\"" << top + height + 16 << "\" text-anchor=\"middle\">" << xmax * k / 5.0
       << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fy + 4 << "\" text-anchor=\"end\">" << k / 5.0 << "</text>\n";
  }
  os << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 34 << "\" text-anchor=\"middle\">" << xlabel
     << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Curve& c = *series[s].second;
    const char* color = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < c.values.size(); ++k) {
      os << fmt(left + width * c.thresholds[k] / xmax) << "," << fmt(top + height - height * c.values[k]) << " ";
    }
    os << "\"/>\n";
    const double ly = top + 12 + 18.0 * static_cast<double>(s);
    os << "<line x1=\"" << left + width + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + width + 32 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + width + 36 << "\" y=\"" << ly + 4 << "\">" << series[s].first << " ["
       << fmt(scores[s]).substr(0, 5) << "]</text>\n";
  }
  os << "</svg>\n";
}

std::optional<double> read_fps(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream is(path);
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.contains("fps") && j["fps"].is_number()) return j["fps"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return std::nullopt;
}

std::vector<std::filesystem::path> sequence_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

double cle(const CornerBox& a, const CornerBox& b) {
  const CenterBox ca = a.to_center(), cb = b.to_center();
  return std::hypot(ca.cx - cb.cx, ca.cy - cb.cy);
}

Curve success_curve(std::span<const double> ious) {
  if (ious.empty()) throw UsageError("success_curve: no frames");
  Curve c;
  for (int k = 0; k <= kSuccessSteps; ++k) {
    const double t = static_cast<double>(k) / kSuccessSteps;
    const auto n = std::count_if(ious.begin(), ious.end(), [t](double v) { return v > t; });
    c.thresholds.push_back(t);
    c.values.push_back(static_cast<double>(n) / static_cast<double>(ious.size()));
  }
  return c;
}

double success_auc(const Curve& success) {
  double acc = 0.0;
  for (int k = 0; k < kSuccessSteps; ++k) acc += success.values.at(k);
  return acc / kSuccessSteps;
}

Curve precision_curve(std::span<const double> cles) {
  if (cles.empty()) throw UsageError("precision_curve: no frames");
  Curve c;
  for (int t = 0; t <= kPrecisionMax; ++t) {
    const auto n = std::count_if(cles.begin(), cles.end(), [t](double v) { return v < t; });
    c.thresholds.push_back(t);
    c.values.push_back(static_cast<double>(n) / static_cast<double>(cles.size()));
  }
  return c;
}

double precision_at_rank(const Curve& precision, double rank_px) {
  for (std::size_t k = 0; k < precision.thresholds.size(); ++k) {
    if (precision.thresholds[k] == rank_px) return precision.values[k];
  }
  throw UsageError("precision_at_rank: threshold not on the grid");
}

SequenceMetrics evaluate_sequence(const SequenceResult& result, const SequenceRecord& record, double rank_px) {
  if (result.boxes.size() != record.gt.size()) {
    throw DataError("sequence " + record.name + ": " + std::to_string(result.boxes.size()) + " result boxes for " +
                    std::to_string(record.gt.size()) + " annotated frames");
  }
  std::vector<double> ious, cles;
  for (std::size_t k = 0; k < record.gt.size(); ++k) {
    if (!record.gt[k]) continue;
    ious.push_back(iou(result.boxes[k], *record.gt[k]));
    cles.push_back(cle(result.boxes[k], *record.gt[k]));
  }
  if (ious.empty()) throw DataError("sequence " + record.name + ": no annotated frames");
  SequenceMetrics m;
  m.name = record.name;
  m.frames_scored = ious.size();
  m.success = success_curve(ious);
  m.precision = precision_curve(cles);
  m.auc = success_auc(m.success);
  m.precision20 = precision_at_rank(m.precision, rank_px);
  m.fps = result.fps;
  m.attributes = record.attributes;
  return m;
}

EvalReport evaluate(std::span<const SequenceResult> results, std::span<const SequenceRecord> records,
                    double rank_px) {
  if (records.empty()) throw DataError("evaluate: no annotated sequences");
  EvalReport report;
  for (const auto& rec : records) {
    const auto it = std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.name == rec.name; });
    if (it == results.end()) throw DataError("sequence " + rec.name + ": no tracker result");
    report.sequences.push_back(evaluate_sequence(*it, rec, rank_px));
  }
  std::vector<const SequenceMetrics*> all;
  std::map<std::string, std::vector<const SequenceMetrics*>> by_attr;
  for (const auto& m : report.sequences) {
    all.push_back(&m);
    const std::set<std::string> tags(m.attributes.begin(), m.attributes.end());
    for (const auto& a : tags) {
      if (a != "none") by_attr[a].push_back(&m);
    }
  }
  report.overall = make_slice("overall", all);
  for (const auto& [name, members] : by_attr) report.attributes[name] = make_slice(name, members);
  return report;
}

std::vector<std::optional<CornerBox>> read_box_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::optional<CornerBox>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::array<double, 4> v{};
    std::stringstream ss(line);
    std::string tok;
    int n = 0;
    while (std::getline(ss, tok, ',')) {
      if (n == 4) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 4 values");
      try {
        std::size_t used = 0;
        tok = trim(tok);
        v[n] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      ++n;
    }
    if (n != 4) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 4 values");
    if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(CornerBox{v[0], v[1], v[0] + v[2], v[1] + v[3]});
    }
  }
  return out;
}

void write_box_file(const std::filesystem::path& path, std::span<const CornerBox> boxes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  char buf[160];
  for (const auto& b : boxes) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f\n", b.x1, b.y1, b.width(), b.height());
    os << buf;
  }
}

std::vector<SequenceRecord> load_annotations(const std::filesystem::path& dir) {
  std::vector<SequenceRecord> out;
  for (const auto& file : sequence_files(dir)) {
    SequenceRecord rec;
    rec.name = file.stem().string();
    rec.gt = read_box_file(file);
    const auto side = dir / (rec.name + ".json");
    if (std::filesystem::exists(side)) {
      std::ifstream is(side);
      try {
        const auto j = nlohmann::json::parse(is);
        for (const auto& a : j.at("attributes")) rec.attributes.push_back(a.get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError(side.string() + ": " + e.what());
      }
      for (const auto& a : rec.attributes) {
        const auto& known = known_attributes();
        if (std::find(known.begin(), known.end(), a) == known.end()) {
          throw DataError(side.string() + ": unknown attribute '" + a + "'");
        }
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SequenceResult> load_results(const std::filesystem::path& dir) {
  std::vector<SequenceResult> out;
  for (const auto& file : sequence_files(dir)) {
    SequenceResult r;
    r.name = file.stem().string();
    for (const auto& b : read_box_file(file)) {
      if (!b) throw DataError(file.string() + ": result boxes must be finite");
      r.boxes.push_back(*b);
    }
    r.fps = read_fps(dir / (r.name + ".timing.json"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_timing(const std::filesystem::path& path, double fps, std::span<const double> frame_seconds) {
  nlohmann::json j;
  j["fps"] = fps;
  j["frames"] = frame_seconds.size();
  j["frame_seconds"] = std::vector<double>(frame_seconds.begin(), frame_seconds.end());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  write_slice_csv(dir / "overall.csv", report.overall, report.sequences);
  for (const auto& [name, slice] : report.attributes) write_slice_csv(dir / ("attr_" + name + ".csv"), slice, report.sequences);

  std::vector<std::pair<std::string, const Curve*>> succ{{"overall", &report.overall.success}};
  std::vector<std::pair<std::string, const Curve*>> prec{{"overall", &report.overall.precision}};
  std::vector<double> auc{report.overall.auc}, p20{report.overall.precision20};
  for (const auto& [name, slice] : report.attributes) {
    succ.emplace_back(name, &slice.success);
    prec.emplace_back(name, &slice.precision);
    auc.push_back(slice.auc);
    p20.push_back(slice.precision20);
  }
  write_svg(dir / "success.svg", "Success plot (AUC)", "overlap threshold", 1.0, succ, auc);
  write_svg(dir / "precision.svg", "Precision plot (CLE < 20 px)", "location error threshold (px)", kPrecisionMax,
            prec, p20);
}

}  // namespace apn
