#include "ganinv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ganinv {

double reconstruction_loss(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("reconstruction_loss: shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    return (a.data - b.data).squaredNorm() / static_cast<double>(a.size());
}

double z_recovery_error(const Tensor& z, const Tensor& z_p) {
    if (z.size() != z_p.size())
        throw ShapeError("z_recovery_error: length mismatch " + std::to_string(z.size()) + " vs " +
                         std::to_string(z_p.size()));
    return (z.data - z_p.data).norm();
}

double label_accuracy(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ContractError("label_accuracy: empty record list");
    int correct = 0;
    for (const EvalRecord& r : records)
        if (r.label_decoded == r.label_true) ++correct;
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

AggregateReport aggregate(const std::vector<EvalRecord>& records, std::string config_digest) {
    if (records.empty()) throw ContractError("aggregate: empty record list");
    AggregateReport rep;
    rep.count = static_cast<int>(records.size());
    rep.config_digest = std::move(config_digest);
    double z_sum = 0.0;
    int z_count = 0;
    for (const EvalRecord& r : records) {
        rep.mean_recon_mse += r.recon_mse;
        rep.mean_initial_mse += r.initial_mse;
        if (r.z_error) {
            z_sum += *r.z_error;
            ++z_count;
        }
    }
    rep.mean_recon_mse /= rep.count;
    rep.mean_initial_mse /= rep.count;
    rep.accuracy = label_accuracy(records);
    if (z_count > 0) rep.mean_z_error = z_sum / z_count;
    return rep;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& ctx) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw FormatError(ctx + ": bad number '" + s + "'");
    return v;
}

int parse_int(const std::string& s, const std::string& ctx) {
    try {
        return std::stoi(s);
    } catch (...) {
        throw FormatError(ctx + ": bad integer '" + s + "'");
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

constexpr const char* kRecordsHeader =
    "id,provenance,recon_mse,initial_mse,z_error,label_true,label_decoded,regularizer,iterations";
constexpr const char* kTraceHeader =
    "iteration,recon_mse,recon_sum,reg_term,z_error,label_correct";

} // namespace

void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path) {
    if (records.empty()) throw ContractError("write_records_csv: empty record list");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << kRecordsHeader << "\n";
    for (const EvalRecord& r : records) {
        out << r.id << ',' << provenance_name(r.provenance) << ',' << fmt_double(r.recon_mse) << ','
            << fmt_double(r.initial_mse) << ',' << (r.z_error ? fmt_double(*r.z_error) : "") << ','
            << r.label_true << ',' << r.label_decoded << ',' << (r.regularizer_enabled ? 1 : 0)
            << ',' << r.iterations << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<EvalRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (line.back() == '\r') line.pop_back();
    if (line != kRecordsHeader) throw FormatError(path + ": unexpected records CSV header");
    std::vector<EvalRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 9) throw FormatError(path + ": malformed row");
        EvalRecord r;
        r.id = f[0];
        r.provenance = provenance_from_name(f[1]);
        r.recon_mse = parse_double(f[2], path);
        r.initial_mse = parse_double(f[3], path);
        if (!f[4].empty()) r.z_error = parse_double(f[4], path);
        r.label_true = parse_int(f[5], path);
        r.label_decoded = parse_int(f[6], path);
        r.regularizer_enabled = parse_int(f[7], path) != 0;
        r.iterations = parse_int(f[8], path);
        records.push_back(std::move(r));
    }
    return records;
}

void write_trace_csv(const RecoveryTrace& trace, const std::string& path) {
    if (trace.points.empty()) throw ContractError("write_trace_csv: empty trace");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << kTraceHeader << "\n";
    for (const TracePoint& p : trace.points) {
        out << p.iteration << ',' << fmt_double(p.recon_mse) << ',' << fmt_double(p.recon_sum) << ','
            << fmt_double(p.reg_term) << ',' << (p.z_error ? fmt_double(*p.z_error) : "") << ','
            << (p.label_correct ? (*p.label_correct ? "1" : "0") : "") << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

RecoveryTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) throw FormatError(path + ": unexpected trace CSV header");
    RecoveryTrace trace;
    int prev = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw FormatError(path + ": malformed row");
        TracePoint p;
        p.iteration = parse_int(f[0], path);
        p.recon_mse = parse_double(f[1], path);
        p.recon_sum = parse_double(f[2], path);
        p.reg_term = parse_double(f[3], path);
        if (!f[4].empty()) p.z_error = parse_double(f[4], path);
        if (!f[5].empty()) p.label_correct = parse_int(f[5], path) != 0;
        if (p.iteration <= prev) throw FormatError(path + ": iterations not strictly increasing");
        prev = p.iteration;
        trace.points.push_back(std::move(p));
    }
    return trace;
}

void write_svg_curves(const std::vector<CurveSeries>& series, const std::string& y_label,
                      const std::string& path) {
    if (series.empty()) throw ContractError("write_svg_curves: no series");
    for (const CurveSeries& s : series)
        if (s.points.empty()) throw ContractError("write_svg_curves: empty series " + s.name);

    double xmin = series[0].points[0].first, xmax = xmin;
    double ymin = series[0].points[0].second, ymax = ymin;
    for (const CurveSeries& s : series) {
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;

    const double W = 640, H = 420, ml = 70, mr = 20, mt = 30, mb = 50;
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto Y = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W
        << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr) << "\" y2=\""
        << (H - mb) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (H - mb)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (W / 2) << "\" y=\"" << (H - 12)
        << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n";
    out << "<text x=\"16\" y=\"" << (H / 2)
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " << (H / 2)
        << ")\">" << y_label << "</text>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", xmin);
    out << "<text x=\"" << ml << "\" y=\"" << (H - mb + 18) << "\" font-size=\"11\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%g", xmax);
    out << "<text x=\"" << (W - mr) << "\" y=\"" << (H - mb + 18)
        << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%g", ymin);
    out << "<text x=\"" << (ml - 6) << "\" y=\"" << (H - mb)
        << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%g", ymax);
    out << "<text x=\"" << (ml - 6) << "\" y=\"" << (mt + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << buf << "</text>\n";

    double legend_y = mt + 6;
    for (const CurveSeries& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) out << " stroke-dasharray=\"6,4\"";
        out << " points=\"";
        for (auto [x, y] : s.points) out << X(x) << ',' << Y(y) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << (W - mr - 150) << "\" y=\"" << legend_y << "\" font-size=\"12\" fill=\""
            << s.color << "\">" << s.name << "</text>\n";
        legend_y += 16;
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

std::string digest_string(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace ganinv
