#include "metareg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metareg/errors.hpp"

namespace metareg {

namespace {

constexpr const char* kColumns[] = {
    "iteration",   "task_loss",    "reg_loss",          "total_loss",
    "train_acc",   "val_pre_acc",  "val_post_acc",      "summary_ratio",
    "mean_phi_distance", "wall_ms", "seed",
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// write to a sibling temp file, then rename into place
void atomic_write(const std::string& path, const std::string& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os << payload;
        if (!os) throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw IoError("'" + path + "' line " + std::to_string(lineno) +
                      ": cannot parse number '" + s + "'");
    return v;
}

}  // namespace

double mean_pairwise_distance(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 2)
        throw ConfigError("mean_pairwise_distance: needs at least 2 rows, got " +
                          std::to_string(rows.size()));
    const std::size_t dim = rows[0].size();
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim)
            throw DimensionError("mean_pairwise_distance: row " + std::to_string(i) +
                                 " has length " + std::to_string(rows[i].size()) +
                                 ", expected " + std::to_string(dim));
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double sq = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = rows[i][d] - rows[j][d];
                sq += diff * diff;
            }
            sum += std::sqrt(sq);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double summary_latent_ratio(const std::vector<std::vector<double>>& h,
                            const std::vector<std::vector<double>>& z, double eps) {
    const double dh = mean_pairwise_distance(h);
    const double dz = mean_pairwise_distance(z);
    return dh / std::max(dz, eps);
}

void write_csv(const std::vector<MetricsRecord>& records, const std::string& path,
               bool with_wall_ms) {
    std::string out;
    for (const char* col : kColumns) {
        if (!with_wall_ms && std::string(col) == "wall_ms") continue;
        if (!out.empty()) out += ',';
        out += col;
    }
    out += '\n';
    for (const auto& r : records) {
        out += std::to_string(r.iteration);
        out += ',';
        out += fmt_double(r.task_loss);
        out += ',';
        out += fmt_double(r.reg_loss);
        out += ',';
        out += fmt_double(r.total_loss);
        out += ',';
        out += fmt_double(r.train_acc);
        out += ',';
        out += fmt_double(r.val_pre_acc);
        out += ',';
        out += fmt_double(r.val_post_acc);
        out += ',';
        out += fmt_double(r.summary_ratio);
        out += ',';
        out += fmt_double(r.mean_phi_distance);
        out += ',';
        if (with_wall_ms) {
            out += fmt_double(r.wall_ms);
            out += ',';
        }
        out += std::to_string(r.seed);
        out += '\n';
    }
    atomic_write(path, out);
}

std::vector<MetricsRecord> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw IoError("'" + path + "' is empty (no header)");

    std::string full, timeless;
    for (const char* col : kColumns) {
        if (!full.empty()) full += ',';
        full += col;
        if (std::string(col) != "wall_ms") {
            if (!timeless.empty()) timeless += ',';
            timeless += col;
        }
    }
    bool with_wall_ms;
    if (line == full)
        with_wall_ms = true;
    else if (line == timeless)
        with_wall_ms = false;
    else
        throw IoError("'" + path + "' header does not match the metrics schema: " + line);

    std::vector<MetricsRecord> records;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_commas(line);
        const std::size_t want = with_wall_ms ? 11 : 10;
        if (f.size() != want)
            throw IoError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                          std::to_string(want) + " fields, got " + std::to_string(f.size()));
        MetricsRecord r;
        std::size_t i = 0;
        r.iteration = static_cast<std::int64_t>(parse_double(f[i++], path, lineno));
        r.task_loss = parse_double(f[i++], path, lineno);
        r.reg_loss = parse_double(f[i++], path, lineno);
        r.total_loss = parse_double(f[i++], path, lineno);
        r.train_acc = parse_double(f[i++], path, lineno);
        r.val_pre_acc = parse_double(f[i++], path, lineno);
        r.val_post_acc = parse_double(f[i++], path, lineno);
        r.summary_ratio = parse_double(f[i++], path, lineno);
        r.mean_phi_distance = parse_double(f[i++], path, lineno);
        if (with_wall_ms) r.wall_ms = parse_double(f[i++], path, lineno);
        char* end = nullptr;
        r.seed = std::strtoull(f[i].c_str(), &end, 10);
        if (end != f[i].c_str() + f[i].size() || f[i].empty())
            throw IoError("'" + path + "' line " + std::to_string(lineno) +
                          ": cannot parse seed '" + f[i] + "'");
        records.push_back(r);
    }
    return records;
}

// --- SVG curves -------------------------------------------------------------

namespace {

double record_field(const MetricsRecord& r, const std::string& name) {
    if (name == "task_loss") return r.task_loss;
    if (name == "reg_loss") return r.reg_loss;
    if (name == "total_loss") return r.total_loss;
    if (name == "train_acc") return r.train_acc;
    if (name == "val_pre_acc") return r.val_pre_acc;
    if (name == "val_post_acc") return r.val_post_acc;
    if (name == "summary_ratio") return r.summary_ratio;
    if (name == "mean_phi_distance") return r.mean_phi_distance;
    if (name == "wall_ms") return r.wall_ms;
    throw ConfigError("render_curves: unknown column '" + name + "'");
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out += c;
    }
    return out;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void render_curves(const std::string& csv_path, const std::vector<std::string>& columns,
                   const std::string& out_path) {
    if (columns.empty()) throw ConfigError("render_curves: no columns requested");
    const auto records = read_csv(csv_path);
    if (records.empty())
        throw ValidationError("render_curves: '" + csv_path + "' holds no records");
    for (const auto& c : columns) record_field(records.front(), c);  // reject unknown names

    double x_lo = records.front().iteration, x_hi = x_lo;
    double y_lo = 0.0, y_hi = 0.0;
    bool have_y = false;
    for (const auto& r : records) {
        x_lo = std::min(x_lo, static_cast<double>(r.iteration));
        x_hi = std::max(x_hi, static_cast<double>(r.iteration));
        for (const auto& c : columns) {
            const double v = record_field(r, c);
            if (!std::isfinite(v)) continue;
            y_lo = have_y ? std::min(y_lo, v) : v;
            y_hi = have_y ? std::max(y_hi, v) : v;
            have_y = true;
        }
    }
    if (!have_y) {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if (x_hi == x_lo) {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    const double y_pad = (y_hi - y_lo) == 0.0 ? 0.5 + 0.1 * std::abs(y_lo)
                                              : 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;

    const double width = 960, height = 540;
    const double ml = 80, mr = 190, mt = 30, mb = 60;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto sx = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto sy = [&](double y) { return mt + (y_hi - y) / (y_hi - y_lo) * ph; };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
       << "\" fill=\"white\"/>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double fx = x_lo + (x_hi - x_lo) * t / 5.0;
        const double fy = y_lo + (y_hi - y_lo) * t / 5.0;
        os << "<line x1=\"" << sx(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(fx)
           << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << sx(fx) << "\" y=\"" << mt + ph + 20
           << "\" font-size=\"12\" text-anchor=\"middle\">" << fmt_tick(fx) << "</text>\n";
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << ml << "\" y2=\""
           << sy(fy) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(fy) + 4
           << "\" font-size=\"12\" text-anchor=\"end\">" << fmt_tick(fy) << "</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 15
       << "\" font-size=\"14\" text-anchor=\"middle\">iteration</text>\n";
    os << "<text x=\"20\" y=\"" << mt + ph / 2
       << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
       << mt + ph / 2 << ")\">value</text>\n";

    for (std::size_t ci = 0; ci < columns.size(); ++ci) {
        const char* color = palette[ci % (sizeof(palette) / sizeof(palette[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& r : records) {
            const double v = record_field(r, columns[ci]);
            if (!std::isfinite(v)) continue;
            os << sx(static_cast<double>(r.iteration)) << "," << sy(v) << " ";
        }
        os << "\"/>\n";
        const double ly = mt + 14 + 20 * static_cast<double>(ci);
        os << "<rect x=\"" << ml + pw + 22 << "\" y=\"" << ly - 9
           << "\" width=\"14\" height=\"10\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << ml + pw + 42 << "\" y=\"" << ly << "\" font-size=\"13\">"
           << xml_escape(columns[ci]) << "</text>\n";
    }
    os << "</svg>\n";
    atomic_write(out_path, os.str());
}

// --- manifest ---------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void write_manifest(const RunManifest& m, const std::string& path) {
    std::string out;
    out += "code_version = " + m.code_version + "\n";
    out += "dataset_checksum = " + m.dataset_checksum + "\n";
    out += "split_hash = " + std::to_string(m.split_hash) + "\n";
    for (const auto& [k, v] : m.config) out += "config." + k + " = " + v + "\n";
    atomic_write(path, out);
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest '" + path + "'");
    RunManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw IoError("manifest '" + path + "' line " + std::to_string(lineno) +
                          ": expected 'key = value'");
        const auto key = trim(t.substr(0, eq));
        const auto value = trim(t.substr(eq + 1));
        if (key == "code_version")
            m.code_version = value;
        else if (key == "dataset_checksum")
            m.dataset_checksum = value;
        else if (key == "split_hash") {
            char* end = nullptr;
            m.split_hash = std::strtoull(value.c_str(), &end, 10);
            if (end != value.c_str() + value.size())
                throw IoError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": bad split_hash '" + value + "'");
        } else if (key.rfind("config.", 0) == 0)
            m.config[key.substr(7)] = value;
        else
            throw IoError("manifest '" + path + "' line " + std::to_string(lineno) +
                          ": unknown key '" + key + "'");
    }
    return m;
}

}  // namespace metareg
