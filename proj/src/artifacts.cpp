#include "pendcbc/artifacts.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pendcbc {

namespace {

std::ofstream open_for_write(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path())
        std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    return out;
}

void write_meta(std::ostream& out, const ArtifactMeta& meta) {
    out << "# tool: " << meta.tool << "\n";
    out << "# config-hash: " << meta.config_hash << "\n";
    for (const auto& [k, v] : meta.notes) out << "# " << k << ": " << v << "\n";
}

std::vector<std::string> split_csv(const std::string& line) {
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

double to_double(const std::string& s, const std::string& ctx) {
    const char* c = s.c_str();
    char* end = nullptr;
    double v = std::strtod(c, &end);
    if (end == c || *end != '\0')
        throw std::runtime_error(ctx + ": expected a number, got '" + s + "'");
    return v;
}

long to_long(const std::string& s, const std::string& ctx) {
    const char* c = s.c_str();
    char* end = nullptr;
    long v = std::strtol(c, &end, 10);
    if (end == c || *end != '\0')
        throw std::runtime_error(ctx + ": expected an integer, got '" + s +
                                 "'");
    return v;
}

}  // namespace

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_trajectory_csv(const std::string& path, const ArtifactMeta& meta,
                          const std::vector<TrajectoryRow>& rows) {
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "t,phi,phi_dot,phi_ref,u,torque\n";
    for (const auto& r : rows)
        out << format_number(r.t) << ',' << format_number(r.phi) << ','
            << format_number(r.phi_dot) << ',' << format_number(r.phi_ref)
            << ',' << format_number(r.u) << ',' << format_number(r.torque)
            << '\n';
}

void write_branch_csv(const std::string& path, const ArtifactMeta& meta,
                      const std::vector<BranchRow>& rows) {
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "index,p,phi0,p_tan,phi0_tan,residual,periods_used,u_sup,flag\n";
    for (const auto& r : rows)
        out << r.index << ',' << format_number(r.p) << ','
            << format_number(r.phi0) << ',' << format_number(r.p_tan) << ','
            << format_number(r.phi0_tan) << ',' << format_number(r.residual)
            << ',' << r.periods_used << ',' << format_number(r.u_sup) << ','
            << r.flag << '\n';
}

std::vector<BranchRow> read_branch_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open branch file");
    std::vector<BranchRow> rows;
    std::string line;
    bool saw_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::string ctx = path + ":" + std::to_string(lineno);
        const auto cells = split_csv(line);
        if (!saw_header) {
            if (cells.size() != 9 || cells[0] != "index" ||
                cells[8] != "flag")
                throw std::runtime_error(ctx +
                                         ": not a branch CSV header line");
            saw_header = true;
            continue;
        }
        if (cells.size() != 9)
            throw std::runtime_error(ctx + ": expected 9 columns, got " +
                                     std::to_string(cells.size()));
        BranchRow r;
        r.index = to_long(cells[0], ctx);
        r.p = to_double(cells[1], ctx);
        r.phi0 = to_double(cells[2], ctx);
        r.p_tan = to_double(cells[3], ctx);
        r.phi0_tan = to_double(cells[4], ctx);
        r.residual = to_double(cells[5], ctx);
        r.periods_used = to_long(cells[6], ctx);
        r.u_sup = to_double(cells[7], ctx);
        r.flag = cells[8];
        rows.push_back(std::move(r));
    }
    if (!saw_header)
        throw std::runtime_error(path + ": no branch CSV header found");
    return rows;
}

void write_orbit_csv(const std::string& path, const ArtifactMeta& meta,
                     const Eigen::VectorXd& t, const Eigen::VectorXd& phi,
                     const Eigen::VectorXd& phi_dot) {
    if (t.size() != phi.size() || t.size() != phi_dot.size())
        throw std::runtime_error(path + ": orbit column lengths differ");
    auto out = open_for_write(path);
    write_meta(out, meta);
    out << "t,phi,phi_dot\n";
    for (Eigen::Index i = 0; i < t.size(); ++i)
        out << format_number(t[i]) << ',' << format_number(phi[i]) << ','
            << format_number(phi_dot[i]) << '\n';
}

void write_orbit_json(const std::string& path, double p, double avg_phase,
                      const std::vector<std::complex<double>>& multipliers) {
    nlohmann::ordered_json j;
    j["p"] = p;
    j["avg_phase"] = avg_phase;
    auto& mu = j["multipliers"] = nlohmann::ordered_json::array();
    for (const auto& m : multipliers) {
        nlohmann::ordered_json pair;
        pair["re"] = m.real();
        pair["im"] = m.imag();
        mu.push_back(std::move(pair));
    }
    auto out = open_for_write(path);
    out << j.dump(2) << "\n";
}

void write_chart_csv(const std::string& path, const ArtifactMeta& meta,
                     const ChartGrid& grid, const std::string& format) {
    auto out = open_for_write(path);
    write_meta(out, meta);
    const Eigen::Index ng = grid.g_values.size();
    const Eigen::Index np = grid.phase_values.size();
    if (format == "wide") {
        out << "g\\phase";
        for (Eigen::Index j = 0; j < np; ++j)
            out << ',' << format_number(grid.phase_values[j]);
        out << '\n';
        for (Eigen::Index i = 0; i < ng; ++i) {
            out << format_number(grid.g_values[i]);
            for (Eigen::Index j = 0; j < np; ++j)
                out << ',' << format_number(grid.values(i, j));
            out << '\n';
        }
    } else if (format == "long") {
        out << "g,phase,value,flag\n";
        for (Eigen::Index i = 0; i < ng; ++i)
            for (Eigen::Index j = 0; j < np; ++j)
                out << format_number(grid.g_values[i]) << ','
                    << format_number(grid.phase_values[j]) << ','
                    << format_number(grid.values(i, j)) << ','
                    << to_string(grid.flag(i, j)) << '\n';
    } else {
        throw std::runtime_error("unknown chart format '" + format +
                                 "' (expected wide or long)");
    }
}

void write_chart_axes_json(const std::string& path, const ChartGrid& grid) {
    nlohmann::ordered_json j;
    j["g_values"] = std::vector<double>(
        grid.g_values.data(), grid.g_values.data() + grid.g_values.size());
    j["phase_values"] = std::vector<double>(
        grid.phase_values.data(),
        grid.phase_values.data() + grid.phase_values.size());
    auto out = open_for_write(path);
    out << j.dump(2) << "\n";
}

}  // namespace pendcbc
