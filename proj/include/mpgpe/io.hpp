#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gp.hpp"
#include "lscde.hpp"
#include "policy.hpp"
#include "trainer.hpp"
#include "types.hpp"

namespace mpgpe {

// 17 significant digits: doubles round-trip exactly through text.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& tok, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error(context + ": expected a number, got '" + tok + "'");
    return v;
}

inline long parse_long(const std::string& tok, const std::string& context) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error(context + ": expected an integer, got '" + tok + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
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

// All outputs go through a temp file plus rename, so failures never leave
// partial files behind.
inline void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << content;
        if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// ---- transition datasets -------------------------------------------------

inline std::string transitions_to_csv(const std::vector<TransitionSample>& samples) {
    require(!samples.empty(), "transitions_to_csv: empty dataset");
    const int ds = static_cast<int>(samples[0].s.size());
    const int da = static_cast<int>(samples[0].a.size());
    std::ostringstream out;
    for (int i = 0; i < ds; ++i) out << "s" << i << ",";
    for (int i = 0; i < da; ++i) out << "a" << i << ",";
    for (int i = 0; i < ds; ++i) out << "s_next" << i << (i + 1 < ds ? "," : "");
    out << "\n";
    for (const auto& smp : samples) {
        for (int i = 0; i < ds; ++i) out << format_double(smp.s[i]) << ",";
        for (int i = 0; i < da; ++i) out << format_double(smp.a[i]) << ",";
        for (int i = 0; i < ds; ++i)
            out << format_double(smp.s_next[i]) << (i + 1 < ds ? "," : "");
        out << "\n";
    }
    return out.str();
}

inline void write_transitions_csv(const std::string& path,
                                  const std::vector<TransitionSample>& samples) {
    atomic_write_file(path, transitions_to_csv(samples));
}

inline std::vector<TransitionSample> read_transitions_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file");
    const auto header = split_csv_line(lines[0]);
    int ds = 0, da = 0, dn = 0;
    for (const auto& name : header) {
        if (name.rfind("s_next", 0) == 0) ++dn;
        else if (name.rfind("s", 0) == 0) ++ds;
        else if (name.rfind("a", 0) == 0) ++da;
        else throw std::runtime_error(path + ": row 1: unknown column '" + name + "'");
    }
    if (ds < 1 || da < 1 || dn != ds)
        throw std::runtime_error(path + ": row 1: malformed header (need s*, a*, s_next*)");

    std::vector<TransitionSample> samples;
    samples.reserve(lines.size() - 1);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto toks = split_csv_line(lines[r]);
        const std::string ctx = path + ": row " + std::to_string(r + 1);
        if (static_cast<int>(toks.size()) != ds + da + dn)
            throw std::runtime_error(ctx + ": expected " + std::to_string(ds + da + dn) +
                                     " columns, got " + std::to_string(toks.size()));
        TransitionSample smp{Vec(ds), Vec(da), Vec(dn)};
        int k = 0;
        for (int i = 0; i < ds; ++i) smp.s[i] = parse_double(toks[k++], ctx);
        for (int i = 0; i < da; ++i) smp.a[i] = parse_double(toks[k++], ctx);
        for (int i = 0; i < dn; ++i) smp.s_next[i] = parse_double(toks[k++], ctx);
        samples.push_back(std::move(smp));
    }
    if (samples.empty()) throw std::runtime_error(path + ": no data rows");
    return samples;
}

// ---- learning curves and sweep tables -------------------------------------

inline std::string curve_to_csv(const LearningCurve& curve) {
    std::ostringstream out;
    out << "iteration,cumulative_real_episodes,mean_return,std_error\n";
    for (const auto& row : curve.rows)
        out << row.iteration << "," << row.cumulative_real_episodes << ","
            << format_double(row.mean_return) << "," << format_double(row.std_error) << "\n";
    return out.str();
}

inline void write_curve_csv(const std::string& path, const LearningCurve& curve) {
    atomic_write_file(path, curve_to_csv(curve));
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "schedule,mean_return,std_error,n_runs\n";
    for (const auto& row : rows)
        out << row.schedule.str() << "," << format_double(row.mean_return) << ","
            << format_double(row.std_error) << "," << row.n_runs << "\n";
    return out.str();
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    atomic_write_file(path, sweep_to_csv(rows));
}

// ---- model files -----------------------------------------------------------
// Plain text, header line plus one row per center / point.

inline void save_lscde(const std::string& path, const LscdeModel& model) {
    std::ostringstream out;
    const auto& bw = model.bandwidth();
    out << model.num_centers() << "," << model.state_dim() << "," << model.action_dim() << ",";
    if (bw.shared())
        out << format_double(bw.s);
    else
        out << format_double(bw.s) << "," << format_double(bw.a) << "," << format_double(bw.out);
    out << "," << format_double(model.lambda()) << "\n";
    for (int m = 0; m < model.num_centers(); ++m) {
        for (int i = 0; i < model.state_dim(); ++i)
            out << format_double(model.centers_s()(m, i)) << ",";
        for (int i = 0; i < model.action_dim(); ++i)
            out << format_double(model.centers_a()(m, i)) << ",";
        for (int i = 0; i < model.out_dim(); ++i)
            out << format_double(model.centers_out()(m, i)) << ",";
        out << format_double(model.alpha()[m]) << "\n";
    }
    atomic_write_file(path, out.str());
}

inline LscdeModel load_lscde(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file");
    const auto head = split_csv_line(lines[0]);
    const std::string ctx = path + ": header";
    if (head.size() != 5 && head.size() != 7)
        throw std::runtime_error(ctx + ": expected 5 or 7 fields");
    const int m = static_cast<int>(parse_long(head[0], ctx));
    const int ds = static_cast<int>(parse_long(head[1], ctx));
    const int da = static_cast<int>(parse_long(head[2], ctx));
    LscdeBandwidth bw;
    double lambda;
    if (head.size() == 5) {
        bw = LscdeBandwidth(parse_double(head[3], ctx));
        lambda = parse_double(head[4], ctx);
    } else {
        bw = LscdeBandwidth(parse_double(head[3], ctx), parse_double(head[4], ctx),
                            parse_double(head[5], ctx));
        lambda = parse_double(head[6], ctx);
    }
    if (m < 1 || ds < 1 || da < 1) throw std::runtime_error(ctx + ": invalid dimensions");
    if (static_cast<int>(lines.size()) < m + 1)
        throw std::runtime_error(path + ": expected " + std::to_string(m) + " center rows");

    Mat cs(m, ds), ca(m, da), co(m, ds);
    Vec alpha(m);
    for (int r = 0; r < m; ++r) {
        const std::string rctx = path + ": row " + std::to_string(r + 2);
        const auto toks = split_csv_line(lines[r + 1]);
        if (static_cast<int>(toks.size()) != 2 * ds + da + 1)
            throw std::runtime_error(rctx + ": expected " + std::to_string(2 * ds + da + 1) +
                                     " columns, got " + std::to_string(toks.size()));
        int k = 0;
        for (int i = 0; i < ds; ++i) cs(r, i) = parse_double(toks[k++], rctx);
        for (int i = 0; i < da; ++i) ca(r, i) = parse_double(toks[k++], rctx);
        for (int i = 0; i < ds; ++i) co(r, i) = parse_double(toks[k++], rctx);
        alpha[r] = parse_double(toks[k++], rctx);
    }
    return LscdeModel(std::move(cs), std::move(ca), std::move(co), bw, lambda, std::move(alpha));
}

inline void save_gp(const std::string& path, const GpModel& model) {
    std::ostringstream out;
    out << model.num_points() << "," << model.input_dim() << "," << model.out_dim() << ","
        << format_double(model.amplitude()) << "," << format_double(model.noise_var()) << "\n";
    for (int i = 0; i < model.input_dim(); ++i)
        out << format_double(model.lengthscale()[i]) << (i + 1 < model.input_dim() ? "," : "");
    out << "\n";
    for (int r = 0; r < model.num_points(); ++r) {
        for (int i = 0; i < model.input_dim(); ++i)
            out << format_double(model.inputs()(r, i)) << ",";
        for (int i = 0; i < model.out_dim(); ++i)
            out << format_double(model.targets()(r, i)) << (i + 1 < model.out_dim() ? "," : "");
        out << "\n";
    }
    atomic_write_file(path, out.str());
}

inline GpModel load_gp(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.size() < 2) throw std::runtime_error(path + ": truncated file");
    const std::string ctx = path + ": header";
    const auto head = split_csv_line(lines[0]);
    if (head.size() != 5) throw std::runtime_error(ctx + ": expected 5 fields");
    const int m = static_cast<int>(parse_long(head[0], ctx));
    const int din = static_cast<int>(parse_long(head[1], ctx));
    const int dout = static_cast<int>(parse_long(head[2], ctx));
    const double amplitude = parse_double(head[3], ctx);
    const double noise_var = parse_double(head[4], ctx);
    const auto ls_toks = split_csv_line(lines[1]);
    if (static_cast<int>(ls_toks.size()) != din)
        throw std::runtime_error(path + ": row 2: expected " + std::to_string(din) +
                                 " lengthscales");
    Vec ls(din);
    for (int i = 0; i < din; ++i) ls[i] = parse_double(ls_toks[i], path + ": row 2");
    if (static_cast<int>(lines.size()) < m + 2)
        throw std::runtime_error(path + ": expected " + std::to_string(m) + " data rows");
    Mat X(m, din), Y(m, dout);
    for (int r = 0; r < m; ++r) {
        const std::string rctx = path + ": row " + std::to_string(r + 3);
        const auto toks = split_csv_line(lines[r + 2]);
        if (static_cast<int>(toks.size()) != din + dout)
            throw std::runtime_error(rctx + ": expected " + std::to_string(din + dout) +
                                     " columns");
        for (int i = 0; i < din; ++i) X(r, i) = parse_double(toks[i], rctx);
        for (int i = 0; i < dout; ++i) Y(r, i) = parse_double(toks[din + i], rctx);
    }
    return GpModel(std::move(X), std::move(Y), amplitude, std::move(ls), noise_var);
}

// ---- prior hyper-parameters -------------------------------------------------

inline void save_prior(const std::string& path, const PriorHyper& rho) {
    std::ostringstream out;
    out << rho.dim() << "\n";
    for (int i = 0; i < rho.dim(); ++i)
        out << format_double(rho.eta[i]) << "," << format_double(rho.tau[i]) << "\n";
    atomic_write_file(path, out.str());
}

inline PriorHyper load_prior(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": empty file");
    const int b = static_cast<int>(parse_long(split_csv_line(lines[0])[0], path + ": header"));
    if (b < 1 || static_cast<int>(lines.size()) < b + 1)
        throw std::runtime_error(path + ": expected " + std::to_string(b) + " rows");
    Vec eta(b), tau(b);
    for (int r = 0; r < b; ++r) {
        const std::string ctx = path + ": row " + std::to_string(r + 2);
        const auto toks = split_csv_line(lines[r + 1]);
        if (toks.size() != 2) throw std::runtime_error(ctx + ": expected eta,tau");
        eta[r] = parse_double(toks[0], ctx);
        tau[r] = parse_double(toks[1], ctx);
    }
    return PriorHyper(std::move(eta), std::move(tau));
}

// ---- run manifests ----------------------------------------------------------

// FNV-1a, for stable config fingerprints in manifests.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct RunManifest {
    std::string command;
    std::string config_text; // canonical key=value lines
    std::uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;
};

inline std::string manifest_to_text(const RunManifest& m) {
    std::ostringstream out;
    out << "command = " << m.command << "\n";
    out << "config_hash = " << fnv1a_hex(m.config_text) << "\n";
    out << "seed = " << m.seed << "\n";
    out << "started_at = " << m.started_at << "\n";
    out << "finished_at = " << m.finished_at << "\n";
    for (const auto& o : m.outputs) out << "output = " << o << "\n";
    out << "config:\n" << m.config_text;
    return out.str();
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
    atomic_write_file(path, manifest_to_text(m));
}

} // namespace mpgpe
