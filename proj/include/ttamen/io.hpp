#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ttamen/amen/config.hpp"
#include "ttamen/core.hpp"

namespace ttamen {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- TT files ------------------------------------------------------------------------
//
// A manifest `<stem>.json` next to a blob `<stem>.bin` of concatenated cores,
// each flattened with the left rank fastest, little-endian IEEE-754 doubles.

using TTObject = std::variant<TTVector, TTMatrix>;

namespace detail {

inline fs::path blob_path(const fs::path& manifest) {
    fs::path p = manifest;
    p.replace_extension(".bin");
    return p;
}

inline std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

inline void append_doubles(std::string& buf, const Vector& v) {
    for (Index i = 0; i < v.size(); ++i) {
        const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v[i]));
        char b[8];
        std::memcpy(b, &bits, 8);
        buf.append(b, 8);
    }
}

inline Vector read_doubles(const std::string& buf, std::size_t offset, Index count) {
    Vector v(count);
    for (Index i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, buf.data() + offset + 8 * static_cast<std::size_t>(i), 8);
        v[i] = std::bit_cast<double>(to_le(bits));
    }
    return v;
}

inline void write_file(const fs::path& p, const std::string& content, bool binary) {
    std::ofstream out(p, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw IoError("cannot open '" + p.string() + "' for writing: " + std::strerror(errno));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw IoError("error while writing '" + p.string() + "': " + std::strerror(errno));
}

inline std::string read_file(const fs::path& p, bool binary) {
    std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open '" + p.string() + "' for reading: " + std::strerror(errno));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_tt(const std::string& type, const std::vector<Index>& rows, const std::vector<Index>* cols,
                     const std::vector<Index>& ranks, const std::vector<const Core3*>& cores,
                     const fs::path& manifest) {
    const fs::path blob = blob_path(manifest);
    json j;
    j["type"] = type;
    j["mode_sizes"] = rows;
    if (cols) j["col_sizes"] = *cols;
    j["ranks"] = ranks;
    j["dtype"] = "f64le";
    j["core_order"] = "left_rank_fastest";
    j["blob"] = blob.filename().string();
    std::string buf;
    for (const Core3* c : cores) append_doubles(buf, c->data());
    write_file(blob, buf, true);
    write_file(manifest, j.dump(2) + "\n", false);
}

inline std::vector<Index> index_list(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw FormatError(std::string("TT manifest: missing array '") + key + "'");
    std::vector<Index> v;
    for (const auto& e : j[key]) {
        if (!e.is_number_integer() || e.get<long long>() < 1)
            throw FormatError(std::string("TT manifest: '") + key + "' must hold positive integers");
        v.push_back(static_cast<Index>(e.get<long long>()));
    }
    return v;
}

inline std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw FormatError(std::string("TT manifest: missing string '") + key + "'");
    return j[key].get<std::string>();
}

} // namespace detail

inline void tt_io_write(const TTVector& x, const fs::path& manifest) {
    std::vector<const Core3*> cores;
    for (const auto& c : x.cores()) cores.push_back(&c);
    detail::write_tt("ttvector", x.mode_sizes(), nullptr, x.ranks(), cores, manifest);
}

inline void tt_io_write(const TTMatrix& a, const fs::path& manifest) {
    std::vector<const Core3*> cores;
    for (const auto& c : a.cores()) cores.push_back(&c.flat());
    const auto cols = a.col_sizes();
    detail::write_tt("ttmatrix", a.row_sizes(), &cols, a.ranks(), cores, manifest);
}

inline TTObject tt_io_read(const fs::path& manifest) {
    json j;
    try {
        j = json::parse(detail::read_file(manifest, false));
    } catch (const json::parse_error& e) {
        throw FormatError("TT manifest '" + manifest.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw FormatError("TT manifest: top level must be an object");
    const std::string type = detail::string_field(j, "type");
    if (type != "ttvector" && type != "ttmatrix") throw FormatError("TT manifest: unknown type '" + type + "'");
    const std::string dtype = detail::string_field(j, "dtype");
    if (dtype != "f64le") throw FormatError("TT manifest: unsupported dtype '" + dtype + "'");
    const std::string order = detail::string_field(j, "core_order");
    if (order != "left_rank_fastest") throw FormatError("TT manifest: unsupported core_order '" + order + "'");
    const auto rows = detail::index_list(j, "mode_sizes");
    const auto ranks = detail::index_list(j, "ranks");
    const Index d = static_cast<Index>(rows.size());
    if (d == 0) throw FormatError("TT manifest: empty mode_sizes");
    if (static_cast<Index>(ranks.size()) != d + 1) throw FormatError("TT manifest: ranks must have d+1 entries");
    if (ranks.front() != 1 || ranks.back() != 1) throw FormatError("TT manifest: boundary ranks must be 1");
    std::vector<Index> cols = rows;
    if (type == "ttmatrix") {
        cols = detail::index_list(j, "col_sizes");
        if (static_cast<Index>(cols.size()) != d) throw FormatError("TT manifest: col_sizes must have d entries");
    }
    const fs::path blob = j.contains("blob") && j["blob"].is_string()
                              ? manifest.parent_path() / j["blob"].get<std::string>()
                              : detail::blob_path(manifest);
    const std::string buf = detail::read_file(blob, true);
    std::size_t expected = 0;
    for (Index k = 0; k < d; ++k)
        expected += 8 * static_cast<std::size_t>(ranks[k] * rows[k] * (type == "ttmatrix" ? cols[k] : 1) * ranks[k + 1]);
    if (buf.size() != expected)
        throw SizeMismatch("TT blob '" + blob.string() + "' holds " + std::to_string(buf.size()) +
                           " bytes, manifest requires " + std::to_string(expected));
    std::size_t off = 0;
    if (type == "ttvector") {
        std::vector<Core3> cores;
        for (Index k = 0; k < d; ++k) {
            Core3 c(ranks[k], rows[k], ranks[k + 1]);
            c.data() = detail::read_doubles(buf, off, c.size());
            off += 8 * static_cast<std::size_t>(c.size());
            cores.push_back(std::move(c));
        }
        return TTVector(std::move(cores));
    }
    std::vector<Core4> cores;
    for (Index k = 0; k < d; ++k) {
        Core3 c(ranks[k], rows[k] * cols[k], ranks[k + 1]);
        c.data() = detail::read_doubles(buf, off, c.size());
        off += 8 * static_cast<std::size_t>(c.size());
        cores.emplace_back(std::move(c), rows[k], cols[k]);
    }
    return TTMatrix(std::move(cores));
}

inline TTVector read_ttvector(const fs::path& manifest) {
    auto obj = tt_io_read(manifest);
    if (auto* v = std::get_if<TTVector>(&obj)) return std::move(*v);
    throw FormatError("'" + manifest.string() + "' holds a ttmatrix, expected a ttvector");
}

inline TTMatrix read_ttmatrix(const fs::path& manifest) {
    auto obj = tt_io_read(manifest);
    if (auto* m = std::get_if<TTMatrix>(&obj)) return std::move(*m);
    throw FormatError("'" + manifest.string() + "' holds a ttvector, expected a ttmatrix");
}

// ---- logs ------------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char b[32];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

inline std::string log_csv(const ConvergenceLog& log) {
    std::string s = "sweep,wall_time_s,rel_residual,a_norm_error,max_rank,local_converged\n";
    for (const auto& r : log.sweeps) {
        s += std::to_string(r.sweep) + "," + format_double(r.wall_time) + "," + format_double(r.rel_residual) + ",";
        if (r.a_norm_error) s += format_double(*r.a_norm_error);
        s += "," + std::to_string(r.max_rank) + "," + (r.local_converged ? "1" : "0") + "\n";
    }
    return s;
}

inline void write_log(const ConvergenceLog& log, const fs::path& path) { detail::write_file(path, log_csv(log), false); }

/// Parsed CSV log rows; an empty a_norm_error field becomes nullopt.
inline std::vector<SweepRecord> read_log(const fs::path& path) {
    std::istringstream in(detail::read_file(path, false));
    std::string line;
    if (!std::getline(in, line) || line != "sweep,wall_time_s,rel_residual,a_norm_error,max_rank,local_converged")
        throw FormatError("log '" + path.string() + "': unexpected header");
    std::vector<SweepRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 6) throw FormatError("log '" + path.string() + "': row with " + std::to_string(f.size()) + " fields");
        SweepRecord r;
        try {
            r.sweep = std::stoi(f[0]);
            r.wall_time = std::stod(f[1]);
            r.rel_residual = std::stod(f[2]);
            if (!f[3].empty()) r.a_norm_error = std::stod(f[3]);
            r.max_rank = std::stoll(f[4]);
            r.local_converged = f[5] == "1";
        } catch (const std::exception&) {
            throw FormatError("log '" + path.string() + "': malformed row '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

inline json json_number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline json to_json(const SolverConfig& c) {
    json j;
    j["tol"] = c.tol;
    j["max_sweeps"] = c.max_sweeps;
    j["enrichment"] = to_string(c.enrichment);
    j["kickrank"] = c.kickrank;
    j["max_rank"] = c.max_rank ? json(*c.max_rank) : json(nullptr);
    j["truncation"] = c.truncation == Truncation::none ? "none" : c.truncation == Truncation::frobenius ? "frobenius" : "residual";
    j["symmetrize"] = c.symmetrize;
    j["stop_on_local"] = c.stop_on_local;
    j["seed"] = c.seed;
    j["local_solver"] = {{"kind", c.local.kind == LocalSolverKind::automatic ? "automatic"
                                  : c.local.kind == LocalSolverKind::direct  ? "direct"
                                                                             : "iterative"},
                         {"dense_cap", c.local.dense_cap},
                         {"max_iterations", c.local.max_iterations},
                         {"rtol", c.local.rtol < 0 ? json(c.tol / 10) : json(c.local.rtol)}};
    return j;
}

inline json to_json(const SweepRecord& r) {
    json j;
    j["sweep"] = r.sweep;
    j["wall_time_s"] = r.wall_time;
    j["rel_residual"] = json_number(r.rel_residual);
    j["a_norm_error"] = r.a_norm_error ? json_number(*r.a_norm_error) : json(nullptr);
    j["max_rank"] = r.max_rank;
    j["local_converged"] = r.local_converged;
    j["max_local_residual"] = json_number(r.max_local_residual);
    json cores = json::array();
    for (const auto& c : r.cores) {
        cores.push_back({{"core", c.core},
                         {"local_residual_in", json_number(c.local_residual_in)},
                         {"local_residual_out", json_number(c.local_residual_out)},
                         {"iterations", c.iterations},
                         {"direct", c.direct},
                         {"fallback", c.fallback},
                         {"enrichment_width", c.enrichment_width},
                         {"mu_surrogate", json_number(c.mu_surrogate)},
                         {"omega_surrogate", json_number(c.omega_surrogate)}});
    }
    j["cores"] = std::move(cores);
    return j;
}

inline json to_json(const ConvergenceLog& log) {
    json j;
    j["method"] = log.method;
    j["status"] = to_string(log.status);
    j["final_rel_residual"] = json_number(log.final_residual());
    j["sweeps"] = json::array();
    for (const auto& r : log.sweeps) j["sweeps"].push_back(to_json(r));
    j["notices"] = log.notices;
    return j;
}

inline void write_json(const json& j, const fs::path& path) { detail::write_file(path, j.dump(2) + "\n", false); }

} // namespace ttamen
