#include "swle/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace swle {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field");
    out.push_back(cur);
    return out;
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// empty -> fallback
double parse_number(const std::string& raw, double fallback, int line, const std::string& col) {
    std::string s = trim(raw);
    if (s.empty()) return fallback;
    if (s == "inf" || s == "Inf" || s == "+inf") return kInf;
    if (s == "-inf" || s == "-Inf") return -kInf;
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("line " + std::to_string(line) + ", column '" + col + "': not a number: '" + s + "'");
    return v;
}

std::string format_number(double v) {
    if (std::isinf(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Dataset read_dataset(std::istream& in, const DatasetReadOptions& opt) {
    Dataset ds;
    std::string line;
    int lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw ParseError("dataset is empty");
    std::map<std::string, int> col;
    std::vector<int> xcols;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        std::string h = trim(header[i]);
        if (col.count(h)) throw ParseError("duplicate column '" + h + "'");
        col[h] = i;
        if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) {
            xcols.push_back(i);
            ds.covariate_names.push_back(h);
        }
    }
    if (!col.count("y")) throw ParseError("missing column 'y'");
    if (xcols.empty()) throw ParseError("no covariate columns (x1, x2, ...)");
    auto get = [&](const std::vector<std::string>& f, const char* name) -> std::string {
        auto it = col.find(name);
        if (it == col.end() || it->second >= static_cast<int>(f.size())) return "";
        return f[it->second];
    };
    bool warned = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_line(line);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (f.size() != header.size())
            throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(f.size()));
        auto fail = [&](const std::string& what) { throw ParseError("line " + std::to_string(lineno) + ": " + what); };
        ObservationRecord r;
        r.x.resize(xcols.size());
        for (std::size_t j = 0; j < xcols.size(); ++j) {
            if (trim(f[xcols[j]]).empty()) fail("empty covariate '" + header[xcols[j]] + "'");
            r.x(j) = parse_number(f[xcols[j]], 0.0, lineno, header[xcols[j]]);
        }
        std::string status = trim(get(f, "status"));
        if (status.empty()) status = "exact";
        if (status != "exact" && status != "censored") fail("status must be 'exact' or 'censored', got '" + status + "'");
        std::string ys = trim(get(f, "y"));
        double tlo_default = -kInf;
        if (opt.positive_support && trim(get(f, "trunc_lo")).empty()) {
            tlo_default = 0.0;
            if (!warned && col.count("trunc_lo")) {
                ds.warnings.push_back("empty trunc_lo read as 0 for a positive-support family");
                warned = true;
            }
        }
        Interval T{parse_number(get(f, "trunc_lo"), tlo_default, lineno, "trunc_lo"),
                   parse_number(get(f, "trunc_hi"), kInf, lineno, "trunc_hi")};
        std::string clo = trim(get(f, "cens_lo")), chi = trim(get(f, "cens_hi"));
        bool has_cens = !clo.empty() || !chi.empty();
        Interval I{parse_number(clo, -kInf, lineno, "cens_lo"), parse_number(chi, kInf, lineno, "cens_hi")};
        double y = 0.0;
        if (status == "exact") {
            if (ys.empty()) fail("exact row without a response");
            y = parse_number(ys, 0.0, lineno, "y");
        } else {
            if (!ys.empty()) fail("censored row must leave y empty");
            if (!has_cens) fail("censored row without a censoring interval");
        }
        if (opt.log_response) {
            auto lg = [](double v) { return v == 0.0 ? -kInf : (std::isinf(v) ? v : std::log(v)); };
            if (status == "exact") {
                if (!(y > 0)) fail("log transform needs a positive response");
                y = std::log(y);
            }
            if (T.lo < 0 || I.lo < 0) fail("log transform needs nonnegative truncation and censoring points");
            T = {lg(T.lo), lg(T.hi)};
            I = {lg(I.lo), lg(I.hi)};
        }
        if (T.empty()) fail("empty truncation interval");
        r.scheme.truncation = T;
        if (has_cens) {
            if (I.empty()) fail("empty censoring interval");
            if (I.lo < T.lo || I.hi > T.hi) fail("censoring interval outside the truncation interval");
            if (I.hi == T.hi) r.scheme.uncensored = {T.lo, I.lo};
            else if (I.lo == T.lo) r.scheme.uncensored = {I.hi, T.hi};
            else fail("censoring interval must share an endpoint with the truncation interval");
            r.scheme.censor_intervals = {I};
        } else {
            r.scheme.uncensored = T;
        }
        if (status == "exact") {
            r.exact = true;
            r.y = y;
            if (!r.scheme.uncensored.contains(y)) fail("exact response outside its observable region");
        } else {
            r.exact = false;
            r.censored_index = 0;
        }
        ds.records.push_back(std::move(r));
    }
    if (ds.records.empty()) throw ParseError("dataset has no rows");
    return ds;
}

Dataset read_dataset_file(const std::string& path, const DatasetReadOptions& opt) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    return read_dataset(f, opt);
}

void write_dataset(std::ostream& out, const std::vector<ObservationRecord>& records) {
    if (records.empty()) throw DomainError("no records to write");
    const int P = static_cast<int>(records[0].x.size());
    out << "y";
    for (int j = 0; j < P; ++j) out << ",x" << j + 1;
    out << ",trunc_lo,trunc_hi,cens_lo,cens_hi,status\n";
    for (const auto& r : records) {
        if (r.scheme.censor_intervals.size() > 1) throw DomainError("only one censoring interval per row is supported");
        out << (r.exact ? format_number(r.y) : "");
        for (int j = 0; j < P; ++j) out << ',' << format_number(r.x(j));
        out << ',' << format_number(r.scheme.truncation.lo) << ',' << format_number(r.scheme.truncation.hi);
        if (r.scheme.censor_intervals.empty()) {
            out << ",,";
        } else {
            const Interval& I = r.scheme.censor_intervals[0];
            // an unbounded censoring interval needs at least one visible endpoint
            out << ',' << (std::isinf(I.lo) ? "-inf" : format_number(I.lo)) << ','
                << (std::isinf(I.hi) ? "" : format_number(I.hi));
        }
        out << ',' << (r.exact ? "exact" : "censored") << '\n';
    }
}

void write_dataset_file(const std::string& path, const std::vector<ObservationRecord>& records) {
    std::ofstream f(path);
    if (!f) throw DomainError("cannot write '" + path + "'");
    write_dataset(f, records);
}

}  // namespace swle
