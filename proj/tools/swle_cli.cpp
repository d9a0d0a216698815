// swle: robust GLM fitting and misspecification diagnostics from the command line.
#include "swle/dataset.hpp"
#include "swle/simlab.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace swle;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kParse = 2, kNoConvergence = 3, kSingular = 4 };

struct Args {
    std::string data, config, family, link, grid, out_dir = ".";
    std::string delta;
    double alpha = -1;
    int k0 = 0;  // 1-based when set
    std::int64_t seed = -1;
    int jobs = 1;
    bool deterministic = false;
    bool log_response = false;
};

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

json load_config(const Args& a, std::string& raw) {
    if (a.config.empty()) return json::object();
    raw = read_text(a.config);
    try {
        return json::parse(raw);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParseError("not a number in list: '" + tok + "'");
        }
    }
    if (out.empty()) throw ParseError("empty list");
    return out;
}

struct Model {
    FamilyId family;
    LinkId link;
};

Model model_of(const Args& a, const json& cfg) {
    std::string f = !a.family.empty() ? a.family : cfg.value("family", std::string("gamma"));
    FamilyId fid = parse_family(f);
    std::string l = !a.link.empty() ? a.link : cfg.value("link", fid == FamilyId::Normal ? "canonical" : "log");
    return {fid, parse_link(l)};
}

std::uint64_t seed_of(const Args& a, const json& cfg) {
    if (a.seed >= 0) return static_cast<std::uint64_t>(a.seed);
    return cfg.value("seed", std::uint64_t{1});
}

WeightSpec spec_from_json(const json& j) {
    if (j.value("mode", std::string("weighted")) == "mle") return WeightSpec::mle();
    auto b = j.at("beta_tilde").get<std::vector<double>>();
    return WeightSpec::weighted(Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size())),
                                j.at("phi_tilde").get<double>());
}

// Grid from an explicit spec list, or deltas calibrated at the MLE.
struct GridChoice {
    std::vector<WeightSpec> explicit_specs;
    std::vector<double> deltas;
    double alpha = 0.99;
};

GridChoice grid_of(const Args& a, const json& cfg) {
    GridChoice g;
    json gj;
    if (!a.grid.empty()) {
        try {
            gj = fs::exists(a.grid) ? json::parse(read_text(a.grid)) : json::parse(a.grid);
        } catch (const json::exception& e) {
            throw ParseError(std::string("grid: ") + e.what());
        }
    } else if (cfg.contains("grid")) {
        gj = cfg["grid"];
    }
    if (gj.is_array()) {
        for (const auto& e : gj) g.explicit_specs.push_back(spec_from_json(e));
    } else if (gj.is_object()) {
        g.alpha = gj.value("alpha", 0.99);
        if (gj.contains("deltas")) g.deltas = gj["deltas"].get<std::vector<double>>();
    }
    if (!a.delta.empty()) g.deltas = parse_list(a.delta);
    if (a.alpha > 0) g.alpha = a.alpha;
    if (g.explicit_specs.empty() && g.deltas.empty()) g.deltas = {1.0};
    return g;
}

struct Loaded {
    FitInput input;
    int dropped = 0;
    std::vector<ObservationRecord> records;
};

Loaded load_data(const Args& a, const EdmFamily& fam) {
    if (a.data.empty()) throw ParseError("--data is required");
    DatasetReadOptions ro;
    ro.log_response = a.log_response;
    ro.positive_support = fam.id() != FamilyId::Normal;
    Dataset ds = read_dataset_file(a.data, ro);
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.records[i].exact && !fam.in_support(ds.records[i].y))
            throw ParseError("data row " + std::to_string(i + 1) + ": response outside the " + fam.name() + " support");
    validate_records(fam, ds.records, static_cast<int>(ds.records[0].x.size()));
    Loaded l;
    l.records = ds.records;
    l.input = as_fit_input(fam, ds.records);
    return l;
}

struct Calibrated {
    std::vector<WeightSpec> specs;
    json info;
};

Calibrated resolve_specs(const GridChoice& g, const EdmFamily& fam, const LinkSpec& link, const Loaded& l,
                         std::uint64_t seed, std::size_t mc_size) {
    Calibrated c;
    if (!g.explicit_specs.empty()) {
        c.specs = g.explicit_specs;
        c.info = {{"source", "explicit"}};
        return c;
    }
    FitOptions fo;
    fo.compute_covariance = false;
    FitResult mle = fit_any(fam, link, WeightSpec::mle(), l.input, fo);
    c.info = {{"source", "calibrated"},
              {"alpha", g.alpha},
              {"mle_plugin", to_json(mle)},
              {"method", std::holds_alternative<GlmData>(l.input) ? "monte_carlo" : "semi_analytic"}};
    for (std::size_t k = 0; k < g.deltas.size(); ++k) {
        CalibrationInfo info;
        WeightSpec s;
        if (auto d = std::get_if<GlmData>(&l.input))
            s = calibrate_complete(fam, link, mle.params.beta, mle.params.phi, d->X, g.alpha, g.deltas[k],
                                   derive_seed(seed, k), mc_size, &info);
        else
            s = calibrate_censored(fam, link, mle.params.beta, mle.params.phi, l.records, g.alpha, g.deltas[k], &info);
        c.specs.push_back(s);
        c.info["settings"].push_back({{"delta", g.deltas[k]},
                                      {"spec", to_json(s)},
                                      {"q_alpha", info.q_alpha},
                                      {"free_parameter", info.free_parameter},
                                      {"achieved_ratio", info.achieved_ratio}});
    }
    return c;
}

FitOptions fit_options(const json& cfg) {
    FitOptions fo;
    fo.tol = cfg.value("tol", fo.tol);
    fo.param_tol = cfg.value("param_tol", fo.param_tol);
    fo.max_iter = cfg.value("max_iter", fo.max_iter);
    return fo;
}

json provenance(const std::string& cmd, const std::string& raw_cfg, const Args& a, std::uint64_t seed) {
    std::string basis = raw_cfg + "|" + a.family + "|" + a.link + "|" + a.grid + "|" + a.delta + "|" +
                        std::to_string(a.alpha) + "|" + std::to_string(a.log_response);
    return {{"command", cmd}, {"config_hash", fnv1a_hex(basis)}, {"seed", seed}};
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream f(p);
    if (!f) throw DomainError("cannot write '" + p.string() + "'");
    f << text;
}

int cmd_fit(const Args& a) {
    std::string raw;
    json cfg = load_config(a, raw);
    Model m = model_of(a, cfg);
    EdmFamily fam(m.family);
    LinkSpec link(m.family, m.link);
    Loaded l = load_data(a, fam);
    std::uint64_t seed = seed_of(a, cfg);
    GridChoice g = grid_of(a, cfg);
    Calibrated c = resolve_specs(g, fam, link, l, seed, cfg.value("mc_size", std::size_t{1000000}));
    json out = provenance("fit", raw, a, seed);
    out["family"] = fam.name();
    out["link"] = link.name();
    out["n"] = input_size(l.input);
    out["calibration"] = c.info;
    std::ostringstream csv;
    csv << std::setprecision(12) << "k,parameter,estimate,se\n";
    FitOptions fo = fit_options(cfg);
    for (std::size_t k = 0; k < c.specs.size(); ++k) {
        FitResult r = fit_any(fam, link, c.specs[k], l.input, fo);
        fo.init = r.params;
        out["fits"].push_back(to_json(r));
        Vec est = r.params.packed();
        for (int p = 0; p < est.size(); ++p) {
            std::string name = p + 1 < est.size() ? "beta" + std::to_string(p + 1) : "phi";
            csv << k + 1 << ',' << name << ',' << est(p) << ',' << std::sqrt(std::max(0.0, r.covariance(p, p)))
                << '\n';
        }
    }
    fs::path dir(a.out_dir);
    write_file(dir / "fit.json", out.dump(2));
    write_file(dir / "params.csv", csv.str());
    std::cout << csv.str();
    return kOk;
}

int cmd_diagnose(const Args& a) {
    std::string raw;
    json cfg = load_config(a, raw);
    Model m = model_of(a, cfg);
    EdmFamily fam(m.family);
    LinkSpec link(m.family, m.link);
    Loaded l = load_data(a, fam);
    std::uint64_t seed = seed_of(a, cfg);
    GridChoice g = grid_of(a, cfg);
    Calibrated c = resolve_specs(g, fam, link, l, seed, cfg.value("mc_size", std::size_t{1000000}));
    HyperGrid grid(c.specs);
    if (grid.K() < 2) throw ParseError("diagnose needs at least two weight settings");
    DiagnoseOptions dopt;
    dopt.k0 = (a.k0 > 0 ? a.k0 : cfg.value("k0", 1)) - 1;
    if (dopt.k0 < 0 || dopt.k0 >= grid.K()) throw ParseError("k0 out of range");
    dopt.fit = fit_options(cfg);
    MetaWaldReport rep = diagnose(fam, link, grid, l.input, dopt);
    json out = to_json(rep);
    out["provenance"] = provenance("diagnose", raw, a, seed);
    out["family"] = fam.name();
    out["link"] = link.name();
    out["calibration"] = c.info;
    fs::path dir(a.out_dir);
    write_file(dir / "report.json", out.dump(2));
    std::string text = text_report(rep);
    write_file(dir / "report.txt", text);
    std::cout << text;
    return kOk;
}

int cmd_calibrate(const Args& a) {
    std::string raw;
    json cfg = load_config(a, raw);
    std::uint64_t seed = seed_of(a, cfg);
    GridChoice g = grid_of(a, cfg);
    json out = provenance("calibrate", raw, a, seed);
    if (!a.data.empty()) {
        Model m = model_of(a, cfg);
        EdmFamily fam(m.family);
        LinkSpec link(m.family, m.link);
        Loaded l = load_data(a, fam);
        Calibrated c = resolve_specs(g, fam, link, l, seed, cfg.value("mc_size", std::size_t{1000000}));
        out["calibration"] = c.info;
    } else if (cfg.contains("design")) {
        SimDesign d = design_from_json(cfg["design"]);
        StudyGrid sg = calibrate_study(d, g.deltas, g.alpha, cfg.value("mc_size", std::size_t{1000000}), seed);
        out["design"] = to_json(d);
        for (std::size_t k = 0; k < sg.deltas.size(); ++k)
            out["settings"].push_back({{"delta", sg.deltas[k]},
                                       {"spec", to_json(sg.grid[static_cast<int>(k)])},
                                       {"q_alpha", sg.info[k].q_alpha},
                                       {"free_parameter", sg.info[k].free_parameter},
                                       {"achieved_ratio", sg.info[k].achieved_ratio}});
    } else {
        throw ParseError("calibrate needs --data or a config with a design");
    }
    write_file(fs::path(a.out_dir) / "calibration.json", out.dump(2));
    std::cout << out.dump(2) << '\n';
    return kOk;
}

int cmd_simulate(const Args& a) {
    std::string raw;
    json cfg = load_config(a, raw);
    if (!cfg.contains("design")) throw ParseError("simulate needs a config with a 'design' object");
    SimDesign d = design_from_json(cfg["design"]);
    if (a.seed >= 0) d.seed = static_cast<std::uint64_t>(a.seed);
    std::vector<double> deltas;
    if (!a.delta.empty()) deltas = parse_list(a.delta);
    else if (cfg.contains("deltas")) deltas = cfg["deltas"].get<std::vector<double>>();
    else deltas = delta_grid(cfg.value("K", 2));
    double alpha = a.alpha > 0 ? a.alpha : cfg.value("alpha", 0.99);
    StudyGrid sg = calibrate_study(d, deltas, alpha, cfg.value("mc_size", std::size_t{1000000}),
                                   cfg.value("calibration_seed", std::uint64_t{20240101}));
    StudyOptions so;
    so.B = cfg.value("B", 10);
    so.level = cfg.value("level", 0.05);
    so.jobs = a.deterministic ? 1 : a.jobs;
    so.diagnostics = cfg.value("diagnostics", true);
    so.fit = fit_options(cfg);
    ReplicationSummary s = run_study(d, sg, so);
    json out = to_json(s);
    out["provenance"] = provenance("simulate", raw, a, d.seed);
    out["design"] = to_json(d);
    fs::path dir(a.out_dir);
    write_file(dir / "summary.json", out.dump(2));
    write_file(dir / "summary.csv", summary_csv(s));
    if (cfg.value("export_replication", false)) {
        std::ostringstream os;
        write_dataset(os, generate(d, 0));
        write_file(dir / "replication_0.csv", os.str());
    }
    std::cout << summary_csv(s);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-based weighted likelihood estimation for GLMs"};
    app.require_subcommand(1);
    Args a;
    auto common = [&](CLI::App* sc) {
        sc->add_option("--config", a.config, "JSON run configuration");
        sc->add_option("--seed", a.seed, "master seed");
        sc->add_option("--out-dir", a.out_dir, "output directory");
        sc->add_option("--alpha", a.alpha, "tail level for calibration");
        sc->add_option("--delta", a.delta, "comma-separated tail-weight ratios");
    };
    auto data_opts = [&](CLI::App* sc) {
        sc->add_option("--data", a.data, "CSV dataset");
        sc->add_option("--family", a.family, "gamma | normal | invgauss");
        sc->add_option("--link", a.link, "canonical | log");
        sc->add_option("--grid", a.grid, "JSON list of weight settings (inline or file)");
        sc->add_flag("--log-response", a.log_response, "log-transform y and the limits");
    };
    auto* fit = app.add_subcommand("fit", "fit one or more weight settings");
    common(fit);
    data_opts(fit);
    auto* diag = app.add_subcommand("diagnose", "Wald diagnostics across weight settings");
    common(diag);
    data_opts(diag);
    diag->add_option("--k0", a.k0, "benchmark setting for residuals (1-based)");
    auto* cal = app.add_subcommand("calibrate", "weight hyperparameters from tail-weight ratios");
    common(cal);
    data_opts(cal);
    auto* sim = app.add_subcommand("simulate", "replication study");
    common(sim);
    sim->add_option("--jobs", a.jobs, "worker threads");
    sim->add_flag("--deterministic", a.deterministic, "sequential run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kParse;
    }
    try {
        if (*fit) return cmd_fit(a);
        if (*diag) return cmd_diagnose(a);
        if (*cal) return cmd_calibrate(a);
        return cmd_simulate(a);
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNoConvergence;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSingular;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kParse;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kParse;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
}
