// Batch experiment runner: one subcommand per experiment, each writing <command>.csv and
// <command>.svg into --out. Exit 0 when the embedded checks pass, 1 when they fail, 2 on a
// usage or configuration error.

#include "CLI11.hpp"
#include "fgt/experiments.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

using namespace fgt;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string command;
    std::string config;
    std::string out = "out";
    std::string checkpoint;
    std::string queries;
    std::uint64_t seed = 1;
    bool seed_given = false;
    bool force = false;
    bool full_scale = false;
};

nlohmann::json load_config(const Options& o) {
    if (o.config.empty()) return nlohmann::json::object();
    try {
        auto j = read_json_file(o.config);
        if (!j.is_object()) throw UsageError("config " + o.config + " must hold a JSON object");
        return j;
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string config_hash(const Options& o, const nlohmann::json& cfg) {
    return hex64(fnv1a(o.command + '|' + cfg.dump() + '|' + (o.full_scale ? "full" : "desk")));
}

// ---- output -------------------------------------------------------------------------------

class Outputs {
public:
    Outputs(const Options& o, const nlohmann::json& cfg) : o_(o), hash_(config_hash(o, cfg)) {
        fs::create_directories(o.out);
        for (const char* ext : {".csv", ".svg"}) {
            const auto p = path(ext);
            if (fs::exists(p) && !o.force) throw UsageError(p.string() + " exists; pass --force to overwrite");
        }
    }

    [[nodiscard]] fs::path path(const std::string& suffix) const { return fs::path(o_.out) / (o_.command + suffix); }

    void header(std::ostream& os) const { os << "# config_hash=" << hash_ << ",seed=" << o_.seed << '\n'; }

    void csv(const Table& t) const {
        std::ofstream os(path(".csv"));
        header(os);
        for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
        os << '\n';
        os.precision(12);
        for (const auto& r : t.rows) {
            for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << r[c];
            os << '\n';
        }
    }

private:
    const Options& o_;
    std::string hash_;
};

struct PlotSpec {
    std::string title;
    std::size_t x = 0;
    std::vector<std::size_t> ys{1};
    bool log_x = false, log_y = false;
    bool bars = false;
    std::vector<std::string> labels;  // bar labels, one per row
};

/// Hand-written SVG: axes, min/max tick labels and one polyline (or bar set) per series.
void write_svg(const fs::path& path, const Table& t, const PlotSpec& p) {
    constexpr double W = 560, H = 360, L = 70, R = 20, T = 40, B = 50;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    auto tx = [&](double v) { return p.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return p.log_y ? std::log10(std::max(v, 1e-300)) : v; };

    double x0 = 0, x1 = 1, y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
    if (!p.bars && !t.rows.empty()) {
        x0 = tx(t.rows.front()[p.x]);
        x1 = x0;
        for (const auto& r : t.rows) {
            x0 = std::min(x0, tx(r[p.x]));
            x1 = std::max(x1, tx(r[p.x]));
        }
    }
    for (const auto& r : t.rows)
        for (std::size_t c : p.ys) {
            if (p.log_y && r[c] <= 0.0) continue;
            y0 = std::min(y0, ty(r[c]));
            y1 = std::max(y1, ty(r[c]));
        }
    if (!std::isfinite(y0)) y0 = 0, y1 = 1;
    if (p.bars && !p.log_y) y0 = std::min(y0, 0.0);
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };
    auto label = [&](double v, bool log) {
        std::ostringstream s;
        s << std::setprecision(3) << (log ? std::pow(10.0, v) : v);
        return s.str();
    };

    std::ofstream os(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << p.title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << L - 5 << "\" y=\"" << py(y0) << "\" text-anchor=\"end\">" << label(y0, p.log_y) << "</text>\n";
    os << "<text x=\"" << L - 5 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\">" << label(y1, p.log_y) << "</text>\n";

    if (p.bars) {
        const double slot = (W - L - R) / static_cast<double>(std::max<std::size_t>(t.rows.size(), 1));
        const double bw = slot * 0.8 / static_cast<double>(p.ys.size());
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            for (std::size_t s = 0; s < p.ys.size(); ++s) {
                const double v = ty(t.rows[i][p.ys[s]]);
                const double left = L + slot * (static_cast<double>(i) + 0.1) + bw * static_cast<double>(s);
                const double base = p.log_y ? y0 : 0.0;
                os << "<rect x=\"" << left << "\" y=\"" << std::min(py(v), py(base)) << "\" width=\"" << bw
                   << "\" height=\"" << std::abs(py(base) - py(v)) << "\" fill=\"" << colors[s % 4] << "\"/>\n";
            }
            const std::string name = i < p.labels.size() ? p.labels[i] : std::to_string(i);
            os << "<text x=\"" << L + slot * (static_cast<double>(i) + 0.5) << "\" y=\"" << H - B + 15
               << "\" text-anchor=\"middle\">" << name << "</text>\n";
        }
    } else {
        os << "<text x=\"" << px(x0) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << label(x0, p.log_x) << "</text>\n";
        os << "<text x=\"" << px(x1) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << label(x1, p.log_x) << "</text>\n";
        for (std::size_t s = 0; s < p.ys.size(); ++s) {
            os << "<polyline fill=\"none\" stroke=\"" << colors[s % 4] << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& r : t.rows) {
                if (p.log_y && r[p.ys[s]] <= 0.0) continue;
                os << px(tx(r[p.x])) << ',' << py(ty(r[p.ys[s]])) << ' ';
            }
            os << "\"/>\n";
        }
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << t.columns[p.x] << "</text>\n";
    double legend_y = T + 5;
    for (std::size_t s = 0; s < p.ys.size(); ++s, legend_y += 14)
        os << "<text x=\"" << W - R - 5 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" fill=\"" << colors[s % 4] << "\">"
           << t.columns[p.ys[s]] << "</text>\n";
    os << "</svg>\n";
}

int report(const Options& o, const Table& t) {
    std::cout << o.command << ": " << (t.pass ? "PASS" : "FAIL") << " (" << t.summary << ")\n";
    return t.pass ? 0 : 1;
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    try {
        return j.value(key, fallback);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config key '") + key + "': " + e.what());
    }
}

// ---- training helpers ------------------------------------------------------------------------

TrainConfig train_config(const Options& o, const nlohmann::json& cfg, TrainMode fallback_mode) {
    TrainMode mode = fallback_mode;
    try {
        if (cfg.contains("mode")) mode = parse_train_mode(cfg.at("mode").get<std::string>());
        auto c = TrainConfig::from_json(cfg, o.full_scale ? TrainConfig::full_scale(mode) : TrainConfig::desk(mode));
        if (o.seed_given) c.seed = o.seed;
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad training config: ") + e.what());
    } catch (const Error& e) {
        throw UsageError(std::string("bad training config: ") + e.what());
    }
}

void progress(std::size_t step, double loss) {
    if (step % 200 == 0) std::cerr << "step " << step << " loss " << loss << '\n';
}

Checkpoint checkpoint_file(const std::string& path) {
    try {
        return load_checkpoint(read_json_file(path));
    } catch (const Error& e) {
        throw UsageError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad checkpoint: ") + e.what());
    }
}

/// The model named by --checkpoint, or a freshly trained one for the given config.
Checkpoint obtain_model(const Options& o, const TrainConfig& cfg, const FourierTeacher& teacher) {
    if (!o.checkpoint.empty()) return checkpoint_file(o.checkpoint);
    std::cerr << "no --checkpoint given; training the " << (o.full_scale ? "full-scale" : "desk") << ' '
              << mode_name(cfg.mode) << " model first\n";
    if (cfg.mode == TrainMode::query) {
        auto r = train(cfg, teacher, initial_query(cfg), progress);
        return {cfg, std::move(r.model), std::move(r.optimizer)};
    }
    auto r = train(cfg, teacher, initial_same_domain(cfg), progress);
    return {cfg, std::move(r.model), std::move(r.optimizer)};
}

// ---- commands ----------------------------------------------------------------------------

int cmd_w1(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    W1ConvergenceSpec s;
    s.sizes = get_or(cfg, "sizes", s.sizes);
    s.reference = get_or(cfg, "reference", s.reference);
    s.constant = get_or(cfg, "constant", s.constant);
    const auto t = w1_convergence(s);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"W1(M_N, M_ref) against N", 0, {1, 3}, true, true});
    return report(o, t);
}

int cmd_decode(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    DecodeSpec s;
    s.eps = get_or(cfg, "eps", s.eps);
    s.tokens = get_or(cfg, "tokens", s.tokens);
    const auto t = decode_convergence(s);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"interior sup error of F_eps against eps", 0, {1}, true, true});
    return report(o, t);
}

int cmd_spectral(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    SpectralSpec s;
    s.etas = get_or(cfg, "etas", s.etas);
    s.coefficients = get_or(cfg, "coefficients", s.coefficients);
    const auto t = spectral_convergence(s);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"L2 error of S_{eta,K(eta)} against eta", 0, {2}, true, true});
    return report(o, t);
}

int cmd_gradcheck(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    GradCheckSpec s;
    s.step = get_or(cfg, "step", s.step);
    s.tol = get_or(cfg, "tol", s.tol);
    s.seed = o.seed_given ? o.seed : s.seed;
    const auto t = gradcheck_experiment(s);
    out.csv(t);
    PlotSpec p{"max relative gradient error", 0, {2}, false, true, true, {"layer", "query loss"}};
    write_svg(out.path(".svg"), t, p);
    return report(o, t);
}

int cmd_crossattn(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    CrossAttnSpec s;
    s.instances = get_or(cfg, "instances", s.instances);
    s.max_atoms = get_or(cfg, "max_atoms", s.max_atoms);
    s.seed = o.seed_given ? o.seed : s.seed;
    const auto t = crossattn_check(s);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"relative error per instance", 0, {3}, false, false});
    return report(o, t);
}

int cmd_train(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    const auto ckpt_path = fs::path(o.out) / "checkpoint.json";
    if (fs::exists(ckpt_path) && !o.force) throw UsageError(ckpt_path.string() + " exists; pass --force to overwrite");
    const auto tc = train_config(o, cfg, TrainMode::same_domain);
    const FourierTeacher teacher(tc.teacher);
    Table t{{"step", "lr", "loss"}, {}, true, {}};
    auto run = [&](auto model) {
        auto r = train(tc, teacher, std::move(model), progress);
        for (const auto& h : r.history) t.rows.push_back({static_cast<double>(h.step), h.lr, h.loss});
        write_json_file(ckpt_path.string(), checkpoint_json(tc, r.model, r.optimizer));
        const auto m = evaluate(r.model, teacher, tc.sampler(), [&] {
            EvalSpec e;
            e.mode = tc.mode;
            e.n_points = tc.n_points;
            return e;
        }());
        t.summary = "held-out rel L2 mean " + num(m.mean_l2) + " +- " + num(m.half_width_l2);
    };
    if (tc.mode == TrainMode::query) run(initial_query(tc));
    else run(initial_same_domain(tc));
    out.csv(t);
    write_svg(out.path(".svg"), t, {"training loss", 0, {2}, false, true});
    return report(o, t);
}

int cmd_eval(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    if (o.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
    const auto ck = checkpoint_file(o.checkpoint);
    const FourierTeacher teacher(ck.config.teacher);
    EvalSpec e;
    e.mode = ck.config.mode;
    e.n_functions = get_or(cfg, "n_functions", e.n_functions);
    e.n_points = get_or(cfg, "n_points", ck.config.n_points);
    e.n_queries = get_or(cfg, "n_queries", e.n_queries);
    e.scheme = get_or(cfg, "scheme", e.scheme);
    try {
        SamplingScheme::parse(e.scheme);
    } catch (const Error& err) {
        throw UsageError(err.what());
    }
    const auto m = std::visit([&](const auto& model) { return evaluate(model, teacher, ck.config.sampler(), e); }, ck.model);
    Table t{{"function", "rel_l2", "rel_linf"}, {}, true, {}};
    for (std::size_t i = 0; i < m.rel_l2.size(); ++i) t.rows.push_back({static_cast<double>(i), m.rel_l2[i], m.rel_linf[i]});
    t.summary = "rel L2 mean " + num(m.mean_l2) + " +- " + num(m.half_width_l2) + ", median " +
                num(m.median_l2);
    out.csv(t);
    write_json_file((fs::path(o.out) / "eval.json").string(), m.to_json());
    write_svg(out.path(".svg"), t, {"per-function relative errors", 0, {1, 2}, false, false, true});

    // Optional predictions at user-supplied query points (query mode only).
    if (!o.queries.empty()) {
        const auto* qm = std::get_if<QueryModel>(&ck.model);
        if (!qm) throw UsageError("--queries needs a query-mode checkpoint");
        std::ifstream is(o.queries);
        if (!is) throw UsageError("cannot read " + o.queries);
        const Matrix q = read_query_csv(is, ck.config.model.d);
        const auto s = make_sample(teacher, ck.config.sampler(), e.seed, SamplingScheme::parse(e.scheme, e.seed),
                                   e.n_points, q, TrainMode::query);
        std::ofstream os(fs::path(o.out) / "predictions.csv");
        EvalOps ops;
        write_query_csv(os, q, predict(ops, *qm, s));
    }
    return report(o, t);
}

int cmd_resolution(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    const auto tc = train_config(o, cfg, TrainMode::query);
    const FourierTeacher teacher(tc.teacher);
    const auto ck = obtain_model(o, tc, teacher);
    const auto sizes = get_or(cfg, "sizes", std::vector<std::size_t>{32, 64, 128, 256});
    const auto n_functions = get_or(cfg, "n_functions", std::size_t{16});
    const auto slack = get_or(cfg, "slack", 0.05);
    const FourierTeacher ck_teacher(ck.config.teacher);
    const auto t = std::visit([&](const auto& m) { return resolution_transfer(m, ck.config, ck_teacher, sizes, n_functions, slack); },
                              ck.model);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"median rel L2 against input size N", 0, {1, 2}, true, true});
    return report(o, t);
}

int cmd_sampling(const Options& o, const nlohmann::json& cfg) {
    Outputs out(o, cfg);
    const auto tc = train_config(o, cfg, TrainMode::query);
    const FourierTeacher teacher(tc.teacher);
    const auto ck = obtain_model(o, tc, teacher);
    const auto n_points = get_or(cfg, "n_points", ck.config.n_points);
    const auto n_functions = get_or(cfg, "n_functions", std::size_t{16});
    const auto slack = get_or(cfg, "slack", 0.10);
    const FourierTeacher ck_teacher(ck.config.teacher);
    const auto t = std::visit([&](const auto& m) { return sampling_robustness(m, ck.config, ck_teacher, n_points, n_functions, slack); },
                              ck.model);
    out.csv(t);
    write_svg(out.path(".svg"), t, {"median rel L2 by sampling scheme", 0, {1}, false, false, true, robustness_schemes()});
    return report(o, t);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Function graph transformer experiments"};
    app.require_subcommand(1, 1);
    Options o;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"w1-convergence", "W1 distance of grid tokenizations to a dense reference"},
        {"decode-convergence", "sup error of the mollifier decoder at two widths"},
        {"spectral-convergence", "L2 error of the spectral regularizer along the K(eta) schedule"},
        {"gradcheck", "tape gradients against central differences"},
        {"crossattn-check", "product attention with cross-constrained blocks against cross-attention"},
        {"train", "train a same-domain or query model on the Fourier teacher"},
        {"eval", "held-out metrics of a checkpoint"},
        {"resolution-transfer", "median rel L2 of a query model over input sizes"},
        {"sampling-robustness", "median rel L2 of a query model over sampling schemes"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
        sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) {
            o.seed = s;
            o.seed_given = true;
        }, "random seed");
        sub->add_flag("--force", o.force, "overwrite existing outputs");
        sub->add_flag("--full-scale", o.full_scale, "use the full 2-D configuration");
        if (name == "eval" || name == "resolution-transfer" || name == "sampling-robustness")
            sub->add_option("--checkpoint", o.checkpoint, "checkpoint JSON written by train");
        if (name == "eval") sub->add_option("--queries", o.queries, "CSV of query points to predict at");
        sub->callback([&o, n = name] { o.command = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto cfg = load_config(o);
        if (o.command == "w1-convergence") return cmd_w1(o, cfg);
        if (o.command == "decode-convergence") return cmd_decode(o, cfg);
        if (o.command == "spectral-convergence") return cmd_spectral(o, cfg);
        if (o.command == "gradcheck") return cmd_gradcheck(o, cfg);
        if (o.command == "crossattn-check") return cmd_crossattn(o, cfg);
        if (o.command == "train") return cmd_train(o, cfg);
        if (o.command == "eval") return cmd_eval(o, cfg);
        if (o.command == "resolution-transfer") return cmd_resolution(o, cfg);
        if (o.command == "sampling-robustness") return cmd_sampling(o, cfg);
        std::cerr << "unknown command\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
