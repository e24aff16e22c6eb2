#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collapse/cases.hpp"
#include "collapse/checks.hpp"
#include "collapse/error.hpp"
#include "collapse/io.hpp"
#include "collapse/sweep.hpp"

namespace fs = std::filesystem;
using namespace collapse;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kUsage = 2, kSolver = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool is_usage(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseError:
        case ErrorCode::InvalidExperiment:
        case ErrorCode::InvalidDistribution:
        case ErrorCode::InvalidNetwork:
        case ErrorCode::DimensionMismatch:
            return true;
        default:
            return false;
    }
}

int report_error(const std::string& kind, const std::string& message, int code) {
    std::cout << Json{{"error", kind}, {"message", message}}.dump() << '\n';
    std::cerr << "error: " << message << '\n';
    return code;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("bad number '" + item + "' in " + what);
        }
    }
    if (out.empty()) throw UsageError("empty " + what);
    return out;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

// mu=a,b sigma=I | sigma=diag(a,b) | sigma=a,b,c,d (row-major)
GaussianModel parse_gaussian(const std::vector<std::string>& tokens) {
    std::optional<Vector> mu;
    std::string sigma = "I";
    for (const auto& tok : tokens) {
        if (tok.rfind("mu=", 0) == 0) {
            mu = to_vector(parse_list(tok.substr(3), "mu"));
        } else if (tok.rfind("sigma=", 0) == 0) {
            sigma = tok.substr(6);
        } else {
            throw UsageError("expected mu=... or sigma=..., got '" + tok + "'");
        }
    }
    if (!mu) throw UsageError("--gaussian needs mu=...");
    const Index m = mu->size();
    Matrix cov;
    if (sigma == "I") {
        cov = Matrix::Identity(m, m);
    } else if (sigma.rfind("diag(", 0) == 0 && sigma.back() == ')') {
        const Vector d = to_vector(parse_list(sigma.substr(5, sigma.size() - 6), "sigma"));
        if (d.size() != m) throw UsageError("sigma diagonal has wrong length");
        cov = d.asDiagonal();
    } else {
        const auto v = parse_list(sigma, "sigma");
        if (static_cast<Index>(v.size()) != m * m) throw UsageError("sigma needs " + std::to_string(m * m) + " entries");
        cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), m, m);
    }
    return GaussianModel(*mu, cov);
}

ModelPtr model_for_case(const std::string& name) {
    if (name == "two_bus" || name == "five_bus" || fs::exists(name)) return resolve_model(name);
    throw UsageError("unknown case '" + name + "'");
}

ExperimentSpec experiment_for(const std::string& ref) {
    if (fs::exists(ref)) return load_experiment(ref);
    for (const auto& spec : builtin_experiments())
        if (spec.name == ref) return spec;
    throw UsageError("unknown experiment '" + ref + "'");
}

unsigned default_jobs() {
    if (const char* env = std::getenv("COLLAPSE_LDT_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw UsageError(std::string("COLLAPSE_LDT_THREADS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

void print_vector(std::ostream& out, const char* label, const Vector& v) {
    out << label << " = (";
    for (Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << format_double(v(i));
    out << ")\n";
}

// Subcommands ----------------------------------------------------------------

struct InstantonArgs {
    std::string model = "two_bus";
    std::vector<std::string> gaussian;
    std::string uncertainty;
    std::string experiment;
    double scale = 1.0;
    bool json = false;
};

int run_instanton(const InstantonArgs& a) {
    const ModelPtr model = model_for_case(a.model);
    Uncertainty dist = GaussianModel(Vector::Zero(model->param_dim()), Matrix::Identity(model->param_dim(), model->param_dim()));
    if (!a.gaussian.empty()) {
        dist = parse_gaussian(a.gaussian);
    } else if (!a.uncertainty.empty()) {
        dist = uncertainty_from_json(read_json_file(a.uncertainty));
    } else if (!a.experiment.empty()) {
        dist = scaled(experiment_for(a.experiment).uncertainty, a.scale);
    } else {
        throw UsageError("one of --gaussian, --uncertainty or --experiment is required");
    }

    const PointAnalysis p = analyze_point(*model, dist);
    const Vector residual = std::holds_alternative<GaussianModel>(dist)
                                ? kkt_residual_gaussian(*model, std::get<GaussianModel>(dist), p.instanton.point())
                                : kkt_residual_gmm(*model, std::get<GaussianMixtureModel>(dist), p.instanton.point());
    const double kkt = residual.cwiseAbs().maxCoeff();

    if (a.json) {
        Json j{{"instanton", to_json(p.instanton)},
               {"geometry", to_json(p.geometry)},
               {"kkt_residual", kkt},
               {"ldt1", to_json(p.first_order)},
               {"warnings", p.warnings}};
        j["ldt2"] = p.second_order ? to_json(*p.second_order) : Json(nullptr);
        j["curvature"] = p.curvature ? to_json(*p.curvature) : Json(nullptr);
        Json tangency = Json::array();
        for (const auto& t : p.tangency) tangency.push_back(to_json(t));
        j["tangency"] = tangency;
        std::cout << j.dump(2) << '\n';
        return kOk;
    }

    auto& out = std::cout;
    print_vector(out, "lambda*", p.instanton.lambda);
    out << "I*      = " << format_double(p.instanton.rate) << '\n';
    print_vector(out, "N", p.geometry.normal);
    if (p.curvature) print_vector(out, "nu", p.curvature->eigenvalues);
    out << "KKT residual = " << kkt << " (" << p.instanton.iterations << " iterations)\n";
    out << to_string(p.first_order.method) << " = " << format_double(p.first_order.value) << '\n';
    if (p.second_order) out << to_string(p.second_order->method) << " = " << format_double(p.second_order->value) << '\n';
    for (const auto& w : p.warnings) out << "warning: " << w << '\n';
    return kOk;
}

struct SweepArgs {
    std::string experiment;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> threshold;
    std::optional<unsigned> jobs;
    bool json = false;
};

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    body(f);
}

int run_sweep_cmd(const SweepArgs& a) {
    const ExperimentSpec spec = experiment_for(a.experiment);
    SweepOptions so;
    so.seed = a.seed;
    so.mc_is_threshold = a.threshold;
    so.jobs = a.jobs ? *a.jobs : default_jobs();
    const SweepResult r = run_sweep(spec, so);

    const fs::path dir = a.out.empty() ? fs::path(spec.output) : fs::path(a.out);
    fs::create_directories(dir);
    const std::string stem = spec.name;
    write_file(dir / (stem + "_estimates.csv"), [&](std::ostream& o) { write_estimates_csv(o, r); });
    write_file(dir / (stem + "_table.csv"), [&](std::ostream& o) { write_table_csv(o, r); });
    write_file(dir / (stem + "_plot.dat"), [&](std::ostream& o) { write_plot_data(o, r); });
    write_file(dir / (stem + ".json"), [&](std::ostream& o) { o << to_json(r).dump(2) << '\n'; });

    if (a.json) {
        std::cout << to_json(r).dump(2) << '\n';
    } else {
        write_table_csv(std::cout, r);
        std::cerr << "wrote " << (dir / stem).string() << "_{estimates,table}.csv, _plot.dat, .json\n";
    }
    for (const auto& row : r.rows)
        if (!row.ok) std::cerr << "row c=" << format_double(row.scale) << " failed: " << row.error << '\n';
    if (!r.rows.empty() && r.failed_rows() == r.rows.size())
        return report_error("AllRowsFailed", "every row of " + spec.name + " failed", kSolver);
    return kOk;
}

struct EstimateArgs {
    std::string experiment;
    std::string method = "MC";
    std::optional<std::size_t> samples;
    double scale = 1.0;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    bool json = false;
};

int run_estimate(const EstimateArgs& a) {
    const ExperimentSpec spec = experiment_for(a.experiment);
    const Method method = method_from_string(a.method);
    if (method != Method::MC && method != Method::IS) throw UsageError("--method must be MC or IS");
    const ModelPtr model = resolve_model(spec.model);
    const Uncertainty dist = scaled(spec.uncertainty, a.scale);
    const CollapseClassifier classifier = make_classifier(spec.classifier, model, mean(dist));

    SamplingOptions so;
    so.seed = a.seed ? *a.seed : spec.seed;
    so.jobs = a.jobs ? *a.jobs : default_jobs();
    ProbabilityEstimate e;
    if (method == Method::MC) {
        so.samples = a.samples ? *a.samples : spec.mc_samples;
        e = monte_carlo(dist, classifier, so);
    } else {
        so.samples = a.samples ? *a.samples : spec.is_samples;
        const InstantonSolution s = find_instanton(*model, dist);
        Uncertainty proposal = dist;
        if (const auto* g = std::get_if<GaussianModel>(&dist)) {
            proposal = gaussian_is_proposal(*g, s.lambda);
        } else {
            const BoundaryGeometry geo = compute_geometry(*model, s);
            proposal = mixture_is_proposal(std::get<GaussianMixtureModel>(dist), s.lambda, geo.normal);
        }
        e = importance_sampling(dist, proposal, classifier, so);
    }

    if (a.json) {
        std::cout << to_json(e).dump(2) << '\n';
    } else {
        std::cout << to_string(e.method) << " c=" << format_double(a.scale) << " p=" << format_double(e.value);
        if (e.std_error) std::cout << " se=" << format_double(*e.std_error);
        std::cout << " n=" << so.samples << " seed=" << so.seed << '\n';
        for (const auto& f : e.diagnostics.flags) std::cout << "flag: " << f << '\n';
    }
    return kOk;
}

struct VerifyArgs {
    std::vector<std::string> only;
    std::optional<unsigned> jobs;
    bool inject_bug = false;
};

int run_verify(const VerifyArgs& a) {
    acceptance::CheckOptions opt;
    opt.jobs = a.jobs ? *a.jobs : default_jobs();
    if (a.inject_bug) opt.derivative_targets = {acceptance::buggy_two_bus_target(), acceptance::five_bus_target()};
    std::vector<acceptance::CheckResult> results;
    try {
        results = acceptance::run_checks(a.only, opt);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    acceptance::print_report(std::cout, results);
    bool all = true;
    for (const auto& r : results) {
        if (!r.passed) {
            if (all) std::cerr << "failing checks:";
            std::cerr << ' ' << r.name;
            all = false;
        }
    }
    if (!all) std::cerr << '\n';
    return all ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voltage collapse probabilities from large-deviation instantons"};
    app.require_subcommand(1);

    InstantonArgs ia;
    auto* inst = app.add_subcommand("instanton", "Solve for the instanton and boundary geometry");
    inst->add_option("--case", ia.model, "two_bus, five_bus, or a network JSON path");
    auto* g_opt = inst->add_option("--gaussian", ia.gaussian, "mu=a,b [sigma=I|diag(a,b)|row-major list]")->expected(1, 2);
    auto* u_opt = inst->add_option("--uncertainty", ia.uncertainty, "Uncertainty JSON file");
    auto* e_opt = inst->add_option("--experiment", ia.experiment, "Built-in experiment name or JSON path");
    g_opt->excludes(u_opt)->excludes(e_opt);
    u_opt->excludes(e_opt);
    inst->add_option("--scale", ia.scale, "Covariance scale c (with --experiment)")->check(CLI::PositiveNumber);
    inst->add_flag("--json", ia.json, "Print JSON");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "Run a covariance sweep and write CSV/JSON/plot data");
    sweep->add_option("--experiment", sa.experiment, "Built-in experiment name or JSON path")->required();
    sweep->add_option("--seed", sa.seed, "Override the sweep seed");
    sweep->add_option("--out", sa.out, "Output directory");
    sweep->add_option("--mc-is-threshold", sa.threshold, "Direct MC for c >= threshold, IS below");
    sweep->add_option("--jobs", sa.jobs, "Sampling threads")->check(CLI::PositiveNumber);
    sweep->add_flag("--json", sa.json, "Print the full result as JSON");

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate", "Single-point MC or IS reference estimate");
    est->add_option("--experiment", ea.experiment, "Built-in experiment name or JSON path")->required();
    est->add_option("--method", ea.method, "MC or IS");
    est->add_option("--samples", ea.samples, "Sample count");
    est->add_option("--scale", ea.scale, "Covariance scale c")->check(CLI::PositiveNumber);
    est->add_option("--seed", ea.seed, "Random seed");
    est->add_option("--jobs", ea.jobs, "Sampling threads")->check(CLI::PositiveNumber);
    est->add_flag("--json", ea.json, "Print JSON");

    VerifyArgs va;
    auto* ver = app.add_subcommand("verify", "Run the acceptance checks");
    ver->add_option("--only", va.only, "Run checks whose name starts with this (repeatable)");
    ver->add_option("--jobs", va.jobs, "Sampling threads")->check(CLI::PositiveNumber);
    ver->add_flag("--inject-jacobian-bug", va.inject_bug, "Use a two-bus model with a perturbed f_x entry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*inst) return run_instanton(ia);
        if (*sweep) return run_sweep_cmd(sa);
        if (*est) return run_estimate(ea);
        if (*ver) return run_verify(va);
    } catch (const UsageError& e) {
        return report_error("UsageError", e.what(), kUsage);
    } catch (const Error& e) {
        return report_error(std::string(to_string(e.code())), e.what(), is_usage(e.code()) ? kUsage : kSolver);
    } catch (const std::exception& e) {
        return report_error("RuntimeError", e.what(), kSolver);
    }
    return kUsage;
}
