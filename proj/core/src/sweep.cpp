#include "collapse/sweep.hpp"

#include <chrono>
#include <cstdio>

#include "collapse/error.hpp"
#include "collapse/io.hpp"

namespace collapse {

namespace {

class Stopwatch {
  public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - start_).count();
        start_ = now;
        return s;
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ProbabilityEstimate first_order_fallback(const ProbabilityEstimate& first, Method method, const std::string& flag) {
    ProbabilityEstimate est = first;
    est.method = method;
    est.diagnostics.flags.push_back(flag);
    return est;
}

std::string csv_quote(const std::string& text) {
    std::string out = "\"";
    for (char ch : text) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_estimate_line(std::ostream& out, double c, const ProbabilityEstimate& e) {
    out << to_string(e.method) << ',' << format_double(c) << ',' << format_double(e.value) << ','
        << optional_cell(e.std_error) << ',' << (e.samples ? std::to_string(*e.samples) : std::string()) << ','
        << (e.seed ? std::to_string(*e.seed) : std::string()) << ',' << csv_quote(to_json(e.diagnostics).dump())
        << '\n';
}

}  // namespace

PointAnalysis analyze_point(const PowerFlowModel& model, const Uncertainty& dist, const KktPoint* warm,
                            const InitOptions& init_options, const KktOptions& kkt_options) {
    PointAnalysis out;
    Stopwatch clock;

    if (warm != nullptr) {
        try {
            out.instanton = solve_instanton(model, dist, *warm, kkt_options);
        } catch (const Error& e) {
            out.warnings.push_back(std::string("warm start failed (") + e.what() + "), reinitializing");
            out.instanton = find_instanton(model, dist, init_options, kkt_options);
        }
    } else {
        out.instanton = find_instanton(model, dist, init_options, kkt_options);
    }
    out.instanton_seconds = clock.lap();

    const InstantonSolution& s = out.instanton;
    Vector normal = eval_flambda(model, s.x, s.lambda).transpose() * s.w;
    bool have_geometry = false;
    try {
        out.geometry = compute_geometry(model, s);
        normal = out.geometry.normal;
        have_geometry = true;
        const OrientationCheck orient = check_orientation(model, s.lambda, normal, s.x);
        if (!orient.ok()) out.warnings.emplace_back("orientation check failed at the instanton");
    } catch (const Error& e) {
        out.warnings.push_back(std::string("geometry unavailable: ") + e.what());
    }
    out.geometry_seconds = clock.lap();

    if (const auto* g = std::get_if<GaussianModel>(&dist)) {
        out.first_order = ldt_first_order(s.rate);
        if (have_geometry) {
            try {
                out.curvature = curvature_correction_inputs(*g, s.lambda, normal, out.geometry.second_form);
                out.second_order = ldt_second_order(s.rate, *out.curvature);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::CurvatureBreakdown && e.code() != ErrorCode::AlignmentFailure) throw;
                out.warnings.push_back(std::string("second order replaced by first order: ") + e.what());
                out.second_order = first_order_fallback(out.first_order, Method::LDT2, std::string(to_string(e.code())));
            }
        }
    } else {
        const auto& gmm = std::get<GaussianMixtureModel>(dist);
        out.first_order = gmm_ldt_first_order(gmm, s.lambda, normal);
        if (have_geometry) {
            try {
                for (const auto& c : gmm.components()) {
                    out.tangency.push_back(
                        gmm_tangency_point(c.gaussian, s.lambda, normal, out.geometry.second_form));
                }
                out.second_order = gmm_ldt_second_order(gmm, s.lambda, normal, out.geometry.second_form, out.tangency);
                for (const auto& f : out.second_order->diagnostics.flags) {
                    out.warnings.push_back("component fell back to first order: " + f);
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoConvergence) throw;
                out.warnings.push_back(std::string("second order replaced by first order: ") + e.what());
                out.tangency.clear();
                out.second_order = first_order_fallback(out.first_order, Method::GMM_LDT2, "NoConvergence");
            }
        }
    }
    out.ldt_seconds = clock.lap();
    return out;
}

std::size_t SweepResult::failed_rows() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.ok ? 0 : 1;
    return n;
}

std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(row)));
}

SweepResult run_sweep(const ExperimentSpec& spec, const SweepOptions& options) {
    validate(spec);
    const ModelPtr model = resolve_model(spec.model);
    SweepResult result;
    result.experiment = spec.name;
    result.seed = options.seed.value_or(spec.seed);
    const double threshold = options.mc_is_threshold.value_or(spec.mc_is_threshold);

    std::optional<CollapseClassifier> classifier;
    if (options.compute_reference) classifier = make_classifier(spec.classifier, model, mean(spec.uncertainty));

    std::optional<InstantonSolution> previous;
    for (std::size_t i = 0; i < spec.scales.size(); ++i) {
        SweepRow row;
        row.scale = spec.scales[i];
        row.seed = row_seed(result.seed, i);
        row.reference_method = row.scale >= threshold ? Method::MC : Method::IS;
        try {
            const Uncertainty dist = scaled(spec.uncertainty, row.scale);
            std::optional<KktPoint> warm;
            if (options.warm_start && previous) warm = warm_start(*previous, dist);
            PointAnalysis a = analyze_point(*model, dist, warm ? &*warm : nullptr);
            previous = a.instanton;

            row.lambda_star = a.instanton.lambda;
            row.rate = a.instanton.rate;
            row.kkt_iterations = a.instanton.iterations;
            row.ldt1 = a.first_order;
            row.ldt2 = a.second_order;
            row.timings.instanton = a.instanton_seconds;
            row.timings.geometry = a.geometry_seconds;
            row.timings.ldt = a.ldt_seconds;

            if (classifier) {
                Stopwatch clock;
                SamplingOptions so;
                so.seed = row.seed;
                so.jobs = options.jobs;
                if (row.reference_method == Method::MC) {
                    so.samples = spec.mc_samples;
                    row.reference = monte_carlo(dist, *classifier, so);
                } else {
                    so.samples = spec.is_samples;
                    Uncertainty proposal = dist;
                    if (const auto* g = std::get_if<GaussianModel>(&dist)) {
                        proposal = gaussian_is_proposal(*g, a.instanton.lambda);
                    } else {
                        const Vector normal = a.geometry.normal.size() > 0
                                                  ? a.geometry.normal
                                                  : Vector(eval_flambda(*model, a.instanton.x, a.instanton.lambda)
                                                               .transpose() *
                                                           a.instanton.w);
                        proposal = mixture_is_proposal(std::get<GaussianMixtureModel>(dist), a.instanton.lambda,
                                                       normal);
                    }
                    row.reference = importance_sampling(dist, proposal, *classifier, so);
                }
                row.timings.reference = clock.lap();
            }
            row.ok = true;
        } catch (const Error& e) {
            row.ok = false;
            row.error = e.what();
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

// ---------------------------------------------------------------------------

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_estimates_csv(std::ostream& out, const SweepResult& result) {
    out << "method,c,value,std_error,samples,seed,diagnostics\n";
    for (const auto& row : result.rows) {
        if (!row.ok) {
            out << "FAILED," << format_double(row.scale) << ",,,,," << csv_quote(Json{{"error", row.error}}.dump())
                << '\n';
            continue;
        }
        if (row.ldt1) write_estimate_line(out, row.scale, *row.ldt1);
        if (row.ldt2) write_estimate_line(out, row.scale, *row.ldt2);
        if (row.reference) write_estimate_line(out, row.scale, *row.reference);
    }
}

void write_table_csv(std::ostream& out, const SweepResult& result) {
    out << "c,ref_method,reference,reference_std_error,ldt1,ldt2,rate,lambda_star\n";
    for (const auto& row : result.rows) {
        out << format_double(row.scale) << ',' << to_string(row.reference_method) << ',';
        if (!row.ok) {
            out << ",,,,,\n";
            continue;
        }
        out << (row.reference ? format_double(row.reference->value) : "") << ','
            << (row.reference ? optional_cell(row.reference->std_error) : "") << ','
            << (row.ldt1 ? format_double(row.ldt1->value) : "") << ','
            << (row.ldt2 ? format_double(row.ldt2->value) : "") << ',' << format_double(row.rate) << ',';
        std::string ls;
        for (Index k = 0; k < row.lambda_star.size(); ++k) {
            if (k > 0) ls += ' ';
            ls += format_double(row.lambda_star(k));
        }
        out << csv_quote(ls) << '\n';
    }
}

void write_plot_data(std::ostream& out, const SweepResult& result) {
    out << "# c reference ldt1 ldt2\n";
    for (const auto& row : result.rows) {
        if (!row.ok) continue;
        out << format_double(row.scale) << ' ' << (row.reference ? format_double(row.reference->value) : "nan") << ' '
            << (row.ldt1 ? format_double(row.ldt1->value) : "nan") << ' '
            << (row.ldt2 ? format_double(row.ldt2->value) : "nan") << '\n';
    }
}

nlohmann::json to_json(const SweepRow& row) {
    Json j{{"c", row.scale},
           {"ok", row.ok},
           {"error", row.error},
           {"reference_method", std::string(to_string(row.reference_method))},
           {"reference", row.reference ? to_json(*row.reference) : Json(nullptr)},
           {"ldt1", row.ldt1 ? to_json(*row.ldt1) : Json(nullptr)},
           {"ldt2", row.ldt2 ? to_json(*row.ldt2) : Json(nullptr)},
           {"lambda_star", vector_to_json(row.lambda_star)},
           {"rate", row.rate},
           {"kkt_iterations", row.kkt_iterations},
           {"seed", row.seed},
           {"timings",
            {{"instanton", row.timings.instanton},
             {"geometry", row.timings.geometry},
             {"ldt", row.timings.ldt},
             {"reference", row.timings.reference}}}};
    return j;
}

nlohmann::json to_json(const SweepResult& result) {
    Json rows = Json::array();
    for (const auto& r : result.rows) rows.push_back(to_json(r));
    return {{"experiment", result.experiment}, {"seed", result.seed}, {"rows", rows}};
}

}  // namespace collapse
