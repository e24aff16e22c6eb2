#include "collapse/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "collapse/error.hpp"

namespace collapse {

namespace {

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::ParseError, (path.empty() ? std::string("<root>") : path) + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const Json& field(const Json& j, const std::string& path, const std::string& key) {
    if (!j.is_object()) parse_fail(path, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) parse_fail(join(path, key), "missing required field");
    return *it;
}

double get_double(const Json& j, const std::string& path) {
    if (!j.is_number()) parse_fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) parse_fail(path, "expected a finite number");
    return v;
}

std::string get_string(const Json& j, const std::string& path) {
    if (!j.is_string()) parse_fail(path, "expected a string");
    return j.get<std::string>();
}

long long get_integer(const Json& j, const std::string& path) {
    if (!j.is_number_integer()) parse_fail(path, "expected an integer");
    return j.get<long long>();
}

std::uint64_t get_unsigned(const Json& j, const std::string& path) {
    if (!j.is_number_unsigned()) parse_fail(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

const Json& get_array(const Json& j, const std::string& path) {
    if (!j.is_array()) parse_fail(path, "expected an array");
    return j;
}

Vector get_vector(const Json& j, const std::string& path) {
    const Json& a = get_array(j, path);
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = get_double(a[i], index(path, i));
    return v;
}

Matrix get_matrix(const Json& j, const std::string& path) {
    const Json& rows = get_array(j, path);
    if (rows.empty()) parse_fail(path, "matrix has no rows");
    const std::size_t cols = get_array(rows[0], index(path, 0)).size();
    Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string rp = index(path, r);
        const Json& row = get_array(rows[r], rp);
        if (row.size() != cols) parse_fail(rp, "row length differs from the first row");
        for (std::size_t c = 0; c < cols; ++c) {
            M(static_cast<Index>(r), static_cast<Index>(c)) = get_double(row[c], index(rp, c));
        }
    }
    return M;
}

std::complex<double> get_complex(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) parse_fail(path, "expected a complex entry [re, im]");
    return {get_double(j[0], index(path, 0)), get_double(j[1], index(path, 1))};
}

GaussianModel get_gaussian(const Json& j, const std::string& path) {
    const Vector mean = get_vector(field(j, path, "mean"), join(path, "mean"));
    const Matrix cov = get_matrix(field(j, path, "covariance"), join(path, "covariance"));
    try {
        return GaussianModel(mean, cov);
    } catch (const Error& e) {
        parse_fail(path, e.what());
    }
}

BusType bus_type_from(const std::string& s, const std::string& path) {
    if (s == "slack") return BusType::Slack;
    if (s == "PV") return BusType::PV;
    if (s == "PQ") return BusType::PQ;
    parse_fail(path, "unknown bus type '" + s + "' (expected slack, PV or PQ)");
}

InjectionKind kind_from(const std::string& s, const std::string& path) {
    if (s == "P") return InjectionKind::P;
    if (s == "Q") return InjectionKind::Q;
    parse_fail(path, "unknown injection kind '" + s + "' (expected P or Q)");
}

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json vector_to_json(const Vector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json matrix_to_json(const Matrix& m) {
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(vector_to_json(m.row(r).transpose()));
    return a;
}

// ---------------------------------------------------------------------------

Json network_to_json(const NetworkDescription& net) {
    Json j;
    Json buses = Json::array();
    for (const auto& b : net.buses) {
        buses.push_back({{"id", b.id},
                         {"type", std::string(to_string(b.type))},
                         {"vset", b.vset},
                         {"p", b.p_nominal},
                         {"q", b.q_nominal}});
    }
    j["buses"] = buses;
    Json y = Json::array();
    for (Index r = 0; r < net.ybus.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < net.ybus.cols(); ++c) row.push_back({net.ybus(r, c).real(), net.ybus(r, c).imag()});
        y.push_back(row);
    }
    j["ybus"] = y;
    Json map = Json::array();
    for (const auto& s : net.lambda_map) map.push_back({{"bus", s.bus}, {"kind", std::string(to_string(s.kind))}});
    j["lambda_map"] = map;
    return j;
}

NetworkDescription network_from_json(const Json& j) {
    NetworkDescription net;
    const Json& buses = get_array(field(j, "", "buses"), "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string p = index("buses", i);
        Bus b;
        b.id = static_cast<int>(get_integer(field(buses[i], p, "id"), join(p, "id")));
        b.type = bus_type_from(get_string(field(buses[i], p, "type"), join(p, "type")), join(p, "type"));
        if (buses[i].contains("vset")) b.vset = get_double(buses[i]["vset"], join(p, "vset"));
        if (buses[i].contains("p")) b.p_nominal = get_double(buses[i]["p"], join(p, "p"));
        if (buses[i].contains("q")) b.q_nominal = get_double(buses[i]["q"], join(p, "q"));
        net.buses.push_back(b);
    }

    const Json& rows = get_array(field(j, "", "ybus"), "ybus");
    const auto nb = static_cast<Index>(rows.size());
    net.ybus = ComplexMatrix::Zero(nb, nb);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string rp = index("ybus", r);
        const Json& row = get_array(rows[r], rp);
        if (static_cast<Index>(row.size()) != nb) parse_fail(rp, "ybus must be square");
        for (std::size_t c = 0; c < row.size(); ++c) {
            net.ybus(static_cast<Index>(r), static_cast<Index>(c)) = get_complex(row[c], index(rp, c));
        }
    }

    const Json& map = get_array(field(j, "", "lambda_map"), "lambda_map");
    for (std::size_t i = 0; i < map.size(); ++i) {
        const std::string p = index("lambda_map", i);
        InjectionSlot s;
        s.bus = static_cast<int>(get_integer(field(map[i], p, "bus"), join(p, "bus")));
        s.kind = kind_from(get_string(field(map[i], p, "kind"), join(p, "kind")), join(p, "kind"));
        net.lambda_map.push_back(s);
    }

    try {
        validate(net);
    } catch (const Error& e) {
        parse_fail("", e.what());
    }
    return net;
}

NetworkDescription load_network(const std::filesystem::path& path) {
    try {
        return network_from_json(read_json_file(path));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ParseError) throw;
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

void save_network(const std::filesystem::path& path, const NetworkDescription& net) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path.string());
    out << network_to_json(net).dump(2) << '\n';
}

Json uncertainty_to_json(const Uncertainty& u) {
    if (const auto* g = std::get_if<GaussianModel>(&u)) {
        return {{"type", "gaussian"}, {"mean", vector_to_json(g->mean())}, {"covariance", matrix_to_json(g->covariance())}};
    }
    const auto& gmm = std::get<GaussianMixtureModel>(u);
    Json comps = Json::array();
    for (const auto& c : gmm.components()) {
        comps.push_back({{"weight", c.weight},
                         {"mean", vector_to_json(c.gaussian.mean())},
                         {"covariance", matrix_to_json(c.gaussian.covariance())}});
    }
    return {{"type", "mixture"}, {"components", comps}};
}

Uncertainty uncertainty_from_json(const Json& j) {
    const std::string type = get_string(field(j, "", "type"), "type");
    if (type == "gaussian") return get_gaussian(j, "");
    if (type != "mixture") parse_fail("type", "unknown uncertainty type '" + type + "' (expected gaussian or mixture)");
    const Json& comps = get_array(field(j, "", "components"), "components");
    std::vector<MixtureComponent> out;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::string p = index("components", i);
        const double w = get_double(field(comps[i], p, "weight"), join(p, "weight"));
        out.push_back({w, get_gaussian(comps[i], p)});
    }
    try {
        return GaussianMixtureModel(std::move(out));
    } catch (const Error& e) {
        parse_fail("components", e.what());
    }
}

Json experiment_to_json(const ExperimentSpec& spec) {
    return {{"name", spec.name},
            {"model", spec.model},
            {"uncertainty", uncertainty_to_json(spec.uncertainty)},
            {"scales", spec.scales},
            {"mc_is_threshold", spec.mc_is_threshold},
            {"mc_samples", spec.mc_samples},
            {"is_samples", spec.is_samples},
            {"seed", spec.seed},
            {"classifier", spec.classifier == ClassifierMode::Analytic ? "analytic" : "power_flow"},
            {"output", spec.output}};
}

ExperimentSpec experiment_from_json(const Json& j) {
    const std::string name = get_string(field(j, "", "name"), "name");
    const std::string model = get_string(field(j, "", "model"), "model");
    Uncertainty u = [&]() {
        try {
            return uncertainty_from_json(field(j, "", "uncertainty"));
        } catch (const Error& e) {
            parse_fail("uncertainty", e.what());
        }
    }();
    ExperimentSpec spec{name, model, std::move(u), {}, 0.0, 1, 1, 0, ClassifierMode::PowerFlow, "out"};
    const Json& scales = get_array(field(j, "", "scales"), "scales");
    for (std::size_t i = 0; i < scales.size(); ++i) spec.scales.push_back(get_double(scales[i], index("scales", i)));
    spec.mc_is_threshold = get_double(field(j, "", "mc_is_threshold"), "mc_is_threshold");
    spec.mc_samples = get_unsigned(field(j, "", "mc_samples"), "mc_samples");
    spec.is_samples = get_unsigned(field(j, "", "is_samples"), "is_samples");
    if (j.contains("seed")) spec.seed = get_unsigned(j["seed"], "seed");
    if (j.contains("classifier")) {
        const std::string c = get_string(j["classifier"], "classifier");
        if (c == "analytic") spec.classifier = ClassifierMode::Analytic;
        else if (c == "power_flow") spec.classifier = ClassifierMode::PowerFlow;
        else parse_fail("classifier", "expected analytic or power_flow");
    }
    if (j.contains("output")) spec.output = get_string(j["output"], "output");
    try {
        validate(spec);
    } catch (const Error& e) {
        parse_fail("", e.what());
    }
    return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
    try {
        return experiment_from_json(read_json_file(path));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ParseError) throw;
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

Json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        std::size_t line = 1;
        std::size_t column = 1;
        for (std::size_t i = 0; i < end; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        std::ostringstream msg;
        msg << source << ":" << line << ":" << column << ": invalid JSON";
        throw Error(ErrorCode::ParseError, msg.str());
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, path.string() + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_json_text(buf.str(), path.string());
}

// ---------------------------------------------------------------------------

Json to_json(const InstantonSolution& s) {
    Json j{{"x", vector_to_json(s.x)},
           {"lambda", vector_to_json(s.lambda)},
           {"w", vector_to_json(s.w)},
           {"k", s.k},
           {"eta", s.eta ? vector_to_json(*s.eta) : Json(nullptr)},
           {"rate", s.rate},
           {"residual_norm", s.residual_norm},
           {"iterations", s.iterations},
           {"residual_trace", s.residual_trace}};
    return j;
}

Json to_json(const BoundaryGeometry& g) {
    return {{"normal", vector_to_json(g.normal)},
            {"right_null", vector_to_json(g.right_null)},
            {"x_lambda", matrix_to_json(g.x_lambda)},
            {"second_form", matrix_to_json(g.second_form)},
            {"alpha", vector_to_json(g.alpha)},
            {"bordered_residuals", vector_to_json(g.bordered_residuals)},
            {"bordered_condition", g.bordered_condition},
            {"asymmetry", g.asymmetry}};
}

Json to_json(const CurvatureInputs& c) {
    return {{"rotation", matrix_to_json(c.rotation)},
            {"whitening", matrix_to_json(c.whitening)},
            {"shape", matrix_to_json(c.shape)},
            {"eigenvalues", vector_to_json(c.eigenvalues)},
            {"normal_scale", c.normal_scale},
            {"alignment", c.alignment},
            {"asymmetry", c.asymmetry}};
}

Json to_json(const EstimateDiagnostics& d) {
    Json j{{"bracket_terms", d.bracket_terms},
           {"curvature_eigenvalues", d.curvature_eigenvalues},
           {"component_values", d.component_values},
           {"beta", optional_json(d.beta)},
           {"effective_sample_size", optional_json(d.effective_sample_size)},
           {"collapsed_count", d.collapsed_count},
           {"flags", d.flags}};
    return j;
}

Json to_json(const ProbabilityEstimate& e) {
    return {{"value", e.value},
            {"method", std::string(to_string(e.method))},
            {"std_error", optional_json(e.std_error)},
            {"samples", optional_json(e.samples)},
            {"seed", optional_json(e.seed)},
            {"diagnostics", to_json(e.diagnostics)}};
}

Json to_json(const TangencyPoint& t) {
    return {{"lambda", vector_to_json(t.lambda)},
            {"normal", vector_to_json(t.normal)},
            {"multiplier", t.multiplier},
            {"rate", t.rate},
            {"iterations", t.iterations},
            {"nonpositive_multiplier", t.nonpositive_multiplier}};
}

}  // namespace collapse
