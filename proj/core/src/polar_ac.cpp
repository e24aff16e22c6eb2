#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "collapse/error.hpp"
#include "collapse/model.hpp"
#include "collapse/network.hpp"

namespace collapse {

namespace {

// Polar power-flow mismatch. State: angles of non-slack buses, then voltage
// magnitudes of PQ buses. Rows: P mismatch at non-slack buses, then Q at PQ
// buses. Each row is nominal - lambda - computed injection.
class PolarAcModel final : public PowerFlowModel {
  public:
    PolarAcModel(const NetworkDescription& net, Index n, std::vector<std::string> state_names,
                 std::vector<std::string> param_names)
        : PowerFlowModel(n, static_cast<Index>(net.lambda_map.size()), std::move(state_names),
                         std::move(param_names)),
          G_(net.ybus.real()),
          B_(net.ybus.imag()) {
        const auto nb = static_cast<Index>(net.buses.size());
        theta_idx_.assign(nb, -1);
        vmag_idx_.assign(nb, -1);
        p_row_.assign(nb, -1);
        q_row_.assign(nb, -1);
        vset_ = Vector::Ones(nb);
        p_nom_ = Vector::Zero(nb);
        q_nom_ = Vector::Zero(nb);

        Index next = 0;
        for (Index i = 0; i < nb; ++i) {
            const Bus& b = net.buses[static_cast<std::size_t>(i)];
            if (b.type != BusType::Slack) {
                theta_idx_[i] = next;
                p_row_[i] = next;
                ++next;
            }
        }
        for (Index i = 0; i < nb; ++i) {
            const Bus& b = net.buses[static_cast<std::size_t>(i)];
            if (b.type == BusType::PQ) {
                vmag_idx_[i] = next;
                q_row_[i] = next;
                ++next;
            }
            if (b.type != BusType::PQ) vset_(i) = b.vset;
            p_nom_(i) = b.p_nominal;
            q_nom_(i) = b.q_nominal;
        }

        for (const auto& slot : net.lambda_map) {
            const Index bus = net.bus_index(slot.bus);
            slot_row_.push_back(slot.kind == InjectionKind::P ? p_row_[bus] : q_row_[bus]);
        }

        for (Index i = 0; i < nb; ++i) {
            for (Index k = 0; k < nb; ++k) {
                if (G_(i, k) != 0.0 || B_(i, k) != 0.0) pairs_.push_back({i, k});
            }
        }
    }

    Vector flat_start() const override {
        Vector x = Vector::Zero(state_dim());
        for (std::size_t i = 0; i < vmag_idx_.size(); ++i) {
            if (vmag_idx_[i] >= 0) x(vmag_idx_[i]) = 1.0;
        }
        return x;
    }

    Vector residual(const Vector& x, const Vector& lambda) const override {
        const auto [theta, vm] = bus_voltages(x);
        Vector f = Vector::Zero(state_dim());
        for (std::size_t i = 0; i < p_row_.size(); ++i) {
            if (p_row_[i] >= 0) f(p_row_[i]) += p_nom_(static_cast<Index>(i));
            if (q_row_[i] >= 0) f(q_row_[i]) += q_nom_(static_cast<Index>(i));
        }
        for (const auto& [i, k] : pairs_) {
            const double d = theta(i) - theta(k);
            const double c = std::cos(d);
            const double s = std::sin(d);
            const double vv = vm(i) * vm(k);
            if (p_row_[i] >= 0) f(p_row_[i]) -= vv * (G_(i, k) * c + B_(i, k) * s);
            if (q_row_[i] >= 0) f(q_row_[i]) -= vv * (G_(i, k) * s - B_(i, k) * c);
        }
        for (std::size_t j = 0; j < slot_row_.size(); ++j) f(slot_row_[j]) -= lambda(static_cast<Index>(j));
        return f;
    }

    Matrix state_jacobian(const Vector& x, const Vector&) const override {
        Matrix J = Matrix::Zero(state_dim(), state_dim());
        visit_terms(x, [&](Index row, const std::array<Index, 4>& idx, const Local& t) {
            for (int a = 0; a < 4; ++a) {
                if (idx[a] >= 0) J(row, idx[a]) -= t.grad[a];
            }
        });
        return J;
    }

    Matrix param_jacobian(const Vector&, const Vector&) const override {
        Matrix F = Matrix::Zero(state_dim(), param_dim());
        for (std::size_t j = 0; j < slot_row_.size(); ++j) F(slot_row_[j], static_cast<Index>(j)) = -1.0;
        return F;
    }

    Matrix state_jacobian_derivative(const Vector& x, const Vector&, const Vector& v) const override {
        Matrix D = Matrix::Zero(state_dim(), state_dim());
        visit_terms(x, [&](Index row, const std::array<Index, 4>& idx, const Local& t) {
            std::array<double, 4> vl{};
            for (int b = 0; b < 4; ++b) vl[b] = idx[b] >= 0 ? v(idx[b]) : 0.0;
            for (int a = 0; a < 4; ++a) {
                if (idx[a] < 0) continue;
                double acc = 0.0;
                for (int b = 0; b < 4; ++b) acc += t.hess[a][b] * vl[b];
                D(row, idx[a]) -= acc;
            }
        });
        return D;
    }

  private:
    // Gradient and Hessian of one injection term in local variables
    // (theta_i, theta_k, V_i, V_k).
    struct Local {
        std::array<double, 4> grad{};
        std::array<std::array<double, 4>, 4> hess{};
    };

    std::pair<Vector, Vector> bus_voltages(const Vector& x) const {
        const auto nb = static_cast<Index>(theta_idx_.size());
        Vector theta = Vector::Zero(nb);
        Vector vm = vset_;
        for (Index i = 0; i < nb; ++i) {
            if (theta_idx_[i] >= 0) theta(i) = x(theta_idx_[i]);
            if (vmag_idx_[i] >= 0) vm(i) = x(vmag_idx_[i]);
        }
        return {theta, vm};
    }

    template <class Visitor>
    void visit_terms(const Vector& x, Visitor&& visit) const {
        const auto volt = bus_voltages(x);
        const Vector& theta = volt.first;
        const Vector& vm = volt.second;
        for (const auto& [i, k] : pairs_) {
            const bool want_p = p_row_[i] >= 0;
            const bool want_q = q_row_[i] >= 0;
            if (!want_p && !want_q) continue;
            const std::array<Index, 4> idx{theta_idx_[i], theta_idx_[k], vmag_idx_[i], vmag_idx_[k]};

            if (i == k) {
                // V_i^2 * h0 with h0 = G_ii (P) or -B_ii (Q); only V_i enters.
                const std::array<Index, 4> diag_idx{-1, -1, vmag_idx_[i], -1};
                auto emit = [&](Index row, double h0) {
                    Local t;
                    t.grad[2] = 2.0 * vm(i) * h0;
                    t.hess[2][2] = 2.0 * h0;
                    visit(row, diag_idx, t);
                };
                if (want_p) emit(p_row_[i], G_(i, i));
                if (want_q) emit(q_row_[i], -B_(i, i));
                continue;
            }

            const double d = theta(i) - theta(k);
            const double c = std::cos(d);
            const double s = std::sin(d);
            const double a = G_(i, k) * c + B_(i, k) * s;   // P kernel
            const double b = G_(i, k) * s - B_(i, k) * c;   // Q kernel
            const double vi = vm(i);
            const double vk = vm(k);
            const double vv = vi * vk;

            // term = Vi Vk h(theta_i - theta_k)
            auto emit = [&](Index row, double h, double dh, double d2h) {
                Local t;
                t.grad = {vv * dh, -vv * dh, vk * h, vi * h};
                auto& H = t.hess;
                H[0][0] = vv * d2h;
                H[0][1] = H[1][0] = -vv * d2h;
                H[1][1] = vv * d2h;
                H[0][2] = H[2][0] = vk * dh;
                H[0][3] = H[3][0] = vi * dh;
                H[1][2] = H[2][1] = -vk * dh;
                H[1][3] = H[3][1] = -vi * dh;
                H[2][3] = H[3][2] = h;
                visit(row, idx, t);
            };
            if (want_p) emit(p_row_[i], a, -b, -a);
            if (want_q) emit(q_row_[i], b, a, -b);
        }
    }

    Matrix G_;
    Matrix B_;
    std::vector<Index> theta_idx_;
    std::vector<Index> vmag_idx_;
    std::vector<Index> p_row_;
    std::vector<Index> q_row_;
    std::vector<Index> slot_row_;
    std::vector<std::pair<Index, Index>> pairs_;
    Vector vset_;
    Vector p_nom_;
    Vector q_nom_;
};

}  // namespace

ModelPtr build_polar_ac(const NetworkDescription& net) {
    validate(net);
    std::vector<std::string> state_names;
    std::vector<std::string> param_names;
    for (const auto& b : net.buses) {
        if (b.type != BusType::Slack) state_names.push_back("theta" + std::to_string(b.id));
    }
    for (const auto& b : net.buses) {
        if (b.type == BusType::PQ) state_names.push_back("V" + std::to_string(b.id));
    }
    for (const auto& slot : net.lambda_map) {
        param_names.push_back(std::string(to_string(slot.kind)) + std::to_string(slot.bus));
    }
    const auto n = static_cast<Index>(state_names.size());
    return std::make_shared<PolarAcModel>(net, n, std::move(state_names), std::move(param_names));
}

}  // namespace collapse
