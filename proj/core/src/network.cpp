#include "collapse/network.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "collapse/error.hpp"

namespace collapse {

Index NetworkDescription::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return static_cast<Index>(i);
    }
    throw Error(ErrorCode::InvalidNetwork, "unknown bus id " + std::to_string(id));
}

void validate(const NetworkDescription& net) {
    const auto nb = static_cast<Index>(net.buses.size());
    if (nb < 2) throw Error(ErrorCode::InvalidNetwork, "network needs at least two buses");
    if (net.ybus.rows() != net.ybus.cols()) {
        throw Error(ErrorCode::InvalidNetwork, "ybus is not square");
    }
    if (net.ybus.rows() != nb) {
        std::ostringstream msg;
        msg << "ybus dimension " << net.ybus.rows() << " does not match bus count " << nb;
        throw Error(ErrorCode::InvalidNetwork, msg.str());
    }
    if (!net.ybus.allFinite()) throw Error(ErrorCode::InvalidNetwork, "ybus has non-finite entries");

    const auto slack_count = std::count_if(net.buses.begin(), net.buses.end(),
                                           [](const Bus& b) { return b.type == BusType::Slack; });
    if (slack_count != 1) {
        throw Error(ErrorCode::InvalidNetwork,
                    "exactly one slack bus required, found " + std::to_string(slack_count));
    }

    std::set<int> ids;
    for (const auto& b : net.buses) {
        if (!ids.insert(b.id).second) {
            throw Error(ErrorCode::InvalidNetwork, "duplicate bus id " + std::to_string(b.id));
        }
        if (b.type != BusType::PQ && !(b.vset > 0.0)) {
            throw Error(ErrorCode::InvalidNetwork,
                        "bus " + std::to_string(b.id) + " needs a positive voltage setpoint");
        }
    }

    std::set<std::pair<int, int>> used;
    for (const auto& slot : net.lambda_map) {
        const Bus& bus = net.buses[static_cast<std::size_t>(net.bus_index(slot.bus))];
        if (bus.type == BusType::Slack) {
            throw Error(ErrorCode::InvalidNetwork,
                        "lambda slot at slack bus " + std::to_string(slot.bus) + " has no mismatch row");
        }
        if (slot.kind == InjectionKind::Q && bus.type != BusType::PQ) {
            throw Error(ErrorCode::InvalidNetwork,
                        "reactive lambda slot at non-PQ bus " + std::to_string(slot.bus));
        }
        if (!used.insert({slot.bus, static_cast<int>(slot.kind)}).second) {
            throw Error(ErrorCode::InvalidNetwork, "two lambda components map to bus " +
                                                       std::to_string(slot.bus) + " " +
                                                       std::string(to_string(slot.kind)));
        }
    }
    if (net.lambda_map.empty()) throw Error(ErrorCode::InvalidNetwork, "lambda_map is empty");
}

bool structurally_equal(const NetworkDescription& a, const NetworkDescription& b) {
    return a.buses == b.buses && a.lambda_map == b.lambda_map && a.ybus.rows() == b.ybus.rows() &&
           a.ybus.cols() == b.ybus.cols() && a.ybus == b.ybus;
}

std::string_view to_string(BusType type) {
    switch (type) {
        case BusType::Slack: return "slack";
        case BusType::PV: return "PV";
        case BusType::PQ: return "PQ";
    }
    return "?";
}

std::string_view to_string(InjectionKind kind) { return kind == InjectionKind::P ? "P" : "Q"; }

}  // namespace collapse
