#pragma once

#include <string>
#include <vector>

#include "collapse/types.hpp"

namespace collapse {

enum class BusType { Slack, PV, PQ };
enum class InjectionKind { P, Q };

struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double vset = 1.0;  // used for slack and PV buses
    double p_nominal = 0.0;  // net nominal injection (generation minus fixed load)
    double q_nominal = 0.0;

    bool operator==(const Bus&) const = default;
};

/// One uncertain parameter: a load (consumption) at `bus` of the given kind.
struct InjectionSlot {
    int bus = 0;
    InjectionKind kind = InjectionKind::P;

    bool operator==(const InjectionSlot&) const = default;
};

struct NetworkDescription {
    std::vector<Bus> buses;
    ComplexMatrix ybus;  // per unit
    std::vector<InjectionSlot> lambda_map;

    [[nodiscard]] Index bus_index(int id) const;  // throws InvalidNetwork if unknown
};

/// Throws Error{InvalidNetwork} naming the violated constraint.
void validate(const NetworkDescription& net);

bool structurally_equal(const NetworkDescription& a, const NetworkDescription& b);

std::string_view to_string(BusType type);
std::string_view to_string(InjectionKind kind);

}  // namespace collapse
