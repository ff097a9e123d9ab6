#pragma once

// Agent and target models from the reproduction cases, shared by tests and the
// acceptance binary.

#include <vector>

#include "syncd/homogenize.hpp"

namespace syncd::testing {

inline Matrix rows(Eigen::Index r, Eigen::Index c, std::initializer_list<double> v) {
    Matrix M(r, c);
    auto it = v.begin();
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = *it++;
    return M;
}

inline AgentModel agent_chain4() {
    return {rows(4, 4, {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0}), rows(4, 2, {0, 1, 0, 0, 1, 0, 0, 1}),
            rows(1, 4, {1, 0, 0, 0}), Matrix::Identity(4, 4)};
}

inline AgentModel agent_triple_integrator() {
    return {rows(3, 3, {0, 1, 0, 0, 0, 1, 0, 0, 0}), rows(3, 1, {0, 0, 1}), rows(1, 3, {1, 0, 0}),
            Matrix::Identity(3, 3)};
}

inline AgentModel agent_fifth_order() {
    return {rows(5, 5, {-1, 0, 0, -1, 0, 0, 0, 1, 1, 0, 0, 1, -1, 1, 0, 0, 0, 0, 1, 1, -1, 1, 0, 1, 1}),
            rows(5, 2, {0, 0, 0, 0, 0, 1, 0, 0, 1, 0}), rows(1, 5, {0, 0, 0, 1, 0}), Matrix::Identity(5, 5)};
}

/// Agents 1..5 of the reproduction cases (2 and 4 share a model, as do 3 and 5).
inline std::vector<AgentModel> reference_agents() {
    return {agent_chain4(), agent_triple_integrator(), agent_fifth_order(), agent_triple_integrator(),
            agent_fifth_order()};
}

/// Discrete-time agent set: the fifth-order agent has an invariant zero at -1,
/// which lies on the unit circle, so its state matrix is halved.
inline std::vector<AgentModel> reference_agents_dt() {
    auto a = reference_agents();
    a[2].A *= 0.5;
    a[4].A *= 0.5;
    return a;
}

inline TargetModel reference_target() { return make_target_model(1, 3, {0.0, 1.0}, 0.5); }

inline TargetModel reference_target_dt() { return make_target_model(1, 3, {0.0, 0.1}, 4.0, TimeDomain::Discrete); }

} // namespace syncd::testing
