#pragma once

// Weighted directed communication graphs. a_ij > 0 means agent i receives
// information from agent j (edge j -> i). Node N-1 (0-based) is the reference
// agent of the reduced matrices.

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "syncd/lincore.hpp"

namespace syncd {

class Network {
public:
    Network() = default;

    explicit Network(std::size_t n_agents)
        : adjacency_(Matrix::Zero(static_cast<Eigen::Index>(n_agents), static_cast<Eigen::Index>(n_agents))) {}

    explicit Network(Matrix adjacency) : adjacency_(std::move(adjacency)) { validate(); }

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(adjacency_.rows()); }
    [[nodiscard]] const Matrix& adjacency() const { return adjacency_; }
    [[nodiscard]] double weight(std::size_t i, std::size_t j) const {
        return adjacency_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    /// Adds (or overwrites) the edge j -> i with weight a_ij (0-based indices).
    void set_edge(std::size_t i, std::size_t j, double w) {
        if (i >= size() || j >= size()) throw std::out_of_range("Network::set_edge: index out of range");
        if (i == j) throw std::invalid_argument("Network::set_edge: self-loops are not allowed");
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("Network::set_edge: weight must be finite and >= 0");
        adjacency_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
    }

private:
    void validate() const {
        detail::require_square(adjacency_, "Network");
        for (Eigen::Index i = 0; i < adjacency_.rows(); ++i) {
            if (adjacency_(i, i) != 0.0) throw std::invalid_argument("Network: a_ii must be 0");
            for (Eigen::Index j = 0; j < adjacency_.cols(); ++j)
                if (!(adjacency_(i, j) >= 0.0) || !std::isfinite(adjacency_(i, j)))
                    throw std::invalid_argument("Network: weights must be finite and nonnegative");
        }
    }

    Matrix adjacency_;
};

inline Matrix in_degree(const Network& net) {
    return net.adjacency().rowwise().sum().asDiagonal();
}

inline Matrix laplacian(const Network& net) {
    Matrix L = -net.adjacency();
    const Vector d = net.adjacency().rowwise().sum();
    L.diagonal() = d;
    return L;
}

/// D = I - (I + D_in)^{-1} L: nonnegative, unit row sums, d_ii = 1 / (1 + d_in(i)) > 0.
inline Matrix row_stochastic(const Network& net) {
    const Eigen::Index n = static_cast<Eigen::Index>(net.size());
    const Vector d = net.adjacency().rowwise().sum();
    Matrix D = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + d(i));
        D.row(i) = s * net.adjacency().row(i);
        D(i, i) = s;
    }
    return D;
}

/// Exchange weights used by the protocol: adjacency in continuous time, D in discrete time.
inline Matrix exchange_weights(const Network& net, TimeDomain domain) {
    if (domain == TimeDomain::Continuous) return net.adjacency();
    Matrix D = row_stochastic(net);
    D.diagonal().setZero(); // the diagonal never contributes to relative sums
    return D;
}

/// True iff some root reaches every node along directed edges (j -> i when a_ij > 0).
inline bool has_spanning_tree(const Network& net) {
    const std::size_t n = net.size();
    if (n == 0) return false;
    for (std::size_t root = 0; root < n; ++root) {
        std::vector<char> seen(n, 0);
        std::deque<std::size_t> queue{root};
        seen[root] = 1;
        std::size_t count = 1;
        while (!queue.empty()) {
            const std::size_t j = queue.front();
            queue.pop_front();
            for (std::size_t i = 0; i < n; ++i) {
                if (!seen[i] && net.weight(i, j) > 0.0) {
                    seen[i] = 1;
                    ++count;
                    queue.push_back(i);
                }
            }
        }
        if (count == n) return true;
    }
    return false;
}

namespace detail {
inline Matrix reduce_against_last_row(const Matrix& M, const char* what) {
    detail::require_square(M, what);
    const Eigen::Index n = M.rows();
    if (n < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 agents");
    return M.topLeftCorner(n - 1, n - 1) - Vector::Ones(n - 1) * M.row(n - 1).head(n - 1);
}
} // namespace detail

/// lbar_ij = l_ij - l_Nj for i, j < N.
inline Matrix reduce_laplacian(const Matrix& L) { return detail::reduce_against_last_row(L, "reduce_laplacian"); }

/// dtilde_ij = d_ij - d_Nj for i, j < N.
inline Matrix reduce_stochastic(const Matrix& D) { return detail::reduce_against_last_row(D, "reduce_stochastic"); }

struct GraphMatrices {
    Matrix L;
    Matrix D_in;
    Matrix D;
    Matrix L_bar;
    Matrix D_tilde;
};

inline GraphMatrices graph_matrices(const Network& net) {
    GraphMatrices g;
    g.L = laplacian(net);
    g.D_in = in_degree(net);
    g.D = row_stochastic(net);
    if (net.size() >= 2) {
        g.L_bar = reduce_laplacian(g.L);
        g.D_tilde = reduce_stochastic(g.D);
    }
    return g;
}

/// Portable uniform draw in [0, 1) from a 64-bit engine.
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)) % n;
}

/// Seeded digraph containing a directed spanning tree: a random tree over a
/// random node order plus about N/2 extra random edges.
inline Network random_spanning_network(std::size_t n, std::uint64_t seed, double w_min = 0.5, double w_max = 1.5) {
    if (n < 2) throw std::invalid_argument("random_spanning_network: need N >= 2");
    if (!(w_min > 0.0 && w_max >= w_min)) throw std::invalid_argument("random_spanning_network: bad weight range");
    std::mt19937_64 rng(seed);
    auto weight = [&] { return w_min + (w_max - w_min) * unit_uniform(rng); };

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

    Network net(n);
    for (std::size_t k = 1; k < n; ++k) {
        const std::size_t parent = order[uniform_index(rng, k)];
        net.set_edge(order[k], parent, weight());
    }
    for (std::size_t e = 0; e < n / 2; ++e) {
        const std::size_t i = uniform_index(rng, n);
        const std::size_t j = uniform_index(rng, n);
        if (i != j) net.set_edge(i, j, weight());
    }
    return net;
}

} // namespace syncd
