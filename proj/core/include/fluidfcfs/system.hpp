#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fluidfcfs/errors.hpp"
#include "fluidfcfs/subset.hpp"

namespace fluidfcfs {

enum class RateMode { SD, CD, GENERAL };

std::string to_string(RateMode mode);

// Service-rate assignment. Rates are services per unit time; means are the
// reciprocals and are always derived, never stored.
struct RateModel {
    RateMode mode = RateMode::GENERAL;
    std::vector<double> per_server;   // SD: indexed like SystemSpec::servers()
    std::vector<double> per_customer; // CD: indexed like SystemSpec::customers()
    std::vector<double> per_edge;     // GENERAL: indexed like SystemSpec::edges()
};

struct Edge {
    int server = -1;
    int customer = -1;
    bool operator==(const Edge&) const = default;
};

// Immutable description of a parallel service system: servers, customer
// types with arrival fractions alpha, a bipartite compatibility graph, and
// a service-rate model. Identifier order in the source document fixes the
// index order used everywhere else (reports, matrices, permutations).
class SystemSpec {
public:
    // Builds and validates from parts. Throws ValidationError with the
    // violated invariant named in the message.
    static SystemSpec make(std::vector<std::string> servers,
                           std::vector<std::string> customers,
                           std::vector<double> alpha,
                           std::vector<Edge> edges,
                           RateModel rates,
                           std::optional<double> lambda = std::nullopt);

    // Parses the JSON configuration document format.
    static SystemSpec from_json_text(const std::string& text);
    std::string to_json_text(int indent = 2) const;

    int server_count() const { return static_cast<int>(servers_.size()); }
    int customer_count() const { return static_cast<int>(customers_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }

    const std::vector<std::string>& servers() const { return servers_; }
    const std::vector<std::string>& customers() const { return customers_; }
    const std::string& server_name(int j) const { return servers_[j]; }
    const std::string& customer_name(int i) const { return customers_[i]; }
    int server_index(const std::string& name) const;   // -1 if unknown
    int customer_index(const std::string& name) const; // -1 if unknown

    double alpha(int i) const { return alpha_[i]; }
    const std::vector<double>& alphas() const { return alpha_; }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int e) const { return edges_[e]; }
    // Index of edge (server j, customer i) in document order, or -1.
    int edge_index(int j, int i) const { return edge_lookup_[j * customer_count() + i]; }
    bool compatible(int j, int i) const { return edge_index(j, i) >= 0; }

    RateMode mode() const { return rates_.mode; }
    const RateModel& rates() const { return rates_; }
    // Effective per-edge service rate mu_{s_j,c_i}; total on edges.
    double edge_rate(int e) const;
    double rate(int j, int i) const; // throws ValidationError if (j,i) is not an edge
    double mean(int j, int i) const { return 1.0 / rate(j, i); }

    bool has_lambda() const { return lambda_.has_value(); }
    double lambda() const;

    Mask all_servers() const { return full_mask(server_count()); }
    Mask all_customers() const { return full_mask(customer_count()); }

    // C(S): union of compatibility sets of the servers in S.
    Mask customers_of(Mask server_set) const;
    // S(C): union of compatible-server sets of the types in C.
    Mask servers_of(Mask customer_set) const;
    // U(S): types with no compatible server outside S.
    Mask unique_customers_of(Mask server_set) const;
    Mask customers_of_server(int j) const { return server_compat_[j]; }
    Mask servers_of_customer(int i) const { return customer_compat_[i]; }

    double alpha_sum(Mask customer_set) const;
    // Sums of SD per-server rates; ModeError outside SD.
    double mu_server_sum(Mask server_set) const;
    double mu_total() const;
    double beta(Mask server_set) const; // mu_server_sum / mu_total, SD only

    // True when every (server, customer) pair is an edge.
    bool is_complete_graph() const;
    // True when the compatibility graph is connected and has I+J-1 edges.
    bool is_tree_graph() const;

    bool operator==(const SystemSpec& other) const;

private:
    SystemSpec() = default;
    void validate_and_index();

    std::vector<std::string> servers_;
    std::vector<std::string> customers_;
    std::vector<double> alpha_;
    std::vector<Edge> edges_;
    RateModel rates_;
    std::optional<double> lambda_;

    std::vector<double> edge_rate_;    // resolved per-edge rates
    std::vector<Mask> server_compat_;  // customer mask per server
    std::vector<Mask> customer_compat_; // server mask per customer
    std::vector<int> edge_lookup_;     // J*I dense (j,i) -> edge index or -1
};

} // namespace fluidfcfs
