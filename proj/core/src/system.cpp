#include "fluidfcfs/system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace fluidfcfs {

using nlohmann::json;

namespace {

// Shortest round-trip decimal form, for diagnostics ("alpha sums to 1.1").
std::string num(double x) { return json(x).dump(); }

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

} // namespace

std::string to_string(RateMode mode) {
    switch (mode) {
        case RateMode::SD: return "SD";
        case RateMode::CD: return "CD";
        case RateMode::GENERAL: return "GENERAL";
    }
    return "GENERAL";
}

SystemSpec SystemSpec::make(std::vector<std::string> servers,
                            std::vector<std::string> customers,
                            std::vector<double> alpha,
                            std::vector<Edge> edges,
                            RateModel rates,
                            std::optional<double> lambda) {
    SystemSpec spec;
    spec.servers_ = std::move(servers);
    spec.customers_ = std::move(customers);
    spec.alpha_ = std::move(alpha);
    spec.edges_ = std::move(edges);
    spec.rates_ = std::move(rates);
    spec.lambda_ = lambda;
    spec.validate_and_index();
    return spec;
}

void SystemSpec::validate_and_index() {
    const int J = server_count();
    const int I = customer_count();
    if (J == 0) fail("no servers declared");
    if (I == 0) fail("no customer types declared");
    if (J > kMaxEntities) fail("too many servers: " + std::to_string(J) + " > 63");
    if (I > kMaxEntities) fail("too many customer types: " + std::to_string(I) + " > 63");

    for (auto* names : {&servers_, &customers_}) {
        std::set<std::string> seen;
        for (const auto& n : *names) {
            if (n.empty()) fail("empty identifier");
            if (!seen.insert(n).second) fail("duplicate identifier \"" + n + "\"");
        }
    }
    for (const auto& s : servers_) {
        if (std::find(customers_.begin(), customers_.end(), s) != customers_.end())
            fail("identifier \"" + s + "\" used for both a server and a customer type");
    }

    if (static_cast<int>(alpha_.size()) != I)
        fail("alpha count " + std::to_string(alpha_.size()) +
             " does not match customer count " + std::to_string(I));
    double alpha_sum = 0.0;
    for (int i = 0; i < I; ++i) {
        if (!(alpha_[i] > 0.0) || !std::isfinite(alpha_[i]))
            fail("alpha for \"" + customers_[i] + "\" is " + num(alpha_[i]) +
                 ", must be > 0");
        alpha_sum += alpha_[i];
    }
    if (std::abs(alpha_sum - 1.0) > 1e-12)
        fail("alpha sums to " + num(alpha_sum));
    // Renormalize when the deviation exceeds accumulated rounding noise.
    // Already-normalized documents reload bitwise identical this way.
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * I;
    if (std::abs(alpha_sum - 1.0) > noise)
        for (double& a : alpha_) a /= alpha_sum;

    if (edges_.empty()) fail("no edges declared");
    edge_lookup_.assign(static_cast<size_t>(J) * I, -1);
    server_compat_.assign(J, 0);
    customer_compat_.assign(I, 0);
    for (int e = 0; e < edge_count(); ++e) {
        const Edge& ed = edges_[e];
        if (ed.server < 0 || ed.server >= J)
            fail("edge " + std::to_string(e) + " references unknown server");
        if (ed.customer < 0 || ed.customer >= I)
            fail("edge " + std::to_string(e) + " references unknown customer type");
        int& slot = edge_lookup_[ed.server * I + ed.customer];
        if (slot != -1)
            fail("duplicate edge (" + servers_[ed.server] + ", " +
                 customers_[ed.customer] + ")");
        slot = e;
        server_compat_[ed.server] |= bit(ed.customer);
        customer_compat_[ed.customer] |= bit(ed.server);
    }
    for (int j = 0; j < J; ++j)
        if (server_compat_[j] == 0) fail("server \"" + servers_[j] + "\" has no edges");
    for (int i = 0; i < I; ++i)
        if (customer_compat_[i] == 0)
            fail("customer type \"" + customers_[i] + "\" has no edges");

    auto check_rate = [&](double r, const std::string& what) {
        if (!std::isfinite(r) || !(r > 0.0))
            fail("rate for " + what + " is " + num(r) + ", must be finite and > 0");
    };
    switch (rates_.mode) {
        case RateMode::SD:
            if (static_cast<int>(rates_.per_server.size()) != J)
                fail("SD mode needs one rate per server");
            for (int j = 0; j < J; ++j) check_rate(rates_.per_server[j], servers_[j]);
            break;
        case RateMode::CD:
            if (static_cast<int>(rates_.per_customer.size()) != I)
                fail("CD mode needs one rate per customer type");
            for (int i = 0; i < I; ++i) check_rate(rates_.per_customer[i], customers_[i]);
            break;
        case RateMode::GENERAL:
            if (rates_.per_edge.size() != edges_.size())
                fail("GENERAL mode needs one rate per edge");
            for (int e = 0; e < edge_count(); ++e)
                check_rate(rates_.per_edge[e],
                           "edge (" + servers_[edges_[e].server] + ", " +
                               customers_[edges_[e].customer] + ")");
            break;
    }
    edge_rate_.resize(edges_.size());
    for (int e = 0; e < edge_count(); ++e) {
        switch (rates_.mode) {
            case RateMode::SD: edge_rate_[e] = rates_.per_server[edges_[e].server]; break;
            case RateMode::CD: edge_rate_[e] = rates_.per_customer[edges_[e].customer]; break;
            case RateMode::GENERAL: edge_rate_[e] = rates_.per_edge[e]; break;
        }
    }

    if (lambda_.has_value()) {
        if (!std::isfinite(*lambda_) || !(*lambda_ > 0.0))
            fail("lambda is " + num(*lambda_) + ", must be finite and > 0");
    }
}

int SystemSpec::server_index(const std::string& name) const {
    auto it = std::find(servers_.begin(), servers_.end(), name);
    return it == servers_.end() ? -1 : static_cast<int>(it - servers_.begin());
}

int SystemSpec::customer_index(const std::string& name) const {
    auto it = std::find(customers_.begin(), customers_.end(), name);
    return it == customers_.end() ? -1 : static_cast<int>(it - customers_.begin());
}

double SystemSpec::edge_rate(int e) const { return edge_rate_[e]; }

double SystemSpec::rate(int j, int i) const {
    int e = edge_index(j, i);
    if (e < 0)
        fail("(" + servers_[j] + ", " + customers_[i] + ") is not an edge");
    return edge_rate_[e];
}

double SystemSpec::lambda() const {
    if (!lambda_) fail("lambda required but not provided");
    return *lambda_;
}

Mask SystemSpec::customers_of(Mask server_set) const {
    Mask out = 0;
    for_each_bit(server_set, [&](int j) { out |= server_compat_[j]; });
    return out;
}

Mask SystemSpec::servers_of(Mask customer_set) const {
    Mask out = 0;
    for_each_bit(customer_set, [&](int i) { out |= customer_compat_[i]; });
    return out;
}

Mask SystemSpec::unique_customers_of(Mask server_set) const {
    Mask outside = all_servers() & ~server_set;
    return all_customers() & ~customers_of(outside);
}

double SystemSpec::alpha_sum(Mask customer_set) const {
    double sum = 0.0;
    for_each_bit(customer_set, [&](int i) { sum += alpha_[i]; });
    return sum;
}

double SystemSpec::mu_server_sum(Mask server_set) const {
    if (rates_.mode != RateMode::SD)
        throw ModeError("per-server rate aggregation requires SD mode, got " +
                        to_string(rates_.mode));
    double sum = 0.0;
    for_each_bit(server_set, [&](int j) { sum += rates_.per_server[j]; });
    return sum;
}

double SystemSpec::mu_total() const { return mu_server_sum(all_servers()); }

double SystemSpec::beta(Mask server_set) const {
    return mu_server_sum(server_set) / mu_total();
}

bool SystemSpec::is_complete_graph() const {
    return edge_count() == server_count() * customer_count();
}

bool SystemSpec::is_tree_graph() const {
    if (edge_count() != server_count() + customer_count() - 1) return false;
    // Connectivity check by BFS over the bipartite adjacency.
    std::vector<int> stack{0};
    Mask seen_s = bit(0), seen_c = 0;
    // Node encoding: server j as j, customer i as J+i.
    const int J = server_count();
    while (!stack.empty()) {
        int node = stack.back();
        stack.pop_back();
        if (node < J) {
            for_each_bit(server_compat_[node] & ~seen_c, [&](int i) {
                seen_c |= bit(i);
                stack.push_back(J + i);
            });
        } else {
            for_each_bit(customer_compat_[node - J] & ~seen_s, [&](int j) {
                seen_s |= bit(j);
                stack.push_back(j);
            });
        }
    }
    return seen_s == all_servers() && seen_c == all_customers();
}

bool SystemSpec::operator==(const SystemSpec& other) const {
    return servers_ == other.servers_ && customers_ == other.customers_ &&
           alpha_ == other.alpha_ && edges_ == other.edges_ &&
           rates_.mode == other.rates_.mode &&
           rates_.per_server == other.rates_.per_server &&
           rates_.per_customer == other.rates_.per_customer &&
           rates_.per_edge == other.rates_.per_edge && lambda_ == other.lambda_;
}

SystemSpec SystemSpec::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("document is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail("document root must be a JSON object");
    for (const char* key : {"servers", "customers", "edges", "rates"})
        if (!doc.contains(key)) fail(std::string("missing required key \"") + key + "\"");

    std::vector<std::string> servers;
    for (const auto& s : doc.at("servers")) {
        if (!s.is_string()) fail("servers must be an array of strings");
        servers.push_back(s.get<std::string>());
    }

    std::vector<std::string> customers;
    std::vector<double> alpha;
    for (const auto& c : doc.at("customers")) {
        if (!c.is_object() || !c.contains("name") || !c.contains("alpha"))
            fail("each customer needs {\"name\", \"alpha\"}");
        customers.push_back(c.at("name").get<std::string>());
        alpha.push_back(c.at("alpha").get<double>());
    }

    auto server_idx = [&](const std::string& n) {
        auto it = std::find(servers.begin(), servers.end(), n);
        if (it == servers.end()) fail("unknown server \"" + n + "\" in edges/rates");
        return static_cast<int>(it - servers.begin());
    };
    auto customer_idx = [&](const std::string& n) {
        auto it = std::find(customers.begin(), customers.end(), n);
        if (it == customers.end()) fail("unknown customer type \"" + n + "\" in edges/rates");
        return static_cast<int>(it - customers.begin());
    };

    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
        if (!e.is_array() || e.size() != 2)
            fail("each edge must be a [server, customer] pair");
        edges.push_back({server_idx(e.at(0).get<std::string>()),
                         customer_idx(e.at(1).get<std::string>())});
    }

    const json& rj = doc.at("rates");
    if (!rj.is_object() || !rj.contains("mode")) fail("rates needs a \"mode\"");
    std::string mode = rj.at("mode").get<std::string>();
    RateModel rates;
    if (mode == "SD") {
        rates.mode = RateMode::SD;
        if (!rj.contains("per_server")) fail("SD rates need \"per_server\"");
        rates.per_server.assign(servers.size(), std::numeric_limits<double>::quiet_NaN());
        for (const auto& [name, value] : rj.at("per_server").items())
            rates.per_server[server_idx(name)] = value.get<double>();
        for (size_t j = 0; j < servers.size(); ++j)
            if (std::isnan(rates.per_server[j]))
                fail("missing SD rate for server \"" + servers[j] + "\"");
    } else if (mode == "CD") {
        rates.mode = RateMode::CD;
        if (!rj.contains("per_customer")) fail("CD rates need \"per_customer\"");
        rates.per_customer.assign(customers.size(), std::numeric_limits<double>::quiet_NaN());
        for (const auto& [name, value] : rj.at("per_customer").items())
            rates.per_customer[customer_idx(name)] = value.get<double>();
        for (size_t i = 0; i < customers.size(); ++i)
            if (std::isnan(rates.per_customer[i]))
                fail("missing CD rate for customer type \"" + customers[i] + "\"");
    } else if (mode == "GENERAL") {
        rates.mode = RateMode::GENERAL;
        if (!rj.contains("per_edge")) fail("GENERAL rates need \"per_edge\"");
        // Entries are [server, customer, rate]; they must match the edge list.
        std::unordered_map<long long, double> by_pair;
        for (const auto& e : rj.at("per_edge")) {
            if (!e.is_array() || e.size() != 3)
                fail("each per_edge entry must be [server, customer, rate]");
            long long key = static_cast<long long>(server_idx(e.at(0).get<std::string>())) * 64
                          + customer_idx(e.at(1).get<std::string>());
            if (!by_pair.emplace(key, e.at(2).get<double>()).second)
                fail("duplicate per_edge rate entry");
        }
        for (const Edge& ed : edges) {
            auto it = by_pair.find(static_cast<long long>(ed.server) * 64 + ed.customer);
            if (it == by_pair.end())
                fail("missing GENERAL rate for edge (" + servers[ed.server] + ", " +
                     customers[ed.customer] + ")");
            rates.per_edge.push_back(it->second);
            by_pair.erase(it);
        }
        if (!by_pair.empty()) fail("per_edge contains an entry that is not an edge");
    } else {
        fail("unknown rate mode \"" + mode + "\"");
    }

    std::optional<double> lambda;
    if (doc.contains("lambda") && !doc.at("lambda").is_null())
        lambda = doc.at("lambda").get<double>();

    return make(std::move(servers), std::move(customers), std::move(alpha),
                std::move(edges), std::move(rates), lambda);
}

std::string SystemSpec::to_json_text(int indent) const {
    json doc;
    doc["servers"] = servers_;
    json cs = json::array();
    for (int i = 0; i < customer_count(); ++i)
        cs.push_back({{"name", customers_[i]}, {"alpha", alpha_[i]}});
    doc["customers"] = cs;
    json es = json::array();
    for (const Edge& e : edges_)
        es.push_back({servers_[e.server], customers_[e.customer]});
    doc["edges"] = es;
    json rj;
    rj["mode"] = to_string(rates_.mode);
    switch (rates_.mode) {
        case RateMode::SD: {
            json m = json::object();
            for (int j = 0; j < server_count(); ++j) m[servers_[j]] = rates_.per_server[j];
            rj["per_server"] = m;
            break;
        }
        case RateMode::CD: {
            json m = json::object();
            for (int i = 0; i < customer_count(); ++i) m[customers_[i]] = rates_.per_customer[i];
            rj["per_customer"] = m;
            break;
        }
        case RateMode::GENERAL: {
            json arr = json::array();
            for (int e = 0; e < edge_count(); ++e)
                arr.push_back({servers_[edges_[e].server], customers_[edges_[e].customer],
                               rates_.per_edge[e]});
            rj["per_edge"] = arr;
            break;
        }
    }
    doc["rates"] = rj;
    if (lambda_) doc["lambda"] = *lambda_;
    return doc.dump(indent) + "\n";
}

} // namespace fluidfcfs
