#include "rpf/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rpf/errors.hpp"
#include "rpf/io.hpp"

namespace rpf {

namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Strips a trailing '%' comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\'') quoted = !quoted;
        if (line[i] == '%' && !quoted) return line.substr(0, i);
    }
    return line;
}

bool is_known_matrix(std::string_view name) {
    return name == "bus" || name == "gen" || name == "branch" || name == "gencost";
}

struct MatrixReader {
    std::string name;
    bool keep = false;
    int open_line = 0;
    int open_column = 0;
    Table rows;
    std::vector<double> row;

    void end_row() {
        if (!row.empty()) rows.push_back(std::move(row));
        row.clear();
    }
};

// Consumes matrix body text starting at `pos`; returns true once ']' is seen.
bool consume_matrix(MatrixReader& m, std::string_view line, std::size_t pos, int line_no) {
    std::size_t i = pos;
    while (i < line.size()) {
        char c = line[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            ++i;
            continue;
        }
        if (c == ';') {
            m.end_row();
            ++i;
            continue;
        }
        if (c == ']') {
            m.end_row();
            return true;
        }
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) && line[j] != ',' &&
               line[j] != ';' && line[j] != ']') {
            ++j;
        }
        auto token = line.substr(i, j - i);
        if (m.keep) {
            try {
                m.row.push_back(io::parse_real(token));
            } catch (FormatError const&) {
                throw SyntaxError("non-numeric token '" + std::string(token) + "' in mpc." + m.name, line_no,
                                  static_cast<int>(i) + 1);
            }
        }
        i = j;
    }
    m.end_row();  // newline terminates a row
    return false;
}

void write_table(std::ostringstream& out, std::string const& name, Table const& table) {
    out << "mpc." << name << " = [\n";
    for (auto const& row : table) {
        out << '\t';
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << '\t';
            out << io::format_real(row[c]);
        }
        out << ";\n";
    }
    out << "];\n\n";
}

double at(std::vector<double> const& row, int c, double fallback = 0.0) {
    return c < static_cast<int>(row.size()) ? row[c] : fallback;
}

int as_id(double value, char const* what) {
    if (value != std::floor(value)) throw ValidationError(std::string(what) + " is not an integer");
    return static_cast<int>(value);
}

}  // namespace

NetworkSpec parse_matpower_case(std::string_view text) {
    NetworkSpec spec;
    bool have_base = false;
    std::map<std::string, Table> matrices;

    std::optional<MatrixReader> open;
    bool in_cell = false;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        auto line = strip_comment(raw);

        if (open) {
            if (consume_matrix(*open, line, 0, line_no)) {
                if (open->keep) matrices[open->name] = std::move(open->rows);
                open.reset();
            }
            continue;
        }
        if (in_cell) {
            if (line.find('}') != std::string_view::npos) in_cell = false;
            continue;
        }

        auto body = trim(line);
        if (body.empty() || body.starts_with("function")) continue;
        auto mpc = body.find("mpc.");
        auto eq = body.find('=');
        if (mpc == std::string_view::npos || eq == std::string_view::npos || mpc > eq) continue;

        auto name = std::string(trim(body.substr(mpc + 4, eq - mpc - 4)));
        auto rhs = trim(body.substr(eq + 1));
        if (rhs.starts_with('[')) {
            MatrixReader m;
            m.name = name;
            m.keep = is_known_matrix(name);
            m.open_line = line_no;
            m.open_column = static_cast<int>(raw.find('[')) + 1;
            if (!m.keep) spec.warnings.push_back("ignored matrix mpc." + name);
            auto offset = static_cast<std::size_t>(rhs.data() - line.data()) + 1;
            if (consume_matrix(m, line, offset, line_no)) {
                if (m.keep) matrices[m.name] = std::move(m.rows);
            } else {
                open = std::move(m);
            }
        } else if (rhs.starts_with('{')) {
            spec.warnings.push_back("ignored cell array mpc." + name);
            in_cell = rhs.find('}') == std::string_view::npos;
        } else if (name == "baseMVA") {
            auto value = rhs;
            if (value.ends_with(';')) value.remove_suffix(1);
            try {
                spec.base_mva = io::parse_real(trim(value));
            } catch (FormatError const&) {
                throw SyntaxError("non-numeric baseMVA", line_no, static_cast<int>(eq) + 2);
            }
            have_base = true;
        } else if (name != "version") {
            spec.warnings.push_back("ignored field mpc." + name);
        }
    }
    if (open) throw SyntaxError("unterminated matrix mpc." + open->name, open->open_line, open->open_column);

    if (!matrices.contains("bus")) throw MissingSection("case has no mpc.bus matrix");
    if (!matrices.contains("branch")) throw MissingSection("case has no mpc.branch matrix");
    if (!have_base) spec.warnings.push_back("mpc.baseMVA missing, assuming 100");
    spec.bus = std::move(matrices["bus"]);
    spec.branch = std::move(matrices["branch"]);
    spec.gen = std::move(matrices["gen"]);
    spec.gencost = std::move(matrices["gencost"]);
    return spec;
}

std::string serialize_matpower_case(NetworkSpec const& spec) {
    std::ostringstream out;
    out << "function mpc = case_export\nmpc.version = '2';\n\n";
    out << "mpc.baseMVA = " << io::format_real(spec.base_mva) << ";\n\n";
    write_table(out, "bus", spec.bus);
    if (!spec.gen.empty()) write_table(out, "gen", spec.gen);
    write_table(out, "branch", spec.branch);
    if (!spec.gencost.empty()) write_table(out, "gencost", spec.gencost);
    return out.str();
}

NetworkSpec parse_network_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (json::parse_error const& e) {
        throw FormatError(std::string("network json: ") + e.what());
    }
    if (!doc.contains("buses") || !doc["buses"].is_array() || doc["buses"].empty()) {
        throw MissingSection("network json has no buses");
    }
    if (!doc.contains("branches") || !doc["branches"].is_array()) throw MissingSection("network json has no branches");

    NetworkSpec spec;
    spec.base_mva = doc.value("base_mva", 100.0);
    std::map<int, std::size_t> row_of;
    for (auto const& b : doc["buses"]) {
        int id = b.at("id").get<int>();
        row_of[id] = spec.bus.size();
        spec.bus.push_back({double(id), b.value("type", 1.0), 0.0, 0.0, b.value("gs", 0.0), b.value("bs", 0.0), 1.0,
                            b.value("vm", 1.0), b.value("va", 0.0), b.value("base_kv", 0.0), 1.0,
                            b.value("vmax", 1.1), b.value("vmin", 0.9)});
    }
    for (auto const& l : doc.value("loads", json::array())) {
        int bus = l.at("bus").get<int>();
        auto it = row_of.find(bus);
        if (it == row_of.end()) throw ValidationError("load at unknown bus " + std::to_string(bus));
        spec.bus[it->second][col::pd] += l.value("p", 0.0);
        spec.bus[it->second][col::qd] += l.value("q", 0.0);
    }
    for (auto const& g : doc.value("generators", json::array())) {
        std::vector<double> row(21, 0.0);
        row[col::gen_bus] = g.at("bus").get<double>();
        row[col::pg] = g.value("p", 0.0);
        row[col::vg] = g.value("v_ref", 1.0);
        row[6] = spec.base_mva;
        row[col::gen_status] = g.value("status", 1.0);
        row[col::pmax] = g.value("pmax", 0.0);
        row[col::pmin] = g.value("pmin", 0.0);
        spec.gen.push_back(std::move(row));
        if (g.contains("cost")) {
            auto coeffs = g["cost"].get<std::vector<double>>();
            std::vector<double> cost{2.0, 0.0, 0.0, double(coeffs.size())};
            cost.insert(cost.end(), coeffs.begin(), coeffs.end());
            spec.gencost.push_back(std::move(cost));
        }
    }
    for (auto const& br : doc["branches"]) {
        spec.branch.push_back({br.at("from").get<double>(), br.at("to").get<double>(), br.value("r", 0.0),
                               br.value("x", 0.0), br.value("b", 0.0), br.value("rate_a", 0.0), 0.0, 0.0,
                               br.value("tap", 0.0), br.value("shift", 0.0), br.value("status", 1.0), -360.0, 360.0});
    }
    if (!spec.gencost.empty() && spec.gencost.size() != spec.gen.size()) {
        throw ValidationError("either all or no generators must carry a cost");
    }
    return spec;
}

std::string network_to_json(NetworkSpec const& spec) {
    json doc;
    doc["base_mva"] = spec.base_mva;
    doc["buses"] = json::array();
    doc["loads"] = json::array();
    for (auto const& row : spec.bus) {
        doc["buses"].push_back({{"id", int(row[col::bus_i])},
                                {"type", at(row, col::bus_type, 1)},
                                {"gs", at(row, col::gs)},
                                {"bs", at(row, col::bs)},
                                {"vm", at(row, col::vm, 1.0)},
                                {"va", at(row, col::va)},
                                {"base_kv", at(row, col::base_kv)},
                                {"vmax", at(row, col::vmax, 1.1)},
                                {"vmin", at(row, col::vmin, 0.9)}});
        if (at(row, col::pd) != 0.0 || at(row, col::qd) != 0.0) {
            doc["loads"].push_back({{"bus", int(row[col::bus_i])}, {"p", row[col::pd]}, {"q", row[col::qd]}});
        }
    }
    doc["generators"] = json::array();
    for (std::size_t i = 0; i < spec.gen.size(); ++i) {
        auto const& row = spec.gen[i];
        json g{{"bus", int(row[col::gen_bus])}, {"p", at(row, col::pg)},        {"v_ref", at(row, col::vg, 1.0)},
               {"pmax", at(row, col::pmax)},    {"pmin", at(row, col::pmin)},   {"status", at(row, col::gen_status, 1)}};
        if (i < spec.gencost.size() && spec.gencost[i].size() > 4) {
            g["cost"] = std::vector<double>(spec.gencost[i].begin() + 4, spec.gencost[i].end());
        }
        doc["generators"].push_back(std::move(g));
    }
    doc["branches"] = json::array();
    for (auto const& row : spec.branch) {
        doc["branches"].push_back({{"from", int(row[col::f_bus])},
                                   {"to", int(row[col::t_bus])},
                                   {"r", row[col::br_r]},
                                   {"x", row[col::br_x]},
                                   {"b", at(row, col::br_b)},
                                   {"rate_a", at(row, col::rate_a)},
                                   {"tap", at(row, col::tap)},
                                   {"shift", at(row, col::shift)},
                                   {"status", at(row, col::br_status, 1)}});
    }
    return doc.dump(2);
}

InjectorConfig parse_injector_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (json::parse_error const& e) {
        throw FormatError(std::string("injector config: ") + e.what());
    }
    json const& list = doc.is_array() ? doc : doc.at("generators");
    InjectorConfig config;
    for (auto const& g : list) {
        config.generators.push_back({g.at("bus").get<int>(), g.at("k_v").get<double>(), g.at("p_rated").get<double>()});
    }
    return config;
}

void compute_admittance(Branch& branch) {
    using namespace std::complex_literals;
    std::complex<double> const ys = 1.0 / std::complex<double>(branch.r, branch.x);
    std::complex<double> const t = std::polar(branch.tap, branch.shift);
    std::complex<double> const ytt = ys + 1i * (branch.b_c / 2.0);
    branch.y_tt = ytt;
    branch.y_ff = ytt / (t * std::conj(t));
    branch.y_ft = -ys / std::conj(t);
    branch.y_tf = -ys / t;
}

int Network::bus_index(int external_id) const {
    for (auto const& b : buses) {
        if (b.external_id == external_id) return b.index;
    }
    throw ValidationError("unknown bus id " + std::to_string(external_id));
}

SpanningTree bfs_spanning_tree(int n_buses, std::vector<Branch> const& branches) {
    std::vector<std::vector<std::pair<int, int>>> adjacency(n_buses);
    for (auto const& br : branches) {
        adjacency[br.from].emplace_back(br.index, br.to);
        adjacency[br.to].emplace_back(br.index, br.from);
    }
    SpanningTree tree;
    tree.parent_bus.assign(n_buses, -1);
    tree.parent_branch.assign(n_buses, -1);
    tree.in_tree.assign(branches.size(), false);
    if (n_buses == 0) return tree;

    std::vector<bool> seen(n_buses, false);
    std::deque<int> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        tree.order.push_back(u);
        for (auto [b, w] : adjacency[u]) {
            if (seen[w]) continue;
            seen[w] = true;
            tree.parent_bus[w] = u;
            tree.parent_branch[w] = b;
            tree.in_tree[b] = true;
            queue.push_back(w);
        }
    }
    return tree;
}

std::vector<Cycle> cycle_basis(int n_buses, std::vector<Branch> const& branches, SpanningTree const& tree) {
    std::vector<int> depth(n_buses, 0);
    for (int u : tree.order) {
        if (tree.parent_bus[u] >= 0) depth[u] = depth[tree.parent_bus[u]] + 1;
    }
    auto orientation = [&](int branch, int walk_from) { return branches[branch].from == walk_from ? 1 : -1; };

    std::vector<Cycle> cycles;
    for (auto const& br : branches) {
        if (tree.in_tree[br.index]) continue;
        Cycle c;
        c.index = static_cast<int>(cycles.size());
        c.branch_ids.push_back(br.index);
        c.orientations.push_back(1);

        // Walk back from `to` to `from` through the tree: up from `to` to the
        // common ancestor, then down to `from`.
        int a = br.to, b = br.from;
        std::vector<std::pair<int, int>> down;  // (branch, parent) edges on the `from` side
        while (depth[a] > depth[b]) {
            c.branch_ids.push_back(tree.parent_branch[a]);
            c.orientations.push_back(orientation(tree.parent_branch[a], a));
            a = tree.parent_bus[a];
        }
        while (depth[b] > depth[a]) {
            down.emplace_back(tree.parent_branch[b], tree.parent_bus[b]);
            b = tree.parent_bus[b];
        }
        while (a != b) {
            c.branch_ids.push_back(tree.parent_branch[a]);
            c.orientations.push_back(orientation(tree.parent_branch[a], a));
            a = tree.parent_bus[a];
            down.emplace_back(tree.parent_branch[b], tree.parent_bus[b]);
            b = tree.parent_bus[b];
        }
        for (auto it = down.rbegin(); it != down.rend(); ++it) {
            c.branch_ids.push_back(it->first);
            c.orientations.push_back(orientation(it->first, it->second));
        }
        c.y_scale = cycle_scaling(c, branches);
        cycles.push_back(std::move(c));
    }
    return cycles;
}

std::vector<Cycle> cycle_basis(Network const& network) {
    return cycle_basis(network.n_buses(), network.branches, network.tree);
}

double cycle_scaling(Cycle const& cycle, std::vector<Branch> const& branches) {
    std::complex<double> z{0.0, 0.0};
    for (int id : cycle.branch_ids) z += std::complex<double>(branches.at(id).r, branches.at(id).x);
    if (z == std::complex<double>(0.0, 0.0)) {
        throw DegenerateCycle("cycle " + std::to_string(cycle.index) + " has zero total impedance");
    }
    return std::imag(1.0 / z);
}

std::vector<double> reconstruct_bus_angles(Network const& network, std::vector<double> const& branch_angles) {
    std::vector<double> theta(network.n_buses(), 0.0);
    for (int u : network.tree.order) {
        int p = network.tree.parent_bus[u];
        if (p < 0) continue;
        auto const& br = network.branches[network.tree.parent_branch[u]];
        double phi = branch_angles[br.index];
        theta[u] = br.from == p ? theta[p] - phi : theta[p] + phi;
    }
    return theta;
}

Network build_network(NetworkSpec const& spec, InjectorConfig const* config) {
    if (spec.bus.empty()) throw ValidationError("network has no buses");
    if (!(spec.base_mva > 0.0)) throw ValidationError("base_mva must be positive");
    double const base = spec.base_mva;

    Network net;
    net.base_mva = base;
    std::map<int, int> index_of;
    for (auto const& row : spec.bus) {
        if (row.size() < 13) throw ValidationError("bus row needs 13 columns");
        int id = as_id(row[col::bus_i], "bus id");
        if (index_of.contains(id)) throw ValidationError("duplicate bus id " + std::to_string(id));
        Bus b;
        b.index = static_cast<int>(net.buses.size());
        b.external_id = id;
        b.name = "bus " + std::to_string(id);
        b.type = static_cast<int>(row[col::bus_type]);
        b.base_kv = row[col::base_kv];
        b.v_min = row[col::vmin];
        b.v_max = row[col::vmax];
        b.g_shunt = row[col::gs] / base;
        b.b_shunt = row[col::bs] / base;
        index_of[id] = b.index;
        net.buses.push_back(std::move(b));
    }
    auto bus_of = [&](double value, char const* what) {
        auto it = index_of.find(as_id(value, what));
        if (it == index_of.end()) throw ValidationError(std::string(what) + " refers to unknown bus");
        return it->second;
    };

    for (auto const& row : spec.branch) {
        if (row.size() < 11) throw ValidationError("branch row needs 11 columns");
        if (row[col::br_status] == 0.0) continue;
        Branch br;
        br.index = static_cast<int>(net.branches.size());
        br.from = bus_of(row[col::f_bus], "branch from-bus");
        br.to = bus_of(row[col::t_bus], "branch to-bus");
        if (br.from == br.to) throw ValidationError("branch " + std::to_string(br.index + 1) + " is a self-loop");
        br.r = row[col::br_r];
        br.x = row[col::br_x];
        if (br.r == 0.0 && br.x == 0.0) {
            throw ValidationError("branch " + std::to_string(br.index + 1) + " has zero series impedance");
        }
        br.b_c = row[col::br_b];
        br.tap = row[col::tap] == 0.0 ? 1.0 : row[col::tap];
        br.shift = row[col::shift] * std::numbers::pi / 180.0;
        br.rate = row[col::rate_a] > 0.0 ? row[col::rate_a] / base : std::numeric_limits<double>::infinity();
        compute_admittance(br);
        net.branches.push_back(br);
    }

    net.tree = bfs_spanning_tree(net.n_buses(), net.branches);
    if (static_cast<int>(net.tree.order.size()) != net.n_buses()) throw ValidationError("network graph is disconnected");
    net.cycles = cycle_basis(net.n_buses(), net.branches, net.tree);

    for (auto const& b : net.buses) {
        auto const& row = spec.bus[b.index];
        if (row[col::pd] != 0.0 || row[col::qd] != 0.0) {
            net.loads.push_back({b.index, row[col::pd] / base, row[col::qd] / base});
        }
    }

    static constexpr double default_k_v[] = {130.0, 21.0, 13.0};
    std::vector<bool> used(config ? config->generators.size() : 0, false);
    int gen_row = -1;
    for (auto const& row : spec.gen) {
        ++gen_row;
        if (row.size() < 10) throw ValidationError("gen row needs 10 columns");
        if (row[col::gen_status] <= 0.0) continue;
        GeneratorSite g;
        g.bus = bus_of(row[col::gen_bus], "generator bus");
        g.p = row[col::pg] / base;
        g.v_ref = row[col::vg];
        g.p_max = row[col::pmax] / base;
        g.p_min = row[col::pmin] / base;

        int const k = static_cast<int>(net.generators.size());
        if (config) {
            bool found = false;
            for (std::size_t i = 0; i < config->generators.size() && !found; ++i) {
                if (!used[i] && config->generators[i].bus == net.buses[g.bus].external_id) {
                    used[i] = true;
                    found = true;
                    g.params = {config->generators[i].k_v, config->generators[i].p_rated};
                }
            }
            if (!found) {
                throw ValidationError("injector config has no entry for generator at bus " +
                                      std::to_string(net.buses[g.bus].external_id));
            }
        } else {
            if (k >= 3) throw ValidationError("generator " + std::to_string(k + 1) + " needs k_v in an injector config");
            g.params = {default_k_v[k], g.p_max};
        }
        if (!(g.params.k_v > 0.0)) throw ValidationError("k_v must be positive");
        if (!(g.params.p_rated > 0.0) || !std::isfinite(g.params.p_rated)) {
            throw ValidationError("p_rated must be positive and finite");
        }

        if (gen_row < static_cast<int>(spec.gencost.size())) {
            auto const& cost = spec.gencost[gen_row];
            if (cost.size() >= 4 && cost[0] == 2.0) {
                int n = static_cast<int>(cost[3]);
                std::vector<double> c(cost.begin() + 4, cost.begin() + std::min<std::size_t>(cost.size(), 4 + n));
                // highest order first; keep up to quadratic
                double* slots[] = {&g.cost_c0, &g.cost_c1, &g.cost_c2};
                for (int p = 0; p < static_cast<int>(c.size()) && p < 3; ++p) {
                    *slots[p] = c[c.size() - 1 - p] * std::pow(base, p);
                }
            }
        }
        net.generators.push_back(g);
    }

    std::ostringstream canon;
    canon << io::format_real(base) << '|';
    for (auto const& b : net.buses) {
        canon << b.external_id << ',' << io::format_real(b.g_shunt) << ',' << io::format_real(b.b_shunt) << ';';
    }
    canon << '|';
    for (auto const& br : net.branches) {
        canon << br.from << ',' << br.to << ',' << io::format_real(br.r) << ',' << io::format_real(br.x) << ','
              << io::format_real(br.b_c) << ',' << io::format_real(br.tap) << ',' << io::format_real(br.shift) << ';';
    }
    canon << '|';
    for (auto const& l : net.loads) canon << l.bus << ';';
    canon << '|';
    for (auto const& g : net.generators) {
        canon << g.bus << ',' << io::format_real(g.params.k_v) << ',' << io::format_real(g.params.p_rated) << ';';
    }
    net.fingerprint = io::hex64(io::fnv1a64(canon.str()));
    return net;
}

Network load_network(std::string const& path, std::string const& injector_config_path) {
    auto text = io::read_file(path);
    NetworkSpec spec = path.ends_with(".json") ? parse_network_json(text) : parse_matpower_case(text);
    if (injector_config_path.empty()) return build_network(spec);
    auto config = parse_injector_config(io::read_file(injector_config_path));
    return build_network(spec, &config);
}

}  // namespace rpf
