#include "esopt/io.hpp"

#include "json.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace esopt {

const char* const kToolVersion = "0.1.0";

namespace {

constexpr char kMagic[8] = {'E', 'S', 'O', 'P', 'T', 'V', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("solution dump truncated");
    return v;
}

void put_axis(std::ostream& os, const Axis& a) {
    put(os, a.lo);
    put(os, a.hi);
    put(os, static_cast<std::int32_t>(a.n));
}

Axis get_axis(std::istream& is) {
    Axis a;
    a.lo = get<double>(is);
    a.hi = get<double>(is);
    a.n = get<std::int32_t>(is);
    if (a.n < 2) throw std::runtime_error("solution dump: bad axis");
    return a;
}

}  // namespace

std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

void write_solution_csv(std::ostream& os, const ValueField& V, const PolicyField& policy, const ModelParams& p,
                        int time_stride) {
    if (time_stride < 1) throw ContractViolation("write_solution_csv: stride must be >= 1");
    const auto& g = V.grid;
    os << "s,q,nu1,t,V,mode,rate\n";
    std::string line;
    for (int it = 0; it < g.t.n; ++it) {
        if (it % time_stride != 0 && it != g.t.n - 1) continue;
        const std::string t = format_double(g.t.node(it));
        for (int iq = 0; iq < g.q.n; ++iq) {
            const std::string q = format_double(g.q.node(iq));
            for (int iv = 0; iv < g.nu.n; ++iv) {
                const std::string nu = format_double(g.nu.node(iv));
                for (int is = 0; is < g.s.n; ++is) {
                    const Mode m = policy(is, iq, iv, it);
                    line.clear();
                    line += format_double(g.s.node(is));
                    line += ',';
                    line += q;
                    line += ',';
                    line += nu;
                    line += ',';
                    line += t;
                    line += ',';
                    line += format_double(V(is, iq, iv, it));
                    line += ',';
                    line += to_string(m);
                    line += ',';
                    line += format_double(mode_rate(m, g.q.node(iq), p));
                    line += '\n';
                    os << line;
                }
            }
        }
    }
}

void write_solution_binary(const std::filesystem::path& path, const ValueField& V, const PolicyField& policy) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kMagic, sizeof kMagic);
    for (const Axis* a : {&V.grid.s, &V.grid.q, &V.grid.nu, &V.grid.t}) put_axis(os, *a);
    os.write(reinterpret_cast<const char*>(V.data.data()), static_cast<std::streamsize>(V.data.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(policy.modes.data()), static_cast<std::streamsize>(policy.modes.size()));
}

SolveResult read_solution_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error(path.string() + " is not a solution dump");
    Grid4D g;
    g.s = get_axis(is);
    g.q = get_axis(is);
    g.nu = get_axis(is);
    g.t = get_axis(is);
    SolveResult r{ValueField(g), PolicyField(g), {}};
    is.read(reinterpret_cast<char*>(r.value.data.data()), static_cast<std::streamsize>(g.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(r.policy.modes.data()), static_cast<std::streamsize>(g.size()));
    if (!is) throw std::runtime_error("solution dump truncated");
    for (Mode m : r.policy.modes)
        if (static_cast<int>(m) > 2) throw std::runtime_error("solution dump: bad mode byte");
    return r;
}

void write_barriers_csv(std::ostream& os, const BarrierField& b) {
    const bool smooth = b.smoothed();
    os << "q,nu1,t,buy_level,buy_status,sell_level,sell_status";
    if (smooth) os << ",buy_smooth,sell_smooth";
    os << '\n';
    for (int it = 0; it < b.t.n; ++it)
        for (int iq = 0; iq < b.q.n; ++iq)
            for (int iv = 0; iv < b.nu.n; ++iv) {
                const std::size_t k = b.index(iq, iv, it);
                const double q = b.q.node(iq), nu = b.nu.node(iv), t = b.t.node(it);
                os << format_double(q) << ',' << format_double(nu) << ',' << format_double(t) << ','
                   << format_double(b.buy_level[k]) << ',' << to_string(b.buy_status[k]) << ','
                   << format_double(b.sell_level[k]) << ',' << to_string(b.sell_status[k]);
                if (smooth)
                    os << ',' << format_double(b.buy_smooth->poly(q, nu, t)) << ','
                       << format_double(b.sell_smooth->poly(q, nu, t));
                os << '\n';
            }
}

std::string barriers_json(const BarrierField& b) {
    using nlohmann::json;
    json doc;
    doc["s_spacing"] = b.s_spacing;
    doc["flagged_nodes"] = b.flagged();
    const auto poly = [](const SmoothBarrier& sb) {
        const auto& p = sb.poly;
        const auto& w = p.time_warp();
        return json{{"basis", w.enabled ? "chebyshev_tensor(q,nu1,tau)" : "chebyshev_tensor(q,nu1,t)"},
                    {"time_map", w.enabled ? json{{"tau", "-log(horizon - t + offset)"},
                                                  {"horizon", w.horizon},
                                                  {"offset", w.offset}}
                                           : json("identity")},
                    {"degrees", p.degrees()},
                    {"lower", p.lower()},
                    {"upper", p.upper()},
                    {"coefficients", p.coefficients()},
                    {"max_deviation", sb.max_deviation},
                    {"max_deviation_t_le_0.95T", sb.max_deviation_early},
                    {"fitted_nodes", sb.fitted_nodes}};
    };
    if (b.buy_smooth) doc["buy"] = poly(*b.buy_smooth);
    if (b.sell_smooth) doc["sell"] = poly(*b.sell_smooth);
    return doc.dump(2);
}

void write_nonparallelity_csv(std::ostream& os, const NonParallelityReport& r, const BarrierField& b) {
    os << "q,nu1,t,side,margin\n";
    for (const auto& n : r.failing)
        os << format_double(b.q.node(n.iq)) << ',' << format_double(b.nu.node(n.iv)) << ','
           << format_double(b.t.node(n.it)) << ',' << (n.sell_side ? "sell" : "buy") << ','
           << format_double(n.margin) << '\n';
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void write_manifest(const std::filesystem::path& dir, const std::string& subcommand, std::uint64_t seed,
                    const std::string& config_json, const std::vector<std::string>& files) {
    using nlohmann::json;
    json doc;
    doc["subcommand"] = subcommand;
    doc["tool_version"] = kToolVersion;
    doc["seed"] = seed;
    doc["config"] = json::parse(config_json);
    json list = json::array();
    for (const auto& f : files) {
        std::ostringstream hex;
        hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a64_file(dir / f);
        list.push_back({{"file", f}, {"fnv1a64", hex.str()}, {"bytes", std::filesystem::file_size(dir / f)}});
    }
    doc["outputs"] = list;
    std::ofstream os(dir / "manifest.json");
    os << doc.dump(2) << '\n';
}

}  // namespace esopt
