// Command line front end for the spade library: averaged mode probabilities,
// Fisher information, resolution limits, Monte Carlo experiments, and a
// validation report that cross-checks the closed forms against the quadrature
// oracle.
//
// Output contract: tables are CSV with the header "x,tau,mode,value,method,err"
// and floating point at 17 significant digits.  --gnuplot FILE additionally
// writes the same table as space separated columns behind a "#" header.
// Exit codes: 0 success, 1 numeric failure, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spade/brownian.hpp"
#include "spade/fisher.hpp"
#include "spade/monte_carlo.hpp"
#include "spade/record_json.hpp"
#include "spade/special_functions.hpp"

namespace {

using spade::AveragedProbabilities;
using spade::ModeIndex;

// Flag combinations the parser cannot reject on its own; reported on stderr
// with exit code 2, like any other usage mistake.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Row {
    double x = 0.0;
    double tau = 0.0;
    std::string mode;
    double value = 0.0;
    std::string method;
    double err = 0.0;
};

void write_gnuplot(const std::string& path, const std::string& header,
                   const std::vector<std::vector<double>>& cols_rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "# " << header << "\n";
    for (const auto& r : cols_rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? " " : "") << fmt(r[i]);
        out << "\n";
    }
}

void print_table(const std::vector<Row>& rows, const std::string& gnuplot_path) {
    std::printf("x,tau,mode,value,method,err\n");
    for (const auto& r : rows)
        std::printf("%s,%s,%s,%s,%s,%s\n", fmt(r.x).c_str(), fmt(r.tau).c_str(),
                    r.mode.c_str(), fmt(r.value).c_str(), r.method.c_str(),
                    fmt(r.err).c_str());
    if (gnuplot_path.empty()) return;
    std::ofstream out(gnuplot_path);
    if (!out) throw std::runtime_error("cannot open " + gnuplot_path + " for writing");
    out << "# x tau mode value method err\n";
    for (const auto& r : rows)
        out << fmt(r.x) << ' ' << fmt(r.tau) << ' ' << r.mode << ' ' << fmt(r.value)
            << ' ' << r.method << ' ' << fmt(r.err) << "\n";
}

// Runs fn(0..n-1) on up to SPADE_THREADS workers (hardware count otherwise);
// the first exception wins and is rethrown after the join.
void parallel_for(int n, const std::function<void(int)>& fn) {
    const int nt = spade::detail::thread_count(n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first;
    std::mutex guard;
    auto worker = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(guard);
                if (!first) first = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

std::string mode_label(ModeIndex idx) {
    return std::to_string(idx.n) + "_" + std::to_string(idx.m);
}

// Accepts "nm" (two digits), "n_m", or "bucket"; empty optional means bucket.
std::optional<ModeIndex> parse_mode(const std::string& text) {
    if (text == "bucket") return std::nullopt;
    int n = -1, m = -1;
    const auto us = text.find('_');
    try {
        if (us != std::string::npos) {
            n = std::stoi(text.substr(0, us));
            m = std::stoi(text.substr(us + 1));
        } else if (text.size() == 2 && std::isdigit(static_cast<unsigned char>(text[0])) &&
                   std::isdigit(static_cast<unsigned char>(text[1]))) {
            n = text[0] - '0';
            m = text[1] - '0';
        }
    } catch (const std::exception&) {
        n = -1;
    }
    if (n < 0 || m < 0)
        throw usage_error("--mode expects \"nm\", \"n_m\" or \"bucket\", got \"" + text + "\"");
    return ModeIndex{n, m};
}

// Shared unit options: a command takes either dimensionless --x/--tau or
// physical --d/--w/--D/--T, never a mix.  Dimensionless is canonical,
// x = d/(2w) and tau = D T / w^2.
struct UnitOpts {
    double x = 0.0, tau = 0.0;
    double d = 0.0, w = 1.0, D = 0.0, T = 1.0;
};

void add_unit_options(CLI::App* cmd, UnitOpts& u) {
    cmd->add_option("--x", u.x, "separation x = d/(2w), dimensionless");
    cmd->add_option("--tau", u.tau, "diffusion time tau = D T / w^2, dimensionless");
    cmd->add_option("--d", u.d, "source separation (physical units)");
    cmd->add_option("--w", u.w, "PSF width (physical units)");
    cmd->add_option("--D", u.D, "diffusion coefficient (physical units)");
    cmd->add_option("--T", u.T, "cycle time (physical units)");
}

bool physical_given(const CLI::App& cmd) {
    return cmd.count("--d") || cmd.count("--w") || cmd.count("--D") || cmd.count("--T");
}

std::pair<double, double> resolve_units(const CLI::App& cmd, const UnitOpts& u,
                                        bool require_x) {
    const bool dl = cmd.count("--x") || cmd.count("--tau");
    const bool ph = physical_given(cmd);
    if (dl && ph)
        throw usage_error("give either dimensionless --x/--tau or physical "
                          "--d/--w/--D/--T, not a mix");
    if (ph) {
        if (!cmd.count("--d"))
            throw usage_error("physical units need --d (and --w, defaults w=1, D=0, T=1)");
        if (!(u.w > 0.0) || !(u.T > 0.0)) throw usage_error("--w and --T must be positive");
        if (!(u.d >= 0.0) || !(u.D >= 0.0))
            throw usage_error("--d and --D must be nonnegative");
        return {u.d / (2.0 * u.w), u.D * u.T / (u.w * u.w)};
    }
    if (require_x && !cmd.count("--x")) throw usage_error("missing --x (or physical --d)");
    if (!(u.x >= 0.0) || !(u.tau >= 0.0))
        throw usage_error("--x and --tau must be nonnegative");
    return {u.x, u.tau};
}

// ---------------------------------------------------------------------------
// prob

struct ProbArgs {
    UnitOpts u;
    int M = 1;
    double ta_fraction = 0.0;
    double nu = 0.5;
    std::string mode;
    std::string method = "closed";
    std::string gnuplot;
};

int run_prob(const CLI::App& cmd, const ProbArgs& a) {
    const auto [x, tau] = resolve_units(cmd, a.u, true);
    if (!(a.nu >= 0.0 && a.nu <= 1.0)) throw usage_error("--nu must lie in [0, 1]");
    if (!(a.ta_fraction >= 0.0 && a.ta_fraction < 1.0))
        throw usage_error("--ta-fraction must lie in [0, 1)");
    const bool closed = a.method == "closed";
    if (closed && a.M != 1)
        throw usage_error("--method closed covers modes n,m <= 1; use --method quadrature "
                          "for M > 1");
    if (!closed && (a.M < 0 || a.M > 10)) throw usage_error("--M must lie in [0, 10]");

    AveragedProbabilities bundle;
    if (closed && a.ta_fraction == 0.0) {
        bundle = spade::averaged_probs_closed_form(x, tau);
        bundle.error_estimate = spade::closed_form_rel_error;
    } else if (closed) {
        const double k = 1.0 / a.ta_fraction;
        bundle.x = x;
        bundle.tau = tau;
        bundle.method = "closed_form";
        bundle.error_estimate = spade::closed_form_rel_error;
        double listed = 0.0;
        for (const ModeIndex idx : {ModeIndex{0, 0}, ModeIndex{0, 1}, ModeIndex{1, 0},
                                    ModeIndex{1, 1}}) {
            const double p = spade::aligned_prob_with_ta(idx, x, tau, k);
            bundle.probs[idx] = p;
            listed += p;
        }
        bundle.residual = 1.0 - listed;
    } else {
        bundle = spade::averaged_probs_quadrature(x, tau, a.ta_fraction, a.M);
    }

    auto row_err = [&](double p) {
        return bundle.method == "closed_form" ? std::abs(p) * bundle.error_estimate
                                              : bundle.error_estimate;
    };
    std::vector<Row> rows;
    if (cmd.count("--mode")) {
        const std::optional<ModeIndex> idx = parse_mode(a.mode);
        double p = 0.0;
        if (!idx) {
            p = bundle.residual;
        } else {
            const auto it = bundle.probs.find(*idx);
            if (it == bundle.probs.end())
                throw usage_error("--mode " + a.mode + " is outside the computed set "
                                  "(raise --M or use --method quadrature)");
            p = it->second;
        }
        rows.push_back({x, tau, idx ? mode_label(*idx) : "bucket", p, bundle.method,
                        row_err(p)});
    } else {
        for (const auto& [idx, p] : bundle.probs)
            rows.push_back({x, tau, mode_label(idx), p, bundle.method, row_err(p)});
        rows.push_back({x, tau, "bucket", bundle.residual, bundle.method,
                        row_err(bundle.residual)});
    }
    print_table(rows, a.gnuplot);
    return 0;
}

// ---------------------------------------------------------------------------
// fi

struct FiArgs {
    UnitOpts u;
    int M = 1;
    std::string method = "spade";
    double k_alignment = 0.0;
    bool include_bucket = false;
    std::string regime;
    bool sweep = false;
    bool crossover = false;
    int points = 25;
    std::string gnuplot;
};

int run_fi(const CLI::App& cmd, const FiArgs& a) {
    if (a.crossover) {
        if (a.sweep || cmd.count("--x") || physical_given(cmd))
            throw usage_error("--crossover takes no point or sweep options");
        const double s = spade::spade_di_crossover();
        std::printf("sqrt_tau,tau\n%s,%s\n", fmt(s).c_str(), fmt(s * s).c_str());
        return 0;
    }
    if (a.M < 1 || a.M > 3) throw usage_error("--M must lie in [1, 3]");
    std::optional<double> k;
    if (cmd.count("--k-alignment")) {
        if (!(a.k_alignment > 1.0)) throw usage_error("--k-alignment must exceed 1");
        k = a.k_alignment;
    }

    if (a.sweep) {
        if (cmd.count("--x") || physical_given(cmd))
            throw usage_error("--sweep fixes its own grid; drop --x/--d");
        if (a.method != "spade")
            throw usage_error("--sweep always tabulates both spade and direct rows");
        if (a.points < 2) throw usage_error("--points must be at least 2");
        const double tau = cmd.count("--tau") ? a.u.tau : 1e-3;
        if (!(tau >= 0.0)) throw usage_error("--tau must be nonnegative");
        const int n = a.points;
        std::vector<double> xs(n);
        for (int i = 0; i < n; ++i)
            xs[i] = 0.01 * std::pow(50.0, static_cast<double>(i) / (n - 1));
        std::vector<Row> sp(n), di(n);
        parallel_for(n, [&](int i) {
            const spade::FisherResult rs = spade::fi_spade(xs[i], tau, a.M, k,
                                                           a.include_bucket);
            const spade::FisherResult rd = spade::fi_direct_imaging(xs[i], tau);
            sp[i] = {xs[i], tau, "spade", rs.fi_per_photon, rs.method, rs.error_estimate};
            di[i] = {xs[i], tau, "direct", rd.fi_per_photon, rd.method, rd.error_estimate};
        });
        std::vector<Row> rows;
        for (int i = 0; i < n; ++i) {
            rows.push_back(sp[i]);
            rows.push_back(di[i]);
        }
        print_table(rows, "");
        if (!a.gnuplot.empty()) {
            std::vector<std::vector<double>> cols(n);
            for (int i = 0; i < n; ++i) cols[i] = {xs[i], sp[i].value, di[i].value};
            write_gnuplot(a.gnuplot, "x fi_spade fi_direct   (tau = " + fmt(tau) + ")",
                          cols);
        }
        return 0;
    }

    const auto [x, tau] = resolve_units(cmd, a.u, true);
    if (!(x > 0.0)) throw usage_error("Fisher information needs --x > 0");
    std::vector<Row> rows;
    if (a.method == "spade") {
        if (!a.regime.empty()) throw usage_error("--regime applies to --method asymptotic");
        const spade::FisherResult r = spade::fi_spade(x, tau, a.M, k, a.include_bucket);
        rows.push_back({x, tau, "spade", r.fi_per_photon, r.method, r.error_estimate});
    } else if (a.method == "direct") {
        if (k || a.include_bucket || !a.regime.empty())
            throw usage_error("--k-alignment/--include-bucket/--regime do not apply to "
                              "--method direct");
        const spade::FisherResult r = spade::fi_direct_imaging(x, tau);
        rows.push_back({x, tau, "direct", r.fi_per_photon, r.method, r.error_estimate});
    } else {  // asymptotic
        if (a.regime.empty())
            throw usage_error("--method asymptotic needs --regime short|long");
        const spade::Regime reg = a.regime == "short" ? spade::Regime::short_time
                                                      : spade::Regime::long_time;
        const double v = spade::fi_asymptotic_spade(x, tau, reg, k);
        rows.push_back({x, tau, "spade", v,
                        a.regime == "short" ? "asymptotic_short" : "asymptotic_long", 0.0});
    }
    print_table(rows, a.gnuplot);
    return 0;
}

// ---------------------------------------------------------------------------
// dmin

struct DminArgs {
    long long N = 0;
    double tau = 0.0;
    std::string scaling;
    int M = 1;
    std::string gnuplot;
};

spade::ScalingSpec parse_scaling(const std::string& text) {
    spade::ScalingSpec sc;
    bool got_q = false, got_kappa = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw usage_error("--scaling expects \"q=...,kappa=...\", got \"" + text + "\"");
        const std::string key = item.substr(0, eq);
        double val = 0.0;
        try {
            val = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw usage_error("--scaling: cannot parse value in \"" + item + "\"");
        }
        if (key == "q") {
            sc.q = val;
            got_q = true;
        } else if (key == "kappa") {
            sc.kappa = val;
            got_kappa = true;
        } else {
            throw usage_error("--scaling: unknown key \"" + key + "\"");
        }
        pos = comma + 1;
    }
    if (!got_q || !got_kappa) throw usage_error("--scaling needs both q and kappa");
    return sc;
}

int run_dmin(const CLI::App& cmd, const DminArgs& a) {
    if (a.N < 1) throw usage_error("--N must be a positive photon count");
    if (a.M < 1 || a.M > 3) throw usage_error("--M must lie in [1, 3]");
    const bool has_tau = cmd.count("--tau") != 0;
    const bool has_sc = cmd.count("--scaling") != 0;
    if (has_tau == has_sc) throw usage_error("give exactly one of --tau or --scaling");

    double dmin = 0.0, tau_eff = 0.0;
    if (has_tau) {
        if (!(a.tau >= 0.0)) throw usage_error("--tau must be nonnegative");
        dmin = spade::min_resolvable_distance(a.N, a.tau, a.M);
        tau_eff = a.tau;
    } else {
        const spade::ScalingSpec sc = parse_scaling(a.scaling);
        dmin = spade::min_resolvable_distance(a.N, sc, a.M);
        const double xsol = 0.5 * dmin;
        tau_eff = sc.kappa * sc.kappa * std::pow(xsol, 2.0 * sc.q);
    }
    const double xsol = 0.5 * dmin;
    const spade::FisherResult fi = spade::fi_spade(xsol, tau_eff, a.M);
    const double residual =
        std::abs(2.0 * xsol * std::sqrt(static_cast<double>(a.N) * fi.fi_per_photon) - 1.0);
    std::vector<Row> rows = {
        {xsol, tau_eff, "dmin", dmin, "self_consistent", 5e-7 * dmin},
        {xsol, tau_eff, "fi", fi.fi_per_photon, fi.method, fi.error_estimate},
        {xsol, tau_eff, "fixed_point_residual", residual, "self_consistent", 0.0},
    };
    print_table(rows, a.gnuplot);
    return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
    UnitOpts u;
    long long cycles = 1000;
    double mean_photons = 100.0;
    int M = 1;
    std::uint64_t seed = 12345;
    double nu = 0.5;
    double ta_fraction = 0.0;
    std::string out;
    bool estimate = false;
    bool correlated = false;
};

int run_simulate(const CLI::App& cmd, const SimArgs& a) {
    if (!(a.nu >= 0.0 && a.nu <= 1.0)) throw usage_error("--nu must lie in [0, 1]");
    if (!(a.ta_fraction >= 0.0 && a.ta_fraction < 1.0))
        throw usage_error("--ta-fraction must lie in [0, 1)");
    if (a.M < 0 || a.M > 10) throw usage_error("--M must lie in [0, 10]");
    if (a.cycles < 1) throw usage_error("--cycles must be positive");
    if (!(a.mean_photons >= 0.0)) throw usage_error("--mean-photons must be nonnegative");

    spade::SystemConfig cfg;
    const auto [x0, tau0] = resolve_units(cmd, a.u, true);
    if (physical_given(cmd)) {
        cfg.separation_d = a.u.d;
        cfg.psf_width_w = a.u.w;
        cfg.diffusion_D = a.u.D;
        cfg.cycle_time_T = a.u.T;
    } else {
        cfg.separation_d = 2.0 * x0;
        cfg.psf_width_w = 1.0;
        cfg.diffusion_D = tau0;
        cfg.cycle_time_T = 1.0;
    }
    cfg.brightness_nu = a.nu;
    cfg.alignment_time_ta = a.ta_fraction * cfg.cycle_time_T;

    const spade::ExperimentRecord rec =
        spade::simulate_cycles(cfg, a.cycles, a.mean_photons, a.M, a.seed, a.correlated);
    if (!a.out.empty()) {
        const nlohmann::json j = rec;
        std::ofstream f(a.out);
        if (!f) throw std::runtime_error("cannot open " + a.out + " for writing");
        f << j.dump(2) << "\n";
    }

    long long total = rec.bucket_count;
    for (const auto& [idx, c] : rec.counts) total += c;
    const double x = cfg.separation_d / (2.0 * cfg.psf_width_w);
    const double tau = cfg.diffusion_D * cfg.cycle_time_T /
                       (cfg.psf_width_w * cfg.psf_width_w);
    const AveragedProbabilities model =
        spade::averaged_probs_quadrature(x, tau, a.ta_fraction, a.M);

    std::printf("n_cycles,total_counts,seed,x,tau\n%lld,%lld,%llu,%s,%s\n\n", rec.n_cycles,
                total, static_cast<unsigned long long>(rec.seed), fmt(x).c_str(),
                fmt(tau).c_str());
    std::printf("mode,empirical,model,abs_diff,tolerance,ok\n");
    auto summary_row = [&](const std::string& label, long long count, double pmod) {
        const double emp = total > 0 ? static_cast<double>(count) / total : 0.0;
        const double se = total > 0 ? std::sqrt(std::max(emp * (1.0 - emp), 1e-12) /
                                                static_cast<double>(total))
                                    : 0.0;
        const double tol = 4.0 * se + model.error_estimate;
        const double diff = std::abs(emp - pmod);
        std::printf("%s,%s,%s,%s,%s,%d\n", label.c_str(), fmt(emp).c_str(),
                    fmt(pmod).c_str(), fmt(diff).c_str(), fmt(tol).c_str(),
                    diff <= tol ? 1 : 0);
    };
    for (const auto& [idx, p] : model.probs) {
        const auto it = rec.counts.find(idx);
        summary_row(mode_label(idx), it == rec.counts.end() ? 0 : it->second, p);
    }
    summary_row("bucket", rec.bucket_count, model.residual);

    if (a.estimate) {
        const spade::MleResult mle = spade::mle_separation(rec, tau, std::max(a.M, 1));
        std::printf("\nd_hat,stderr,loglik,converged,truth_d\n%s,%s,%s,%d,%s\n",
                    fmt(mle.d_hat).c_str(), fmt(mle.stderr_estimate).c_str(),
                    fmt(mle.loglik).c_str(), mle.converged ? 1 : 0,
                    fmt(cfg.separation_d).c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// validate

// Audit variants of the closed forms: alternate normalizations that came up
// while deriving the working expressions.  Each is compared pointwise against
// the working form; a genuine reconciliation must be a single constant factor.
double p00_variant(double x, double tau) {
    const double G = 1.0 + 4.0 * tau, x2 = x * x;
    const double phiG = spade::hyp2f2_1_1_2_5h(-x2 / G).value;
    const double phi1 = spade::hyp2f2_1_1_2_5h(-x2).value;
    return 2.0 * (x2 * (phiG / G - phi1) + 3.0 * std::log(G)) / (12.0 * tau);
}

double p10_variant(double x, double tau) {
    const double G = 1.0 + 4.0 * tau, x2 = x * x;
    const double phiG = spade::hyp2f2_1_1_2_5h(-x2 / G).value;
    const double phi1 = spade::hyp2f2_1_1_2_5h(-x2).value;
    const double FG = spade::dawson(x / std::sqrt(G)).value;
    const double F1 = spade::dawson(x).value;
    return ((2.0 / x) * (2.0 * x2 * x * (phiG / G - phi1) + 3.0 * FG / std::sqrt(G) -
                         3.0 * F1) +
            6.0 * std::log(G)) /
           (48.0 * tau);
}

double p11_variant(double x, double tau) {
    const double G = 1.0 + 4.0 * tau, x2 = x * x;
    const double phiG = spade::hyp2f2_1_1_2_5h(-x2 / G).value;
    const double phi1 = spade::hyp2f2_1_1_2_5h(-x2).value;
    const double FG = spade::dawson(x / std::sqrt(G)).value;
    const double F1 = spade::dawson(x).value;
    const double t1 =
        (8.0 * G * x2 * phi1 - 8.0 * x2 * phiG - 12.0 * G * std::log(G)) / (12.0 * tau + 3.0);
    const double t2 = (G * (32.0 * tau + 7.0) + 2.0 * x2) * FG / (std::pow(G, 2.5) * x);
    const double t3 = (2.0 * x + 7.0 / x) * F1;
    return (t1 - t2 + t3 + 1.0 / (G * G) - 1.0) / (64.0 * tau);
}

struct ValidateArgs {
    double grid_tol = 1e-6;
};

int run_validate(const ValidateArgs& a) {
    int failures = 0;
    auto report = [&](bool ok, const std::string& text) {
        std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", text.c_str());
        if (!ok) ++failures;
    };

    // 1. Closed forms against the quadrature oracle on the acceptance grid.
    {
        const std::vector<double> xs = {0.02, 0.05, 0.1, 0.2, 0.5};
        const std::vector<double> taus = {1e-4, 1e-3, 0.01, 0.1, 1.0};
        const int n = static_cast<int>(xs.size() * taus.size());
        std::vector<double> max_rel(n, 0.0), bucket_abs(n, 0.0);
        parallel_for(n, [&](int i) {
            const double x = xs[i / taus.size()];
            const double tau = taus[i % taus.size()];
            const AveragedProbabilities c = spade::averaged_probs_closed_form(x, tau);
            const AveragedProbabilities q = spade::averaged_probs_quadrature(x, tau);
            double rel = 0.0;
            for (const auto& [idx, pc] : c.probs)
                rel = std::max(rel, std::abs(pc - q.probs.at(idx)) / q.probs.at(idx));
            max_rel[i] = rel;
            bucket_abs[i] = std::abs(c.residual - q.residual);
        });
        std::printf("closed form vs quadrature oracle, modes n,m <= 1\n");
        std::printf("x,tau,max_rel_diff,bucket_abs_diff\n");
        double worst = 0.0, worst_b = 0.0;
        for (int i = 0; i < n; ++i) {
            std::printf("%s,%s,%s,%s\n", fmt(xs[i / taus.size()]).c_str(),
                        fmt(taus[i % taus.size()]).c_str(), fmt(max_rel[i]).c_str(),
                        fmt(bucket_abs[i]).c_str());
            worst = std::max(worst, max_rel[i]);
            worst_b = std::max(worst_b, bucket_abs[i]);
        }
        report(worst <= a.grid_tol,
               "grid agreement: max relative difference " + fmt(worst) + " (tolerance " +
                   fmt(a.grid_tol) + ")");
        report(worst_b <= 1e-7, "grid agreement: max bucket absolute difference " +
                                    fmt(worst_b) + " (tolerance 1e-07)");
    }

    // 2. Aligned zero-separation anchor p00(0, tau) = log(1 + 4 tau)/(4 tau).
    {
        std::printf("\nzero-separation anchor p00(x=0, tau) = log(1 + 4 tau)/(4 tau)\n");
        std::printf("tau,analytic,closed,quadrature,quad_abs_diff\n");
        double worst_q = 0.0, worst_c = 0.0;
        for (const double tau : {0.01, 0.25, 1.0}) {
            const double analytic = std::log1p(4.0 * tau) / (4.0 * tau);
            const double closed = spade::averaged_prob_closed_form({0, 0}, 0.0, tau);
            const double quad = spade::averaged_prob_quadrature({0, 0}, 0.0, tau).value;
            std::printf("%s,%s,%s,%s,%s\n", fmt(tau).c_str(), fmt(analytic).c_str(),
                        fmt(closed).c_str(), fmt(quad).c_str(),
                        fmt(std::abs(quad - analytic)).c_str());
            worst_q = std::max(worst_q, std::abs(quad - analytic));
            worst_c = std::max(worst_c, std::abs(closed / analytic - 1.0));
        }
        report(worst_q <= 1e-8, "anchor reproduced by quadrature: max abs diff " +
                                    fmt(worst_q) + " (tolerance 1e-08)");
        report(worst_c <= 1e-12, "anchor reproduced by the closed form: max rel diff " +
                                     fmt(worst_c) + " (tolerance 1e-12)");
    }

    // 3. Normalization audit.  For each variant the table lists the pointwise
    // ratio variant/working over a grid; `fit` is the mean ratio and `drift`
    // the spread.  A variant is reconciled only by a constant ratio.
    {
        // tau >= 0.01 keeps the 1/tau prefactors of the variants well
        // conditioned; the candidate/working ratio is then meaningful to ~1e-9.
        const std::vector<double> xs = {0.1, 0.2, 0.3, 0.5};
        const std::vector<double> taus = {0.01, 0.05, 0.2, 0.5};
        struct Audit {
            const char* name;
            double (*variant)(double, double);
            ModeIndex idx;
        };
        const std::vector<Audit> audits = {{"p00_variant", p00_variant, {0, 0}},
                                           {"p10_variant", p10_variant, {1, 0}},
                                           {"p11_variant", p11_variant, {1, 1}}};
        std::printf("\nnormalization audit: candidate closed-form variants\n");
        std::printf("variant,fit,ratio_min,ratio_max,drift\n");
        double fits[3] = {0, 0, 0}, drifts[3] = {0, 0, 0};
        for (std::size_t ai = 0; ai < audits.size(); ++ai) {
            double lo = 1e300, hi = -1e300, sum = 0.0;
            int cnt = 0;
            for (const double x : xs)
                for (const double tau : taus) {
                    const double ratio =
                        audits[ai].variant(x, tau) /
                        spade::averaged_prob_closed_form(audits[ai].idx, x, tau);
                    lo = std::min(lo, ratio);
                    hi = std::max(hi, ratio);
                    sum += ratio;
                    ++cnt;
                }
            fits[ai] = sum / cnt;
            drifts[ai] = hi - lo;
            std::printf("%s,%s,%s,%s,%s\n", audits[ai].name, fmt(fits[ai]).c_str(),
                        fmt(lo).c_str(), fmt(hi).c_str(), fmt(drifts[ai]).c_str());
        }
        // p00 candidate: the logarithm enters at twice the working weight, so no
        // constant reconciles it; at x = 0 it evaluates to 2 log(1+4 tau)/(4 tau),
        // which exceeds 1 for small tau and cannot be a probability.
        report(drifts[0] > 1e-3,
               "p00 candidate rejected: ratio to the working form drifts by " +
                   fmt(drifts[0]) + " (a valid candidate would be constant); the "
                   "working form is fixed by the zero-separation anchor above");
        report(std::abs(fits[1] - 1.0) <= 1e-9 && drifts[1] <= 1e-9,
               "p10 candidate matches the working form: constant factor " + fmt(fits[1]));
        // p11 cancels through ~1e-5 of its leading terms, so its ratio carries
        // more rounding noise than p10.
        report(std::abs(fits[2] + 1.0) <= 1e-8 && drifts[2] <= 1e-8,
               "p11 candidate is the negative of the working form (factor " +
                   fmt(fits[2]) + "); probabilities are nonnegative, so the working "
                   "sign is forced");
    }

    // 4. Centroid kernel weights.  The decaying kernel exp(-mu^2/(4 D t)) gives
    // axis weights J_k that sum to 1; the sign-flipped exponent grows without
    // bound and admits no normalization, so it is excluded by construction.
    {
        std::printf("\ncentroid kernel completeness: sum_k J_k(s, gamma) over k <= %d\n",
                    spade::detail::j_order_cap);
        std::printf("s,gamma,sum_minus_1\n");
        double worst = 0.0;
        for (const double s : {0.0, 0.4, 1.3})
            for (const double gamma : {1.02, 1.5, 3.0}) {
                double jw[spade::detail::j_order_cap + 1];
                spade::detail::j_weights(s, gamma, spade::detail::j_order_cap, jw);
                double sum = 0.0;
                for (int kk = 0; kk <= spade::detail::j_order_cap; ++kk) sum += jw[kk];
                std::printf("%s,%s,%s\n", fmt(s).c_str(), fmt(gamma).c_str(),
                            fmt(sum - 1.0).c_str());
                worst = std::max(worst, std::abs(sum - 1.0));
            }
        report(worst <= 1e-9, "kernel weights sum to 1: max |sum - 1| " + fmt(worst) +
                                  " (tolerance 1e-09); the sign-flipped exponent "
                                  "variant is non-normalizable and excluded");
    }

    std::printf("\nvalidate: %d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mode probabilities, Fisher information and resolution limits for two "
                 "weak point sources under Brownian centroid motion"};
    app.require_subcommand(1);

    ProbArgs pa;
    CLI::App* prob = app.add_subcommand(
        "prob", "Time-and-ensemble-averaged detection probabilities per mode");
    add_unit_options(prob, pa.u);
    prob->add_option("--M", pa.M, "largest mode index per axis (quadrature only)");
    prob->add_option("--ta-fraction", pa.ta_fraction, "alignment dead time t_a / T");
    prob->add_option("--nu", pa.nu, "relative brightness (validated; output unaffected)");
    prob->add_option("--mode", pa.mode, "single mode to print: \"nm\", \"n_m\" or bucket");
    prob->add_option("--method", pa.method, "closed or quadrature")
        ->check(CLI::IsMember({"closed", "quadrature"}));
    prob->add_option("--gnuplot", pa.gnuplot, "also write a space separated column file");

    FiArgs fa;
    CLI::App* fi = app.add_subcommand("fi", "Fisher information per photon, w^2 F");
    add_unit_options(fi, fa.u);
    fi->add_option("--M", fa.M, "largest sorted mode index per axis, 1 to 3");
    fi->add_option("--method", fa.method, "spade, direct or asymptotic")
        ->check(CLI::IsMember({"spade", "direct", "asymptotic"}));
    fi->add_option("--k-alignment", fa.k_alignment,
                   "realignment duty factor k = T / t_a (k > 1)");
    fi->add_flag("--include-bucket", fa.include_bucket,
                 "count the residual bucket as a detection channel");
    fi->add_option("--regime", fa.regime, "asymptotic regime: short or long")
        ->check(CLI::IsMember({"short", "long"}));
    fi->add_flag("--sweep", fa.sweep,
                 "log-spaced x sweep at fixed tau (default 0.001), spade and direct rows");
    fi->add_option("--points", fa.points, "sweep point count (default 25)");
    fi->add_flag("--crossover", fa.crossover,
                 "print sqrt(tau) where the long-time x^2 coefficients cross");
    fi->add_option("--gnuplot", fa.gnuplot, "also write a space separated column file");

    DminArgs da;
    CLI::App* dmin = app.add_subcommand(
        "dmin", "Minimal resolvable separation d_min/w = 1/sqrt(N F(d_min))");
    dmin->add_option("--N", da.N, "total photon budget");
    dmin->add_option("--tau", da.tau, "fixed diffusion time tau = D T / w^2");
    dmin->add_option("--scaling", da.scaling, "tie tau to x: \"q=1,kappa=0.2\"");
    dmin->add_option("--M", da.M, "largest sorted mode index per axis, 1 to 3");
    dmin->add_option("--gnuplot", da.gnuplot, "also write a space separated column file");

    SimArgs sa;
    CLI::App* sim = app.add_subcommand(
        "simulate", "Monte Carlo photon counting over realignment cycles");
    add_unit_options(sim, sa.u);
    sim->add_option("--cycles", sa.cycles, "number of realignment cycles");
    sim->add_option("--mean-photons", sa.mean_photons, "mean photons per cycle (Poisson)");
    sim->add_option("--M", sa.M, "largest sorted mode index per axis, 0 to 10");
    sim->add_option("--seed", sa.seed, "RNG seed; identical seeds replay identically");
    sim->add_option("--nu", sa.nu, "relative brightness of source 1");
    sim->add_option("--ta-fraction", sa.ta_fraction, "alignment dead time t_a / T");
    sim->add_option("--out", sa.out, "write the experiment record as JSON");
    sim->add_flag("--estimate", sa.estimate, "run the separation MLE on the record");
    sim->add_flag("--correlated", sa.correlated,
                  "photons of one cycle ride a single Brownian path");

    ValidateArgs va;
    CLI::App* val = app.add_subcommand(
        "validate", "Cross-check closed forms, anchors and kernel normalization");
    val->add_option("--grid-tol", va.grid_tol,
                    "relative tolerance for the closed-vs-quadrature grid");

    try {
        app.parse(argc, argv);
        if (prob->parsed()) return run_prob(*prob, pa);
        if (fi->parsed()) return run_fi(*fi, fa);
        if (dmin->parsed()) return run_dmin(*dmin, da);
        if (sim->parsed()) return run_simulate(*sim, sa);
        if (val->parsed()) return run_validate(va);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const usage_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
