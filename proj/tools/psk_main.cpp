// psk: verification and benchmark driver for the polynomial-attention
// kernels. Subcommands: verify, amm, bench, gen, attn-compare.
// Exit codes: 0 success, 1 check failure, 2 usage/parameter error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psk/attention.hpp"
#include "psk/causal.hpp"
#include "psk/dense.hpp"
#include "psk/io.hpp"
#include "psk/learnable.hpp"
#include "psk/rng.hpp"
#include "psk/sketch.hpp"
#include "psk/verify.hpp"

namespace {

using psk::Matrix;
using psk::Precision;

std::vector<std::size_t> parse_size_list(const std::string& csv, const char* what) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        const std::string tok = csv.substr(pos, comma - pos);
        char* end = nullptr;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (end == tok.c_str() || *end != '\0' || v <= 0)
            throw psk::ValueError(std::string(what) + ": bad entry '" + tok + "'");
        out.push_back(static_cast<std::size_t>(v));
        if (comma == csv.size()) break;
        pos = comma + 1;
    }
    if (out.empty()) throw psk::ValueError(std::string(what) + ": empty list");
    return out;
}

Matrix make_inputs(const std::string& dist, std::size_t rows, std::size_t cols,
                   std::uint64_t seed, Precision prec) {
    if (dist == "gaussian") return psk::random_gaussian(rows, cols, seed, prec);
    if (dist == "unit-rows") return psk::random_unit_rows(rows, cols, seed, prec);
    throw psk::ValueError("unknown distribution '" + dist +
                          "' (expected gaussian or unit-rows)");
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw psk::IoError("cannot open '" + path + "' for writing");
    return file;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& prec_name,
               const std::string& report_path, const std::string& fault_name) {
    psk::InjectedFault fault = psk::InjectedFault::none;
    if (fault_name == "lt-diagonal") fault = psk::InjectedFault::lt_diagonal;
    else if (!fault_name.empty())
        throw psk::ValueError("unknown fault '" + fault_name + "'");
    const Precision prec = psk::precision_from_name(prec_name);
    const psk::VerifyReport report = psk::run_verify_suite(suite, seed, prec, fault);
    for (const auto& c : report.checks)
        std::printf("[%s] %-40s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
    const std::size_t failed =
        static_cast<std::size_t>(std::count_if(report.checks.begin(), report.checks.end(),
                                               [](const auto& c) { return !c.passed; }));
    std::printf("%zu checks, %zu failed (suite=%s seed=%llu precision=%s)\n",
                report.checks.size(), failed, report.suite.c_str(),
                static_cast<unsigned long long>(report.seed), prec_name.c_str());
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw psk::IoError("cannot open '" + report_path + "' for writing");
        os << psk::report_to_json(report).dump(2) << "\n";
    }
    return report.all_passed() ? 0 : 1;
}

int cmd_amm(std::size_t n, std::size_t h, int p, const std::string& r_list_csv,
            int trials, std::uint64_t seed, const std::string& dist, bool zeros,
            const std::string& out_path) {
    const std::vector<std::size_t> r_list = parse_size_list(r_list_csv, "--r-list");
    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    os << "p,n,h,r,trial,seed,rel_error\n";
    char buf[64];
    for (std::size_t r : r_list) {
        for (int trial = 0; trial < trials; ++trial) {
            const std::uint64_t tree_seed = psk::mix_seed(seed, r, static_cast<std::uint64_t>(trial));
            const psk::SketchTree tree = psk::sample_sketch(h, r, p, tree_seed);
            Matrix q, k;
            if (zeros) {
                q = Matrix(n, h);
                k = Matrix(n, h);
            } else {
                q = make_inputs(dist, n, h, psk::mix_seed(seed, 1, trial), Precision::f64);
                k = make_inputs(dist, n, h, psk::mix_seed(seed, 2, trial), Precision::f64);
            }
            const double err = psk::amm_relative_error(q, k, tree, p);
            std::snprintf(buf, sizeof(buf), "%.12e", err);
            os << p << "," << n << "," << h << "," << r << "," << trial << "," << tree_seed
               << "," << buf << "\n";
        }
    }
    return 0;
}

int cmd_bench(const std::string& mechanism, const std::string& n_list_csv, std::size_t h,
              std::size_t r, int p, std::size_t block, bool local, int reps,
              std::uint64_t seed, const std::string& out_path) {
    if (mechanism != "exact-poly-causal" && mechanism != "polysketch-causal" &&
        mechanism != "lt-naive" && mechanism != "lt-blocked")
        throw psk::ValueError("unknown mechanism '" + mechanism +
                              "' (expected exact-poly-causal, polysketch-causal, "
                              "lt-naive, or lt-blocked)");
    const std::vector<std::size_t> n_list = parse_size_list(n_list_csv, "--n-list");
    // refuse configs that would materialize n x n beyond the caps
    for (std::size_t n : n_list) {
        if (mechanism == "lt-naive" && n > psk::kLtNaiveMaxRows)
            throw psk::ValueError("lt-naive materializes n x n and is capped at n = " +
                                  std::to_string(psk::kLtNaiveMaxRows) + "; got " +
                                  std::to_string(n));
        if (mechanism == "exact-poly-causal" && n > psk::kCausalExactMaxRows)
            throw psk::ValueError("exact-poly-causal is capped at n = " +
                                  std::to_string(psk::kCausalExactMaxRows) + "; got " +
                                  std::to_string(n));
    }
    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    os << "mechanism,n,h,r,p,b,local,seed,wall_time_us,us_per_token,rel_error\n";
    for (std::size_t n : n_list) {
        const Matrix q = psk::random_gaussian(n, h, psk::mix_seed(seed, n, 0));
        const Matrix k = psk::random_gaussian(n, h, psk::mix_seed(seed, n, 1));
        const Matrix v = psk::random_gaussian(n, h, psk::mix_seed(seed, n, 2));
        const std::size_t b_eff = std::min(block, n);
        psk::SketchTree tree = psk::sample_sketch(h, r, p, psk::mix_seed(seed, n, 3));
        std::vector<double> times;
        for (int rep = 0; rep < reps; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            if (mechanism == "exact-poly-causal") {
                psk::causal_exact_poly_attention(q, k, v, p);
            } else if (mechanism == "polysketch-causal") {
                psk::causal_polysketch_attention(q, k, v, tree, b_eff, local);
            } else if (mechanism == "lt-naive") {
                psk::lt_multiply_naive(q, k, v);
            } else {
                psk::lt_multiply_blocked(q, k, v, b_eff);
            }
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(
                std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        const double wall = times[times.size() / 2];
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.1f,%.4f", wall, wall / static_cast<double>(n));
        os << mechanism << "," << n << "," << h << "," << r << "," << p << "," << b_eff
           << "," << (local ? 1 : 0) << "," << seed << "," << buf << ",\n";
    }
    return 0;
}

int cmd_gen(std::size_t rows, std::size_t cols, const std::string& dist,
            std::uint64_t seed, const std::string& prec_name, const std::string& out_path) {
    const Precision prec = psk::precision_from_name(prec_name);
    const Matrix m = make_inputs(dist, rows, cols, seed, prec);
    if (out_path.size() >= 4 && out_path.substr(out_path.size() - 4) == ".csv")
        psk::save_matrix_csv(out_path, m);
    else
        psk::save_matrix_pskm(out_path, m);
    return 0;
}

int cmd_attn_compare(int p, std::size_t n, std::size_t h, std::size_t r, std::size_t b,
                     bool local, std::uint64_t seed) {
    const psk::SketchTree tree = psk::sample_sketch(h, r, p, psk::mix_seed(seed, 0, 0));
    const Matrix q = psk::random_unit_rows(n, h, psk::mix_seed(seed, 1, 0));
    const Matrix k = psk::random_unit_rows(n, h, psk::mix_seed(seed, 2, 0));
    const Matrix v = psk::random_gaussian(n, h, psk::mix_seed(seed, 3, 0));
    psk::AttentionStats stats{};
    const Matrix approx =
        psk::causal_polysketch_attention(q, k, v, tree, std::min(b, n), local, &stats);
    const Matrix exact = psk::causal_exact_poly_attention(q, k, v, p);
    const double err = psk::rel_frobenius_diff(approx, exact);
    std::printf("mechanism=polysketch-causal n=%zu h=%zu r=%zu p=%d b=%zu local=%d seed=%llu\n",
                n, h, r, p, std::min(b, n), local ? 1 : 0,
                static_cast<unsigned long long>(seed));
    std::printf("min_denominator=%.6g clamped_masses=%lld\n", stats.min_denominator,
                stats.clamped_masses);
    std::printf("rel_error=%.12e\n", err);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"polynomial-attention kernel verifier and benchmark"};
    app.require_subcommand(1);
    // --h is a real option below, so help must not claim the short -h
    app.set_help_flag("--help", "print usage");
    const auto sub = [&app](const char* name, const char* desc) {
        auto* s = app.add_subcommand(name, desc);
        s->set_help_flag("--help", "print usage");
        return s;
    };

    // verify
    std::string v_suite = "all", v_prec = "f64", v_report, v_fault;
    std::uint64_t v_seed = 0;
    auto* verify = sub("verify", "run module invariant suites");
    verify->add_option("--suite", v_suite, "sketch, attention, causal, learnable, or all");
    verify->add_option("--seed", v_seed, "base seed for generated instances");
    verify->add_option("--precision", v_prec, "f32 or f64");
    verify->add_option("--report", v_report, "write a JSON report here");
    verify->add_option("--inject-fault", v_fault, "test-only fault switch")
        ->group(""); // hidden
    // amm
    std::size_t a_n = 32, a_h = 8;
    int a_p = 4, a_trials = 30;
    std::string a_rlist = "4,16,64", a_out, a_dist = "unit-rows";
    std::uint64_t a_seed = 0;
    bool a_zeros = false;
    auto* amm = sub("amm", "sketched-product relative-error sweep (CSV)");
    amm->add_option("--n", a_n, "rows of Q and K");
    amm->add_option("--h", a_h, "input dimension");
    amm->add_option("--p", a_p, "polynomial degree");
    amm->add_option("--r-list", a_rlist, "comma-separated sketch sizes");
    amm->add_option("--trials", a_trials, "trials per sketch size");
    amm->add_option("--seed", a_seed, "base seed");
    amm->add_option("--dist", a_dist, "input distribution: gaussian or unit-rows");
    amm->add_flag("--zeros", a_zeros, "use zero matrices (error is 0 by convention)");
    amm->add_option("--out", a_out, "output CSV path (default stdout)");
    // bench
    std::string b_mech, b_nlist = "512,1024,2048,4096,8192", b_out;
    std::size_t b_h = 64, b_r = 32, b_block = 256;
    int b_p = 4, b_reps = 3;
    bool b_local = false;
    std::uint64_t b_seed = 0;
    auto* bench = sub("bench", "wall-clock latency sweep (CSV)");
    bench->add_option("--mechanism", b_mech,
                      "exact-poly-causal, polysketch-causal, lt-naive, or lt-blocked")
        ->required();
    bench->add_option("--n-list", b_nlist, "comma-separated sequence lengths");
    bench->add_option("--h", b_h, "head dimension");
    bench->add_option("--r", b_r, "sketch size");
    bench->add_option("--p", b_p, "polynomial degree");
    bench->add_option("--block", b_block, "block size");
    bench->add_flag("--local", b_local, "exact diagonal-block weights");
    bench->add_option("--reps", b_reps, "repetitions; the median is reported");
    bench->add_option("--seed", b_seed, "input seed");
    bench->add_option("--out", b_out, "output CSV path (default stdout)");
    // gen
    std::size_t g_rows = 0, g_cols = 0;
    std::string g_dist = "gaussian", g_out, g_prec = "f64";
    std::uint64_t g_seed = 0;
    auto* gen = sub("gen", "write a random matrix file (PSKM or .csv)");
    gen->add_option("--rows", g_rows, "row count")->required();
    gen->add_option("--cols", g_cols, "column count")->required();
    gen->add_option("--dist", g_dist, "gaussian or unit-rows");
    gen->add_option("--seed", g_seed, "seed");
    gen->add_option("--precision", g_prec, "f32 or f64");
    gen->add_option("--out", g_out, "output path (.csv extension selects CSV)")->required();
    // attn-compare
    int c_p = 4;
    std::size_t c_n = 256, c_h = 8, c_r = 64, c_b = 32;
    bool c_local = false;
    std::uint64_t c_seed = 0;
    auto* cmp = sub("attn-compare", "sketched vs exact causal attention error report");
    cmp->add_option("--p", c_p, "polynomial degree");
    cmp->add_option("--n", c_n, "sequence length");
    cmp->add_option("--h", c_h, "head dimension");
    cmp->add_option("--r", c_r, "sketch size");
    cmp->add_option("--b", c_b, "block size");
    cmp->add_flag("--local", c_local, "exact diagonal-block weights");
    cmp->add_option("--seed", c_seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (verify->parsed())
            return cmd_verify(v_suite, v_seed, v_prec, v_report, v_fault);
        if (amm->parsed())
            return cmd_amm(a_n, a_h, a_p, a_rlist, a_trials, a_seed, a_dist, a_zeros, a_out);
        if (bench->parsed())
            return cmd_bench(b_mech, b_nlist, b_h, b_r, b_p, b_block, b_local, b_reps,
                             b_seed, b_out);
        if (gen->parsed()) return cmd_gen(g_rows, g_cols, g_dist, g_seed, g_prec, g_out);
        if (cmp->parsed()) return cmd_attn_compare(c_p, c_n, c_h, c_r, c_b, c_local, c_seed);
    } catch (const psk::ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const psk::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const psk::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
