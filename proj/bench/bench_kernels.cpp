// Serial reference loops vs their OpenMP versions on the six-machine case.
//
//   bench_kernels [case.json] [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "sfr/pipeline.hpp"

using namespace sfr;

namespace {

double best_of(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial, double parallel, bool same) {
    std::printf("%-16s %10.4f %10.4f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
                same ? "identical" : "DIFFERENT");
}

}  // namespace

int main(int argc, char** argv) {
    const std::string path = argc > 1 && argv[1][0] ? argv[1] : std::string(SFR_CASES_DIR) + "/six_machine.json";
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
    const GridCase grid = load_case(path);
    const int n_g = static_cast<int>(grid.n_machines());
    const auto commitments = random_commitments(n_g, 8, std::max(1, n_g - 2), 1);
    const auto banked = with_post_trip_commitments(commitments);
    const auto alpha = parse_alpha_grid("0.35:0.05:0.95");

    std::printf("case %s, %d threads, %zu bank commitments, best of %d\n", grid.name.c_str(), omp_get_max_threads(),
                banked.size(), repeats);
    std::printf("%-16s %10s %10s %9s\n", "kernel", "serial s", "omp s", "speedup");

    LambdaBank bs, bp;
    const double t_bs = best_of(repeats, [&] { bs = build_lambda_bank(grid, banked, ModeSelection{}, false); });
    const double t_bp = best_of(repeats, [&] { bp = build_lambda_bank(grid, banked, ModeSelection{}, true); });
    bool same = bs.entries.size() == bp.entries.size();
    for (const auto& [k, e] : bs.entries) same = same && bp.entries.count(k) && bp.entries.at(k).structure.lambda == e.structure.lambda;
    row("bank", t_bs, t_bp, same);

    std::vector<DatasetRecord> ds, dp;
    CollectOptions cs, cp;
    cs.parallel = false;
    const double t_ds = best_of(repeats, [&] { ds = collect_dataset(grid, commitments, alpha, bp, cs); });
    const double t_dp = best_of(repeats, [&] { dp = collect_dataset(grid, commitments, alpha, bp, cp); });
    same = ds.size() == dp.size();
    for (std::size_t k = 0; same && k < ds.size(); ++k) same = ds[k].gamma == dp[k].gamma;
    row("dataset", t_ds, t_dp, same);

    const auto xs = generate_disturbances(grid, solve_power_flow(grid));
    OracleOptions os, op;
    os.parallel = false;
    std::vector<OracleResult> rs, rp;
    const double t_os = best_of(repeats, [&] { rs = oracle_batch(grid, xs, os); });
    const double t_op = best_of(repeats, [&] { rp = oracle_batch(grid, xs, op); });
    same = rs.size() == rp.size();
    for (std::size_t k = 0; same && k < rs.size(); ++k) same = rs[k].f_nadir == rp[k].f_nadir;
    row("oracle", t_os, t_op, same);

    AssessOptions as, ap;
    as.analytic = ap.analytic = true;
    as.parallel = false;
    AssessmentReport es, ep;
    const double t_as = best_of(repeats, [&] { es = assess(grid, bp, nullptr, as); });
    const double t_ap = best_of(repeats, [&] { ep = assess(grid, bp, nullptr, ap); });
    same = es.rows.size() == ep.rows.size();
    for (std::size_t k = 0; same && k < es.rows.size(); ++k) same = es.rows[k].f_nadir == ep.rows[k].f_nadir;
    row("assess", t_as, t_ap, same);
    return 0;
}
