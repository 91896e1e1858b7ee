#include <cstdio>
#include <fstream>
#include <cstdlib>
#include <iostream>

#include "pfarb/iocli.hpp"
#include "pfarb/qp_solver.hpp"

using namespace pfarb;

int main(int argc, char** argv) {
  const int jstart = argc > 1 ? std::atoi(argv[1]) : 0;
  const bool verbose = argc > 3;
  Scenario s = synth_scenario(1, SynthProfile::residential_pv);
  const char* pr = std::getenv("PRESET");
  const BatteryParams bp = battery_preset(pr ? pr : "1C", "matched");
  const PFLimit limit = PFLimit::from_pf_min(0.9);
  const DiskPolygon poly = polygon_disk(bp.s_max, 32);

  double b = argc > 2 ? std::atof(argv[2]) : bp.b0;
  for (int j = jstart; j < (int)s.steps(); ++j) {
    auto [sub1, sub2] = build_rh_subproblems(s, bp, limit, poly, j, b);
    int which = 0;
    QpSolution best;
    ProblemInstance* bestpi = &sub1;
    for (ProblemInstance* pi : {&sub1, &sub2}) {
      ++which;
      Eigen::SparseMatrix<double> A;
      Eigen::VectorXd l, u;
      pi->constraint_matrix(A, l, u);
      SolverConfig cfg;
      if (verbose) {
        cfg.log = &std::cerr;
      }
      if (verbose && which == 1) {
        std::ofstream f("/tmp/rh_sub.txt");
        f.precision(17);
        f << pi->n_vars << ' ' << A.rows() << '\n';
        const Eigen::VectorXd q = pi->linear_vector();
        for (int i = 0; i < pi->n_vars; ++i) f << q(i) << ' ';
        f << '\n';
        for (int k = 0; k < A.outerSize(); ++k)
          for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
            f << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
        f << "bounds\n";
        for (int i = 0; i < (int)A.rows(); ++i) f << l(i) << ' ' << u(i) << '\n';
      }
      QpSolver solver(pi->quadratic_matrix(), pi->linear_vector(), A, l, u, cfg);
      QpSolution sol = solver.solve();
      std::printf("j=%d sub%d status=%s iters=%d obj=%.8f rp=%.3g rd=%.3g\n", j, which,
                  to_string(sol.status).c_str(), sol.iterations, sol.objective,
                  sol.primal_residual, sol.dual_residual);
      const auto usable = [](const QpSolution& s) {
        return s.status == QpStatus::optimal || s.primal_residual <= 1e-6;
      };
      if (which == 1 || (usable(sol) && (!usable(best) || sol.objective < best.objective))) {
        best = sol;
        bestpi = pi;
      }
      if (verbose && which == 2) return 0;
    }
    if (best.status != QpStatus::optimal && best.primal_residual > 1e-6) {
      std::printf("j=%d FAILED b=%.6f\n", j, b);
      return 1;
    }
    const Dispatch d = extract_dispatch(*bestpi, best.x);
    b = d.b[0];
    std::printf("  commit j=%d p_b=%.4f q_b=%.4f b=%.4f\n", j, d.p_b[0], d.q_b[0], b);
  }
  return 0;
}
