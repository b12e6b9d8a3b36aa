// Fits a cubic implicit model to simulated mass-spring-damper data with the
// Lagrangian-relaxation and equation-error methods, then validates both on a
// fresh input realization.
//
//   fit_msd [seed]

#include <cstdio>
#include <cstdlib>

#include "stabid.hpp"

int main(int argc, char** argv) {
  using namespace stabid;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

  MsdParams p;
  const MsdRun train = simulate_msd(p, InputSpec{}, seed);
  const MsdRun fresh = simulate_msd(p, InputSpec{}, seed + 1000003);
  std::printf("training SNR %.1f dB, T = %lld\n", train.snr_db, static_cast<long long>(train.data.T()));

  // e cubic in x, f cubic in x and affine in u, g affine.
  const ModelStructure ms = ModelStructure::standard(StructureSpec{4, 1, 1, 3, 3, 1, 1, true, true});
  for (Method m : {Method::lr, Method::ee}) {
    try {
      const FitResult fr = fit(m, ms, train.data);
      const ValidationResult v = validate(fr.model, fresh.data);
      std::printf("%-3s objective %.6g  newton %d  train NSE %.4g  validation NSE %s%.4g\n", method_name(m),
                  fr.objective, fr.report.total_newton_steps(), fr.training.nse, v.diverged ? "(diverged) " : "",
                  v.nse);
    } catch (const Error& e) {
      std::printf("%-3s failed: %s\n", method_name(m), e.what());
      return 1;
    }
  }
  return 0;
}
