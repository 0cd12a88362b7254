// Every fit made anywhere in this binary must have a monotone objective trace
// and feasible iterates. The estimator counts violations; this environment
// checks the counters when the test process finishes, so each ctest entry
// covers the fits it made.

#include <gtest/gtest.h>

#include "fsel/estimator.hpp"

namespace {

class FitInvariantEnvironment : public ::testing::Environment {
 public:
  void TearDown() override {
    const auto& d = fsel::fit_diagnostics();
    EXPECT_EQ(d.trace_violations.load(), 0u) << "non-monotone objective trace in " << d.fits.load() << " fits";
    EXPECT_EQ(d.feasibility_violations.load(), 0u) << "infeasible iterate in " << d.fits.load() << " fits";
  }
};

const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new FitInvariantEnvironment);

}  // namespace

TEST(FitInvariants, CountersTrackFits) {
  const auto before = fsel::fit_diagnostics().fits.load();
  const fsel::DenseMatrix x{{1.0}, {2.0}};
  const fsel::RealVector y{1.0, 1.0};
  fsel::lasso(x, y, 0.1);
  EXPECT_EQ(fsel::fit_diagnostics().fits.load(), before + 1);
  EXPECT_EQ(fsel::fit_diagnostics().trace_violations.load(), 0u);
}
