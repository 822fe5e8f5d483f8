#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

// Invariant suites shared by the gradcheck and selftest commands and the
// acceptance run. Each check reports a measured value against a tolerance.

namespace sfim::checks {

inline constexpr double kGradTolerance = 1e-4;

struct CheckResult {
    std::string name;
    double value = 0.0;      // worst error (or the measured quantity)
    double tolerance = 0.0;  // passes when value < tolerance
    bool passed = false;
    std::string detail;
};

struct SuiteReport {
    std::string scope;
    std::vector<CheckResult> checks;
    std::set<std::string> covered;  // block kinds exercised (blocks scope)

    bool passed() const;
    const CheckResult* worst() const;  // largest value / tolerance
    std::vector<std::string> lines() const;
};

// Names the blocks scope must cover.
const std::vector<std::string>& required_blocks();

// "tensor": every differentiable op. "blocks": every block kind, failing
// when one is missing from the coverage set. "model": the 2-level width-8
// model end to end at 32 x 32. Throws ConfigError for another scope.
SuiteReport gradcheck_scope(const std::string& scope, std::uint64_t seed);

// Closed-form invariants (loss floors, FFT roundtrip and Parseval, PSF
// normalization, checkpoint roundtrip) followed by the tensor and blocks
// gradient suites.
SuiteReport selftest(std::uint64_t seed);

} // namespace sfim::checks
