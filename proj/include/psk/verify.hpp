#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psk/matrix.hpp"
#include "psk/sketch.hpp"

namespace psk {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail; // measured values / thresholds, for the report
};

struct VerifyReport {
    std::string suite;
    std::uint64_t seed = 0;
    Precision precision = Precision::f64;
    std::vector<CheckResult> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

/// Test-only fault switches used to prove the suites can fail. lt_diagonal
/// makes the causal comparisons use a strict (diagonal-dropping) mask oracle,
/// which a correct build must flag.
enum class InjectedFault { none, lt_diagonal };

/// suite is one of {sketch, attention, causal, learnable, all}; throws
/// ValueError on anything else.
VerifyReport run_verify_suite(const std::string& suite, std::uint64_t seed,
                              Precision precision,
                              InjectedFault fault = InjectedFault::none);

nlohmann::json report_to_json(const VerifyReport& report);

/// Brute-force references shared by the verify suites and the test binaries.
namespace oracle {

/// Row softmax of m/beta with no max-subtraction stabilization.
Matrix softmax_rows_reference(const Matrix& m, double beta);

/// Sketched attention with the n x n weight matrix materialized:
/// D^-1 phi'(Q) phi'(K)^T V, D = diag(1 + phi'(Q) phi'(K)^T 1). No clamp.
Matrix polysketch_attention_materialized(const Matrix& q, const Matrix& k,
                                         const Matrix& v, const PolyFeatureMap& fmap);

/// Causal sketched attention via explicit lt(phi'(Q) phi'(K)^T).
Matrix causal_polysketch_materialized(const Matrix& q, const Matrix& k, const Matrix& v,
                                      const PolyFeatureMap& fmap);

/// Mixed-weight causal oracle: exact <q,k>^p weights inside each diagonal
/// block, sketched feature dots across blocks (the local-exact semantics).
Matrix causal_hybrid_materialized(const Matrix& q, const Matrix& k, const Matrix& v,
                                  const PolyFeatureMap& fmap, std::size_t block);

} // namespace oracle

} // namespace psk
