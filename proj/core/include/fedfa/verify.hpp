#pragma once

#include <string>
#include <vector>

namespace fedfa {

struct VerifyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Release-gate oracle suites: finite-difference gradient checks, the exact
/// classifier-update-deviation identity, degeneration identities, aggregation
/// identities, the anchor pipeline and partitioner properties.
std::vector<VerifyResult> run_verification_suites();

}  // namespace fedfa
