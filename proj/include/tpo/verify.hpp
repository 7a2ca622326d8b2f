#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tpo {

struct CheckResult {
    std::string suite;
    std::string name;
    bool passed = false;
    double measured = 0.0;   // worst observed deviation / violation count
    double threshold = 0.0;
    std::string detail;
    double seconds = 0.0;
};

// dpo_loss == ln 2 at theta == reference over randomized parameters, and the
// z=1, beta=0.3 scalar fixture against an independent softplus evaluation.
std::vector<CheckResult> verify_loss_oracles();

// grad_logprob and grad_combined vs central finite differences (eps 1e-5)
// over randomized fixtures; max relative error must stay <= 1e-4.
std::vector<CheckResult> verify_gradients(std::uint32_t fixtures = 120);

// Brute-force enumeration: sum of exp(logprob) over all V^L sequences at
// V=4, L=2 equals 1 within 1e-9 for `draws` random parameter draws.
std::vector<CheckResult> verify_normalization(std::uint32_t draws = 20);

// Randomized disjointness / proper-subset invariants for the two
// manipulation strategies, plus a uniformity smoke check.
std::vector<CheckResult> verify_sampling(std::uint32_t cases = 10000);

std::vector<CheckResult> verify_all();

std::string format_check_line(const CheckResult& check);

}  // namespace tpo
