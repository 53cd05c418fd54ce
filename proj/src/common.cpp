// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/parallel.hpp"
#include "jumphjb/types.hpp"

#include <atomic>

namespace jumphjb {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::InvalidInterval: return "invalid-interval";
        case ErrorCode::InvalidInstance: return "invalid-instance";
        case ErrorCode::Schema: return "schema-violation";
        case ErrorCode::BlowUp: return "blow-up";
        case ErrorCode::IllConditionedBasis: return "ill-conditioned-basis";
        case ErrorCode::StepTooLarge: return "step-too-large";
        case ErrorCode::DomainTooSmall: return "domain-too-small";
        case ErrorCode::EnumerationTooLarge: return "enumeration-too-large";
        case ErrorCode::Io: return "io-error";
    }
    return "unknown";
}

namespace {
std::atomic<unsigned> g_threads{1};
}

void set_thread_count(unsigned n) {
    if (n == 0) {
        n = std::thread::hardware_concurrency();
        if (n == 0) n = 1;
    }
    g_threads.store(n);
}

unsigned thread_count() { return g_threads.load(); }

}  // namespace jumphjb
