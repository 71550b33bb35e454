#pragma once

#include <stdexcept>
#include <string>

namespace vfl {

// Base class for every failure this library raises on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset/sidecar commitment does not match the expected commitment
// (dataset substitution or corrupted image detected at mount).
struct CommitmentMismatch : Error {
    using Error::Error;
};

// A verified block changed underneath an open dataset handle.
struct IntegrityViolation : Error {
    using Error::Error;
};

// Secure-processor launch ordering violated: code can be measured exactly
// once, before the first attestation.
struct MeasureAfterAttest : Error {
    using Error::Error;
};

// Attestation requested before any code measurement.
struct NotMeasured : Error {
    using Error::Error;
};

// An attestation report does not cover the record it was paired with.
struct DigestMismatch : Error {
    using Error::Error;
};

// A task request was routed to an exclave of a different task kind.
struct TaskKindMismatch : Error {
    using Error::Error;
};

// Model/record dimensions disagree.
struct DimensionMismatch : Error {
    using Error::Error;
};

}  // namespace vfl
