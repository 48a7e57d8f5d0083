#pragma once

#include <stdexcept>
#include <string>

namespace ckd {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extents disagree (matmul inner dims, broadcast widths, ...).
struct shape_error : error {
    using error::error;
};

// Invalid configuration value (alpha out of range, degenerate LoRA rank, ...).
struct config_error : error {
    using error::error;
};

// Input file violates its declared tabular/text schema.
struct schema_error : error {
    using error::error;
};

// An operation precondition was violated by the caller.
struct contract_error : error {
    using error::error;
};

// NaN/Inf surfaced in a loss or gradient during training.
struct divergence_error : error {
    using error::error;
};

// A pipeline stage needs an artifact that an earlier stage has not produced.
struct missing_artifact_error : error {
    using error::error;
};

// Sample template is missing a required placeholder.
struct template_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

} // namespace ckd
