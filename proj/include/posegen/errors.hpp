#ifndef POSEGEN_ERRORS_HPP
#define POSEGEN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace posegen {

// Error taxonomy used across the toolkit. Everything derives from
// posegen::error so callers can catch the whole family at once.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract (shape mismatch, bad argument combination).
struct contract_error : error {
    using error::error;
};

// Bad configuration value (unknown profile, empty dataset, missing input).
struct config_error : error {
    using error::error;
};

// Index or parameter outside its valid range.
struct range_error : error {
    using error::error;
};

// Backend cannot provide a required capability (e.g. gradients).
struct capability_error : error {
    using error::error;
};

// Guided sampling misuse (nonpositive cost with a nonzero gradient).
struct guidance_error : error {
    using error::error;
};

// Numerical failure: singularities, non-finite values.
struct numerical_error : error {
    using error::error;
};

// No valid placement found during scene composition/augmentation.
struct placement_error : error {
    using error::error;
};

// File system / format problems; message names the offending path.
struct io_error : error {
    using error::error;
};

// OKS is undefined (no visible ground-truth keypoints).
struct oks_undefined_error : error {
    using error::error;
};

}  // namespace posegen

#endif
