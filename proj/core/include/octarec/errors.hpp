#pragma once

#include <stdexcept>
#include <string>

namespace octarec {

/// Malformed or unsupported file contents (bad magic, bad header fields).
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failed read/write (truncated payload, unwritable path).
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Required input file does not exist.
struct missing_input_error : io_error {
    explicit missing_input_error(const std::string& msg) : io_error(msg) {}
};

/// Stored checkpoint topology does not match the requested network.
struct checkpoint_mismatch_error : std::runtime_error {
    explicit checkpoint_mismatch_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Metric has no defined value on the given inputs (empty set, no evaluable pixels).
struct undefined_metric_error : std::runtime_error {
    explicit undefined_metric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Phantom configuration that cannot produce any branch.
struct empty_scene_error : std::runtime_error {
    explicit empty_scene_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace octarec
