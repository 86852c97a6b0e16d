#pragma once

#include <stdexcept>
#include <string>

namespace bsysid {

// Precondition violations use std::invalid_argument / std::domain_error.
// The types below are numerical conditions a caller may want to branch on.

class NotPositiveDefinite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RankDeficient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IllConditioned : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bsysid
