#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phasesym {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed expression or config text. Carries the byte offset of the
/// failure within the parsed string (or the line number for config files).
struct SyntaxError : Error {
    std::size_t offset;
    SyntaxError(const std::string& what, std::size_t off)
        : Error(what + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

struct UnknownFunctionError : SyntaxError {
    UnknownFunctionError(const std::string& name, std::size_t off)
        : SyntaxError("unknown function name '" + name + "'", off) {}
};

/// A referenced coordinate/parameter is not declared by the system.
struct UnknownNameError : Error {
    explicit UnknownNameError(const std::string& name)
        : Error("unknown name '" + name + "'") {}
};

/// Expression undefined at the evaluation point (pole, negative radicand, ...).
struct DomainPointError : Error {
    explicit DomainPointError(const std::string& what) : Error(what) {}
};

/// probabilistic_equal could not find enough valid sample points.
struct ExhaustedSamplingError : Error {
    ExhaustedSamplingError()
        : Error("resampling budget exhausted: expression undefined almost "
                "everywhere in the sampling box") {}
};

struct ChartMismatchError : Error {
    ChartMismatchError() : Error("operands live in different charts") {}
};

struct DegreeError : Error {
    explicit DegreeError(const std::string& what) : Error(what) {}
};

struct UnsupportedDegreePairError : Error {
    UnsupportedDegreePairError(int a, int b)
        : Error("Schouten bracket unsupported for degree pair (" +
                std::to_string(a) + "," + std::to_string(b) + ")") {}
};

struct DegenerateFormError : Error {
    DegenerateFormError()
        : Error("2-form is degenerate; use the presymplectic path") {}
};

struct DimensionTooLargeError : Error {
    explicit DimensionTooLargeError(int d)
        : Error("symbolic inversion not supported beyond dimension 6 (got " +
                std::to_string(d) + "); use the pointwise path") {}
};

struct OddRankError : Error {
    explicit OddRankError(int r)
        : Error("numerical rank " + std::to_string(r) +
                " is odd; rank tolerance unsuitable") {}
};

struct SingularPointError : Error {
    explicit SingularPointError(const std::string& what) : Error(what) {}
};

struct NoDynamicsError : Error {
    NoDynamicsError()
        : Error("dh leaves the range of the 2-form at a sampled point; "
                "Hamilton's equation has no solution") {}
};

struct NoCorrespondingFormError : Error {
    NoCorrespondingFormError()
        : Error("field is not in the image of the bivector correspondence") {}
};

struct RankMismatchError : Error {
    RankMismatchError()
        : Error("rank of the 2-form varies across sampled points "
                "(stratified structure unsupported)") {}
};

struct RankDriftError : Error {
    RankDriftError()
        : Error("half-rank of the bivector varies across sampled points") {}
};

struct NotProportionalError : Error {
    explicit NotProportionalError(double residual)
        : Error("invariant ratio is not well defined: proportionality "
                "residual " + std::to_string(residual)) {}
};

struct FNotConservedError : Error {
    explicit FNotConservedError(double drift)
        : Error("bracket_descent input is not conserved (drift " +
                std::to_string(drift) + ")") {}
};

struct BlowUpError : Error {
    explicit BlowUpError(double t)
        : Error("trajectory became non-finite at t = " + std::to_string(t)) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(what) {}
};

}  // namespace phasesym
