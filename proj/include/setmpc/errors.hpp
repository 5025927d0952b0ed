#pragma once

#include <stdexcept>
#include <string>

namespace setmpc {

// Thrown when a shape matrix cannot be factorized within conditioning limits.
class SingularShapeError : public std::runtime_error {
public:
    explicit SingularShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Concentric containment was requested for ellipsoids with different centers.
class CenterMismatchError : public std::runtime_error {
public:
    explicit CenterMismatchError(const std::string& what) : std::runtime_error(what) {}
};

// Disturbance reach meets or exceeds the target ellipsoid.
class InfeasibleShrinkError : public std::runtime_error {
public:
    explicit InfeasibleShrinkError(const std::string& what) : std::runtime_error(what) {}
};

// Terminal pair or backward step has no certified solution.
class InfeasibleSynthesisError : public std::runtime_error {
public:
    InfeasibleSynthesisError(const std::string& what, int vertex = -1, int row = -1)
        : std::runtime_error(what), vertex_index(vertex), constraint_row(row) {}
    int vertex_index;
    int constraint_row;
};

// Interior-point iteration cap reached without a usable certificate.
class SolverStallError : public std::runtime_error {
public:
    explicit SolverStallError(const std::string& what) : std::runtime_error(what) {}
};

// Algorithm-1 recentring stopped making progress before reaching the waypoint.
class PlannerStallError : public std::runtime_error {
public:
    PlannerStallError(const std::string& what, int segment = -1)
        : std::runtime_error(what), segment_index(segment) {}
    int segment_index;
};

// A waypoint is not (close enough to) an equilibrium of the control model.
class EquilibriumResidualError : public std::runtime_error {
public:
    EquilibriumResidualError(const std::string& what, double residual)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

// One-step min-max solve found no admissible input (certificate breach).
class InfeasibleOneStepError : public std::runtime_error {
public:
    explicit InfeasibleOneStepError(const std::string& what) : std::runtime_error(what) {}
};

// Replanned path does not contain the current state; caller falls back.
class NoContainingEllipsoidError : public std::runtime_error {
public:
    explicit NoContainingEllipsoidError(const std::string& what) : std::runtime_error(what) {}
};

// Scenario/config parse or validation failure.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace setmpc
