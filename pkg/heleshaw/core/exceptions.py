# File: heleshaw/core/exceptions.py

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


class HeleShawException(Exception):
    exit_code = EXIT_SOLVER

    def __init__(self, message: str, code: str = "INTERNAL_ERROR"):
        self.message = message
        self.code = code
        super().__init__(self.message)


# Usage / configuration

class UsageError(HeleShawException):
    exit_code = EXIT_USAGE

    def __init__(self, message: str):
        super().__init__(message, "USAGE_ERROR")


class ConfigError(HeleShawException):
    exit_code = EXIT_USAGE

    def __init__(self, message: str, key: str = None, line: int = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}", "CONFIG_ERROR")


# Grid and fields

class GridTooSmallError(HeleShawException):
    def __init__(self, cells_per_axis: int):
        message = f"Stencil needs at least 3 cells per axis, grid has {cells_per_axis}"
        super().__init__(message, "GRID_TOO_SMALL")


class FieldError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "FIELD_ERROR")


class OutOfDomainError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "OUT_OF_DOMAIN")


# Time stepping

class StabilityError(HeleShawException):
    def __init__(self, dt: float, dt_max: float):
        message = f"Explicit step dt={dt:.3e} exceeds the stability bound {dt_max:.3e}"
        super().__init__(message, "STABILITY_ERROR")


class CflViolationError(HeleShawException):
    def __init__(self, dt: float, dt_max: float):
        message = f"Density step dt={dt:.3e} violates the degenerate-diffusion CFL bound {dt_max:.3e}"
        super().__init__(message, "CFL_VIOLATION")


class SolverDivergenceError(HeleShawException):
    def __init__(self, solver: str, iterations: int, residual: float = None):
        tail = f", residual {residual:.3e}" if residual is not None else ""
        message = f"{solver} did not converge within {iterations} iterations{tail}"
        super().__init__(message, "SOLVER_DIVERGENCE")


class NegativeDensityError(HeleShawException):
    def __init__(self, min_value: float):
        message = f"Density went negative ({min_value:.3e}); flux update is inconsistent"
        super().__init__(message, "NEGATIVE_DENSITY")


class StepSizeError(HeleShawException):
    def __init__(self, t: float, radius: float):
        message = f"RK4 stage produced non-positive radius {radius:.3e} at t={t:.6g}"
        super().__init__(message, "STEP_SIZE_ERROR")


class TimeOrderingError(HeleShawException):
    def __init__(self, previous: float, current: float):
        message = f"States must arrive in increasing time order, got {current!r} after {previous!r}"
        super().__init__(message, "TIME_ORDERING")


# Diagnostics

class EmptySaturatedSetError(HeleShawException):
    def __init__(self, threshold: float):
        message = f"No cell has density above {threshold:.6g}"
        super().__init__(message, "EMPTY_SATURATED_SET")


class MomentOverflowError(HeleShawException):
    def __init__(self, b: float, peak: float):
        message = f"b*u_+ reaches {peak:.3e} > 700 with b={b:.6g}; choose a smaller b"
        super().__init__(message, "MOMENT_OVERFLOW")


class EmptyRunListError(HeleShawException):
    def __init__(self):
        super().__init__("At least one completed run is required", "EMPTY_RUN_LIST")


class CoverageError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "COVERAGE_ERROR")


class DegenerateFitError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "DEGENERATE_FIT")


class DomainError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "DOMAIN_ERROR")


class HypothesisViolatedError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "HYPOTHESIS_VIOLATED")


class UnsupportedDimensionError(HeleShawException):
    def __init__(self, dim: int):
        super().__init__(f"Dimension {dim} is not supported here", "UNSUPPORTED_DIMENSION")


class ResolutionError(HeleShawException):
    def __init__(self, radius: float, minimum: float):
        message = f"Radius {radius:.4g} is below the resolution floor {minimum:.4g}"
        super().__init__(message, "RADIUS_RESOLUTION")


class FreeBoundaryPointError(HeleShawException):
    def __init__(self, center):
        message = f"Point {tuple(center)} is not on the free boundary"
        super().__init__(message, "NOT_FREE_BOUNDARY")


class ObstacleProblemError(HeleShawException):
    def __init__(self, message: str):
        super().__init__(message, "OBSTACLE_PROBLEM")


# Orchestration

class SweepMemberError(HeleShawException):
    def __init__(self, gamma: float, cause: HeleShawException):
        self.gamma = gamma
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"gamma={gamma:g}: {cause.message}", cause.code)


class CheckError(HeleShawException):
    def __init__(self, check: str, cause: HeleShawException):
        self.check = check
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"check '{check}': {cause.message}", cause.code)
