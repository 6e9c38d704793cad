# scripts/errors.py
"""Exception hierarchy shared by every WiSLAT script, plus the CLI exit-code mapping."""


class WislatError(Exception):
    """Base class for all errors raised by the toolkit."""


class ConfigError(WislatError):
    """Config file missing, unparseable, or holding unknown/invalid fields."""


class ShapeExceedsArena(ConfigError):
    pass


# --- data contract violations (exit code 3) ---

class DataContractError(WislatError):
    """Input data does not satisfy the documented contract."""


class DimensionMismatch(DataContractError):
    pass


class InsufficientStations(DataContractError):
    def __init__(self, column, available, required=3):
        self.column = column
        self.available = available
        super().__init__(
            f"interval {column}: {available} available stations, at least {required} required"
        )


class CsvFormatError(DataContractError):
    def __init__(self, path, line, reason):
        self.path = path
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{path}: {where}{reason}")


class LayoutMismatch(DataContractError):
    pass


class NearZeroDenominator(DataContractError):
    def __init__(self, q):
        self.q = q
        super().__init__(f"antenna-2 CSI magnitude near zero at q={q}")


class CsiTooShort(DataContractError):
    def __init__(self, shape, window):
        self.shape = shape
        self.window = window
        super().__init__(f"CSI stream of shape {shape} too short for one window of {window} intervals")


# --- numerical / geometric failures ---

class GeometryError(WislatError):
    pass


class DegenerateGeometry(GeometryError):
    def __init__(self, message, station=None, instant=None):
        self.station = station
        self.instant = instant
        where = []
        if station is not None:
            where.append(f"station {station}")
        if instant is not None:
            where.append(f"instant {instant}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class AliasedDoppler(GeometryError):
    pass


class WindowTooLong(GeometryError):
    pass


class SingularInnovation(GeometryError):
    pass


class SlowTarget(GeometryError):
    pass


class SingularNormalMatrix(GeometryError):
    pass


# --- solver failures (exit code 4) ---

class SolverError(WislatError):
    pass


class AllCandidatesDegenerate(SolverError):
    pass


class CoarseFailed(SolverError):
    pass


class RefineFailed(SolverError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def exit_code_for(error):
    """Map an exception to the CLI's stable exit codes."""
    if isinstance(error, (ConfigError, FileNotFoundError)):
        return EXIT_USAGE
    if isinstance(error, DataContractError):
        return EXIT_DATA
    # solver, geometry and anything unexpected
    return EXIT_SOLVER
