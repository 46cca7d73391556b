"""Exception hierarchy shared by every fairrepair module."""


class FairRepairError(Exception):
    """Base class for all toolkit errors."""


class InputShapeError(FairRepairError, ValueError):
    pass


class ConfigError(FairRepairError, ValueError):
    pass


class DivergedTrainingError(FairRepairError, FloatingPointError):
    def __init__(self, epoch, message="loss became NaN"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")


class ModelFormatError(FairRepairError, ValueError):
    """Model file could not be parsed. ``offset`` is the byte offset of the failure."""

    def __init__(self, message, offset=None):
        self.offset = offset
        where = f" (byte offset {offset})" if offset is not None else ""
        super().__init__(message + where)


class ModelVersionError(FairRepairError, ValueError):
    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"model format version {found!r} not supported (expected {supported})")


class SchemaError(FairRepairError, ValueError):
    pass


class RowParseError(FairRepairError, ValueError):
    def __init__(self, line, column, value):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"line {line}: column {column!r} expects a number, got {value!r}")


class DatasetTooSmallError(FairRepairError, ValueError):
    pass


class UndefinedGroupError(FairRepairError, ValueError):
    """A metric needs a group (or group/label cell) that has no rows."""

    def __init__(self, message, metric=None):
        self.metric = metric
        super().__init__(message)


class DegenerateCellError(FairRepairError, ValueError):
    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"(S, Y) cell {cell} is empty; reweighing is undefined")


class SliceParamError(FairRepairError, ValueError):
    pass


class StageError(FairRepairError):
    """Wraps a failure inside one repair stage (slicing, clustering, training)."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage} stage failed: {cause}")


class TuningError(FairRepairError):
    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"theta={t:g} gamma={g:g}: {err}" for t, g, err in failures)
        super().__init__(f"all {len(failures)} tuning trials failed: {lines}")
