"""Exception hierarchy shared by all faceaudit modules."""


class AuditError(ValueError):
    """Base class for every error raised by faceaudit."""


# data_model
class UnknownModality(AuditError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}, column {column!r}: unknown modality {value!r}")
        self.row, self.column, self.value = row, column, value


class MissingColumn(AuditError):
    def __init__(self, name):
        super().__init__(f"missing column {name!r}")
        self.name = name


class MalformedRow(AuditError):
    def __init__(self, line, detail=""):
        msg = f"malformed row at line {line}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.line = line


class SampleTooLarge(AuditError):
    pass


class MissingLabel(AuditError):
    def __init__(self, record_id, attribute=None):
        where = f" for {attribute}" if attribute is not None else ""
        super().__init__(f"record {record_id!r} has no label{where}")
        self.record_id = record_id


class InvalidDistribution(AuditError):
    pass


# colorimetry
class EmptyRegion(AuditError):
    pass


class EmptyPixelSet(AuditError):
    pass


class EmptyMask(AuditError):
    pass


class DimensionMismatch(AuditError):
    pass


class DegenerateClass(AuditError):
    def __init__(self, cls, detail=""):
        super().__init__(f"class {cls!r} cannot be fitted{': ' + detail if detail else ''}")
        self.cls = cls


# diversity
class AllZeroTarget(AuditError):
    pass


# stat_tests
class ZeroExpected(AuditError):
    def __init__(self, modality):
        super().__init__(f"modality {modality} has zero expected count but nonzero observed count")
        self.modality = modality


class EmptySample(AuditError):
    pass


class DegenerateReference(AuditError):
    pass


# error_aware
class EmptySupport(AuditError):
    pass


class UnorderedAttribute(AuditError):
    pass


class EmptyManualPool(AuditError):
    pass


class EmptySubgroup(AuditError):
    pass


# cli / synth
class InvalidSpec(AuditError):
    pass


class NoImagesFound(AuditError):
    pass
