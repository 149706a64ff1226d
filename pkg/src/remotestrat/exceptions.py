"""Exception hierarchy shared by every stage of the pipeline."""


class RemoteStratError(Exception):
    """Base class; the CLI turns these into a nonzero exit code."""


class SchemaError(RemoteStratError):
    pass


class IngestError(RemoteStratError):
    pass


class EstimationError(RemoteStratError):
    pass


class CompositeIndexError(RemoteStratError):
    pass


class StratificationError(RemoteStratError):
    pass


class AllocationError(RemoteStratError):
    pass


class SynthesisError(RemoteStratError):
    pass


class ReportError(RemoteStratError):
    pass
