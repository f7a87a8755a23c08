"""Exception types shared across the package."""


class HilragError(Exception):
    """Base class for all domain errors."""


class MissingField(HilragError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"missing required field: {name}")


class EmptyRequired(HilragError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required field is empty: {name}")


class MalformedSyntax(HilragError):
    def __init__(self, position, detail: str = ""):
        self.position = position
        super().__init__(f"malformed JSON at {position}: {detail}")


class MalformedLine(HilragError):
    def __init__(self, line_number: int, detail: str = ""):
        self.line_number = line_number
        super().__init__(f"malformed triplet line {line_number}: {detail}")


class IoFailure(HilragError):
    def __init__(self, path, detail: str = ""):
        self.path = path
        super().__init__(f"I/O failure on {path}: {detail}")


class CorruptCheckpoint(HilragError):
    pass


class DimensionMismatch(HilragError):
    pass


class NonFiniteWeights(HilragError):
    pass


class NonFiniteGradient(HilragError):
    pass


class ProviderFailure(HilragError):
    def __init__(self, detail: str = "", retries: int = 0):
        self.retries = retries
        super().__init__(f"embedding provider failure after {retries} retries: {detail}")


class BandEmpty(HilragError):
    def __init__(self, anchor_id: str):
        self.anchor_id = anchor_id
        super().__init__(f"negative rank band empty for anchor {anchor_id}")


class GeneratorFailure(HilragError):
    pass


class EmptyDataset(HilragError):
    pass


class InvalidConfig(HilragError):
    pass


class CorruptSnapshot(HilragError):
    pass


class DigestMismatch(Warning):
    """Snapshot was written under a different adapter configuration."""


class BudgetTooSmall(HilragError):
    pass


class ClientFailure(HilragError):
    pass


class ToolDepthExceeded(HilragError):
    pass


class MissingNegative(HilragError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"triplet {index} has no negative")


class UnknownTrueId(HilragError):
    def __init__(self, query: str, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"query {query!r}: true doc id {doc_id!r} not indexed")


class UnknownInference(HilragError):
    pass


class RatingOutOfRange(HilragError):
    pass
