"""Exception types shared across the package."""


class BftSimError(Exception):
    """Base class for all errors raised by this package."""


class UnknownBlockError(BftSimError):
    """A block id was queried that the tree has never seen."""


class UnknownParentError(BftSimError):
    """A block was inserted whose parent is not in the tree."""


class DuplicateBlockError(BftSimError):
    """A block was inserted under an id that is already taken."""


class HeightMismatchError(BftSimError):
    """A block's declared height is not parent height + 1."""


class InvalidWeightsError(BftSimError):
    """Proposer weights are not rationals in (0, 1] summing to exactly 1."""


class InvalidApproveError(BftSimError):
    """An approve message failed structural validation."""


class MalformedHeaderError(BftSimError):
    """A block header is missing or carries an underivable prevoted height."""


class NotActiveError(BftSimError):
    """A proposer asked to act in a round where it is not active."""


class InactiveAtHeightError(BftSimError):
    """A block was proposed at a height whose round excludes its proposer."""


class DifferentAuthorsError(BftSimError):
    """Two blocks by different proposers were compared for contradiction."""


class InvalidScenarioError(BftSimError):
    """A scenario file or object is structurally or semantically invalid."""


class InsufficientTraceError(BftSimError):
    """A trace ended before a checker could reach a definite verdict."""
