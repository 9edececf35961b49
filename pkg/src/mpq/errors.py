"""Exception hierarchy shared by all planner modules.

Every user-facing failure raises a subclass of :class:`MpqError`; the CLI maps
those to exit code 1 and anything else to exit code 2.
"""


class MpqError(Exception):
    """Base class for expected, user-correctable errors."""


# --- file parsing / validation ---

class MalformedManifest(MpqError):
    """File is syntactically broken or structurally not what was declared."""


class DuplicateLayer(MpqError):
    pass


class InvalidField(MpqError):
    pass


class TruncatedBlob(MpqError):
    pass


class ShapeMismatch(MpqError):
    pass


class NonPositiveScale(MpqError):
    pass


class UnknownLayer(MpqError):
    pass


class NegativeGain(MpqError):
    pass


class NonNumeric(MpqError):
    pass


class IoFailure(MpqError):
    pass


# --- quantization / metrics ---

class AllZeroTensor(MpqError):
    pass


class EmptyTensor(MpqError):
    pass


class MissingTensor(MpqError):
    pass


class MissingTrace(MpqError):
    pass


# --- cost model / knapsack ---

class MissingGain(MpqError):
    pass


class MixedFixedGroup(MpqError):
    pass


class InfeasibleBudget(MpqError):
    pass


class NoSelectableItems(MpqError):
    pass


class IncompleteAssignment(MpqError):
    pass


class TooManyItems(MpqError):
    pass


# --- analysis ---

class DegenerateDesign(MpqError):
    pass


class ZeroVariance(MpqError):
    pass


class LengthMismatch(MpqError):
    pass
