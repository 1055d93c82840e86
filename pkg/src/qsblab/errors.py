"""Exception types raised across the package.

Everything derives from QsbError (a ValueError) so callers can catch the
whole family at once; the CLI maps QsbError to its invariant-violation
exit code.
"""

from __future__ import annotations


class QsbError(ValueError):
    """Base class for all validation and contract failures."""


class InvariantViolation(QsbError):
    """A constructed object failed one of its defining checks."""


class LabelClash(QsbError):
    """Two layouts being joined share a subsystem label."""


class LabelUnknown(QsbError):
    """A referenced subsystem label is not present in the layout."""


class EmptyKeep(QsbError):
    """Partial trace asked to keep no subsystem at all."""


class BadPermutation(QsbError):
    """Requested label order is not a permutation of the layout."""


class LayoutMismatch(QsbError):
    """Two operands live on different layouts."""


class BadRank(QsbError):
    """Requested rank (or embedding) exceeds what the dimensions allow."""


class BadPurification(QsbError):
    """Supplied purification is inconsistent with the reduced state."""


class BadEnvLabels(QsbError):
    """Environment labels are not a subset of the isometry output."""


class NoPerfectQsb(QsbError):
    """Perfect shared broadcasting is impossible at these dimensions."""


class EmptyInput(QsbError):
    """An operation received an empty collection where states were required."""


class BoundVacuous(QsbError):
    """The requested bound carries no information at these parameters."""


class DegenerateResidual(QsbError):
    """Gram-Schmidt residual undefined: the two vectors are (nearly) parallel."""


class BadAmplitudes(QsbError):
    """Superposition amplitudes are not normalised (or arguments out of range)."""


class BadEpsilon(QsbError):
    """Fidelity deficit outside (0, 1]."""


class ChainNotApplicable(QsbError):
    """The deficit chain needs a source strictly larger than the shared output."""


class BadDim(QsbError):
    """Operation only defined for qubit inputs."""


class TooLarge(QsbError):
    """Problem size exceeds the configured dimension cap."""
