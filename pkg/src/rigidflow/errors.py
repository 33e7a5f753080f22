"""Exception types shared across the toolkit."""


class RigidflowError(Exception):
    """Base class for all toolkit errors."""


class NonFiniteInput(RigidflowError):
    """An input carried NaN or Inf."""


class NonFiniteState(RigidflowError):
    """A computed state stopped being finite."""


class DegenerateMatrix(RigidflowError):
    """Matrix too close to singular for the requested factorization."""


class InvalidSpec(RigidflowError):
    """A parameter object violates its invariants."""


class MapLeftDomain(RigidflowError):
    """A flow-map characteristic exited the container."""


class NewtonDiverged(RigidflowError):
    """Inverse-map Newton iteration failed to converge."""


class SingularMetric(RigidflowError):
    """Metric tensor determinant fell below tolerance."""


class NonRigidTest(RigidflowError):
    """Weak-form test function is not rigid on the body region."""


class KernelUnderresolved(RigidflowError):
    """Time step too coarse for the mollifier kernel half-width."""


class ContactError(RigidflowError):
    """Body came within the guard distance of the container wall.

    Carries the violating time and the wall clearance at that time.
    """

    def __init__(self, time: float, distance: float):
        super().__init__(
            f"body-wall clearance {distance:.6g} at t={time:.6g} violates the "
            "strict separation requirement"
        )
        self.time = time
        self.distance = distance


class CFLViolation(RigidflowError):
    """Time step violates the advective or diffusive CFL bound."""


class MismatchedScenario(RigidflowError):
    """Two runs do not share container, body, or time grid."""


class ParseError(RigidflowError):
    """Scenario document is not valid JSON."""


class ValidationError(RigidflowError):
    """Scenario document violates an invariant."""


class IoError(RigidflowError):
    """Snapshot or report serialization failed."""
