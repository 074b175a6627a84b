"""
Exception hierarchy for the surfaces pipeline.

Every error raised by the numerical modules derives from SurfaceError so that
management commands can turn any of them into a CommandError with one handler.
"""


class SurfaceError(Exception):
    """Base class for all pipeline errors."""


# branch_algebra

class BranchSetError(SurfaceError):
    pass


class DuplicatePointError(BranchSetError):
    pass


class WrongCountError(BranchSetError):
    pass


class MultipleInfinitiesError(BranchSetError):
    pass


class IndexOutOfRangeError(BranchSetError, IndexError):
    pass


class EqualIndicesError(BranchSetError):
    pass


class RepeatedIndicesError(BranchSetError):
    pass


class DegenerateMapError(BranchSetError):
    pass


# elliptic

class EllipticError(SurfaceError):
    pass


class BadModulusError(EllipticError):
    pass


class OriginSingularityError(EllipticError):
    pass


class NotGenusOneError(EllipticError):
    pass


class ClosedFormMismatchError(EllipticError):
    """Theta evaluation and closed form of the Weierstrass-point Green's function disagree."""


# periods

class PeriodError(SurfaceError):
    pass


class QuadratureFailureError(PeriodError):
    pass


class NearDegenerateError(PeriodError):
    pass


class NotPositiveDefiniteError(PeriodError):
    pass


class AtBranchPointError(PeriodError):
    pass


# mesh

class MeshError(SurfaceError):
    pass


class ResolutionTooLowError(MeshError):
    pass


class SingularValueError(MeshError):
    pass


# laplace

class SpectralError(SurfaceError):
    pass


class DisconnectedMeshError(SpectralError):
    pass


class SolverFailureError(SpectralError):
    pass


class EvaluationAtPoleError(SpectralError):
    pass


class InsufficientSpectrumError(SpectralError):
    pass


# cli / harness

class HarnessError(SurfaceError):
    pass


class GateFailureError(HarnessError):
    """A residual exceeded its gate; ``gate`` names the failing residual."""

    def __init__(self, gate, value, tolerance):
        self.gate = gate
        self.value = value
        self.tolerance = tolerance
        super().__init__(f"gate={gate} value={value:.3e} tolerance={tolerance:.3e}")


class FitUnstableError(HarnessError):
    pass
