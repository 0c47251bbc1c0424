"""floqlab: a numerical laboratory for slowly driven periodic media.

The package builds Bloch fiber Hamiltonians for a periodic potential, drives
them with a slow time-periodic vector potential, and studies the resulting
period map: its unit-circle spectrum, the spectral projections onto arcs,
the near-invariance of narrow wavepacket subspaces under those projections,
and the small effective models that govern the packet envelopes.

Layout:

  lattice     Bravais lattices, plane-wave bases, potentials, momentum grids
  bloch       fiber Hamiltonians, band structure, degeneracy classification
  drive       time-periodic vector potentials and their exact integrals
  evolve      fiberwise propagation and the period map with its multipliers
  spectral    arcs on the circle, spectral projections, centering bounds
  wavepacket  band-limited packets, the window projector, averaging, the
              residual-decay experiment
  effective   envelope models (transport, Dirac, quadratic), enclosures,
              full-versus-effective validation
  cli         JSON-configured command line driver
  selftest    structural invariant suite
"""

from .bloch import (
    BandStructure,
    DegeneracyInfo,
    FiberSystem,
    SeparationReport,
    assemble_fiber,
    band_structure,
    dirac_fit,
    group_velocity,
    riesz_projector,
    verify_separation,
)
from .drive import DrivingProfile, drive_integral, eval_drive
from .effective import (
    EffectiveModel,
    SpectralEnclosure,
    apply_effective,
    effective_monodromy_bound,
    effective_multiplier,
    effective_propagator,
    lower_bound_check,
    validate_effective,
)
from .errors import (
    ConfigError,
    FloqlabError,
    GridMismatchError,
    HypothesisViolation,
    NumericError,
)
from .evolve import Monodromy, monodromy, monodromy_stack, propagate
from .lattice import (
    BrillouinGrid,
    Lattice,
    PlaneWaveBasis,
    PotentialCoeffs,
    ball_xi_grid,
    honeycomb_wavevectors,
    make_lattice,
    plane_wave_basis,
    potential_coefficients,
    window_grid,
    zone_grid,
)
from .selftest import run_selftest
from .spectral import Arc, StateFiberRep, apply_measure, arc_projector, centering_residual
from .wavepacket import (
    Envelope,
    InvarianceConfig,
    ResidualTable,
    WindowSpec,
    averaging_identity,
    BandlimitedProfile,
    bl_alignment,
    near_invariance_experiment,
    project_p0,
    synthesize_bl,
    window_correspondence,
)

__version__ = "0.1.0"
