"""Time integrators for the four gradient flows, with mass and energy tracking.

All four equations share one first-order IMEX step.  The implicit part is the
constant-coefficient portion of the driving operator, which is diagonal in the
grid's transform basis: the full Laplacian for the local flows, and for the
nonlocal flows the wrapped/reflected stencil operator plus the scalar
stabilizer.  The spatially varying boundary remainder of the nonlocal operator
and the potential derivative stay explicit; with stabilization at least the
potential's curvature bound the step dissipates the corresponding free energy
unconditionally.  The mass mode is untouched by construction for the conserved
flows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .grid import (
    Field,
    UniformGrid,
    integrate,
    inverse_transform_values,
    laplacian_symbol,
    transform_values,
)
from .kernels import Kernel
from .local_ops import dirichlet_energy
from .nonlocal_ops import apply_fft_values, degree_function, stencil_symbol
from . import nonlocal_ops

__all__ = [
    "EQUATIONS",
    "SolverConfig",
    "TrajectoryRecord",
    "SolverDivergedError",
    "step_local_ch",
    "step_nonlocal_ch",
    "step_local_ac",
    "step_nonlocal_ac",
    "run",
    "resolve_stabilization",
    "explicit_tau_bound",
    "free_energy",
]

EQUATIONS = ("local-ch", "nonlocal-ch", "local-ac", "nonlocal-ac")

SEMI_IMPLICIT = "semi-implicit"
EXPLICIT = "explicit"

_DIVERGENCE_FACTOR = 1e6


class SolverDivergedError(RuntimeError):
    """Raised when the state norm blows past the divergence guard."""


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters shared by all equations.

    ``stabilization`` of ``None`` resolves to the potential's curvature bound;
    an explicit value below that bound is rejected for the semi-implicit
    scheme.  ``mobility`` enters the conserved flows only.
    """

    tau: float
    t_final: float
    mobility: float = 1.0
    stabilization: float | None = None
    scheme: str = SEMI_IMPLICIT
    record_every: int = 1
    keep_fields: bool = False
    allow_unstable_tau: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.t_final >= self.tau:
            raise ValueError("t_final must be at least one step")
        if not self.mobility > 0:
            raise ValueError("mobility must be positive")
        if self.scheme not in (SEMI_IMPLICIT, EXPLICIT):
            raise ValueError(f"scheme must be {SEMI_IMPLICIT!r} or {EXPLICIT!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded mass/energy series, with optional field checkpoints."""

    equation: str
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    fields: tuple[Field, ...] | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("record times must be strictly increasing")
        for name in ("times", "mass", "energy"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,mass,energy\n")
            for t, m, e in zip(self.times, self.mass, self.energy):
                fh.write(f"{t:.17g},{m:.17g},{e:.17g}\n")


def resolve_stabilization(config: SolverConfig, potential) -> float:
    if config.stabilization is None:
        return float(potential.alpha)
    s = float(config.stabilization)
    if config.scheme == SEMI_IMPLICIT and s < potential.alpha:
        raise ValueError(
            f"stabilization {s} is below the potential curvature bound {potential.alpha}"
        )
    return s


def explicit_tau_bound(equation: str, grid: UniformGrid, mobility: float,
                       kernel: Kernel | None = None) -> float:
    """Largest safe step for the fully explicit scheme.

    For the conserved nonlocal flow this is ``0.5 / (m * max a * max lam)``
    with ``a`` the degree function; the other equations use the analogous
    spectral-radius bounds.  The semi-implicit scheme needs no step bound.
    """
    lam_max = float(laplacian_symbol(grid).max())
    if equation == "local-ch":
        return 0.5 / (mobility * lam_max * lam_max)
    if equation == "local-ac":
        return 0.5 / lam_max
    if kernel is None:
        raise ValueError("nonlocal equations need a kernel")
    a_max = float(degree_function(kernel, grid).values.max())
    if equation == "nonlocal-ch":
        return 0.5 / (mobility * a_max * lam_max)
    if equation == "nonlocal-ac":
        return 0.5 / a_max
    raise ValueError(f"unknown equation {equation!r}")


class _Stepper:
    def __init__(self, grid: UniformGrid, equation: str, config: SolverConfig,
                 potential, kernel: Kernel | None):
        if equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}")
        nonlocal_eq = equation.startswith("nonlocal")
        if nonlocal_eq and kernel is None:
            raise ValueError(f"{equation} needs a kernel")
        self.grid = grid
        self.equation = equation
        self.config = config
        self.potential = potential
        self.kernel = kernel if nonlocal_eq else None
        self.nonlocal_eq = nonlocal_eq

        lam = laplacian_symbol(grid)
        self.lam = lam
        conserved = equation.endswith("ch")
        self.conserved = conserved
        self.drive = config.mobility * lam if conserved else np.ones_like(lam)
        self.stabilization = resolve_stabilization(config, potential)
        nu = stencil_symbol(kernel, grid) if nonlocal_eq else lam
        if config.scheme == SEMI_IMPLICIT:
            self.denom = 1.0 + config.tau * self.drive * (nu + self.stabilization)
        else:
            self.denom = np.ones_like(lam)
            bound = explicit_tau_bound(equation, grid, config.mobility, kernel)
            if config.tau > bound:
                msg = (f"tau = {config.tau:.3e} exceeds the explicit stability bound "
                       f"{bound:.3e} for {equation}")
                if config.allow_unstable_tau:
                    warnings.warn(msg, UserWarning, stacklevel=3)
                else:
                    raise ValueError(msg + "; shrink tau or set allow_unstable_tau")

    def step_values(self, values: np.ndarray) -> np.ndarray:
        chat = transform_values(self.grid, values)
        fp = self.potential.fprime(values)
        if self.nonlocal_eq:
            ghat = transform_values(self.grid, apply_fft_values(self.kernel, self.grid, values) + fp)
        else:
            ghat = self.lam * chat + transform_values(self.grid, fp)
        chat = chat - self.config.tau * self.drive * ghat / self.denom
        return inverse_transform_values(self.grid, chat)

    def energy(self, values: np.ndarray) -> float:
        field = Field(self.grid, values)
        bulk = integrate(Field(self.grid, self.potential.f(values)))
        if self.nonlocal_eq:
            return nonlocal_ops.nonlocal_energy(self.kernel, field) + bulk
        return dirichlet_energy(field) + bulk


def free_energy(state: Field, potential, kernel: Kernel | None = None) -> float:
    """Gradient-flow Lyapunov functional: interface energy plus bulk term.

    With a kernel the interface part is the nonlocal pair energy, otherwise
    the gradient (Dirichlet) energy.
    """
    bulk = integrate(Field(state.grid, potential.f(state.values)))
    if kernel is not None:
        return nonlocal_ops.nonlocal_energy(kernel, state) + bulk
    return dirichlet_energy(state) + bulk


def _single_step(state: Field, config: SolverConfig, potential, equation: str,
                 kernel: Kernel | None) -> Field:
    stepper = _Stepper(state.grid, equation, config, potential, kernel)
    return Field(state.grid, stepper.step_values(state.values))


def step_local_ch(state: Field, config: SolverConfig, potential) -> Field:
    """One step of the conserved local flow; mass is preserved exactly."""
    return _single_step(state, config, potential, "local-ch", None)


def step_nonlocal_ch(state: Field, config: SolverConfig, potential, kernel: Kernel) -> Field:
    """One step of the conserved nonlocal flow; mass is preserved exactly."""
    return _single_step(state, config, potential, "nonlocal-ch", kernel)


def step_local_ac(state: Field, config: SolverConfig, potential) -> Field:
    """One step of the non-conserved local flow."""
    return _single_step(state, config, potential, "local-ac", None)


def step_nonlocal_ac(state: Field, config: SolverConfig, potential, kernel: Kernel) -> Field:
    """One step of the non-conserved nonlocal flow."""
    return _single_step(state, config, potential, "nonlocal-ac", kernel)


def run(initial: Field, config: SolverConfig, potential, equation: str,
        kernel: Kernel | None = None) -> TrajectoryRecord:
    """Advance to the final time, recording mass and free energy.

    Records are taken at step zero, every ``record_every`` steps, and at the
    final step.  With ``keep_fields`` the state at each record time is stored
    in the returned trajectory.
    """
    stepper = _Stepper(initial.grid, equation, config, potential, kernel)
    n_steps = max(1, int(round(config.t_final / config.tau)))
    values = initial.values.copy()
    guard = _DIVERGENCE_FACTOR * max(1.0, float(np.max(np.abs(values))))

    times, mass, energy = [], [], []
    fields: list[Field] | None = [] if config.keep_fields else None

    def record(step: int, vals: np.ndarray) -> None:
        times.append(step * config.tau)
        mass.append(integrate(Field(initial.grid, vals)))
        energy.append(stepper.energy(vals))
        if fields is not None:
            fields.append(Field(initial.grid, vals.copy()))

    record(0, values)
    for step in range(1, n_steps + 1):
        values = stepper.step_values(values)
        peak = float(np.max(np.abs(values))) if values.size else 0.0
        if not np.isfinite(peak) or peak > guard:
            raise SolverDivergedError(
                f"{equation} diverged at step {step} (t = {step * config.tau:.6g}): "
                f"max |c| = {peak:.3e}"
            )
        if step % config.record_every == 0 or step == n_steps:
            record(step, values)

    return TrajectoryRecord(
        equation=equation,
        times=np.asarray(times),
        mass=np.asarray(mass),
        energy=np.asarray(energy),
        fields=tuple(fields) if fields is not None else None,
    )


def reference_config(config: SolverConfig, refinement: int = 10) -> SolverConfig:
    """Config for the matching fine-step local reference run.

    The step shrinks by ``refinement`` and the record cadence grows by the
    same factor, so record times line up with the original run.
    """
    return replace(
        config,
        tau=config.tau / refinement,
        record_every=config.record_every * refinement,
        stabilization=None,
    )
