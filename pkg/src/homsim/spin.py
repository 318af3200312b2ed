"""Non-RWA time evolution of the S = 3/2 ground-state spin under RF drive.

The drive is fast compared with the level splittings and not
phase-synchronised, so the rotating-wave approximation is avoided: the
propagator is a time-ordered product of exact 4x4 step exponentials of
H0 + Omega*cos(2*pi*f*t + phi)*Sx, averaged over the random drive phase
on a deterministic uniform grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .units import TWO_PI

#: Basis order: m_s = +3/2, +1/2, -1/2, -3/2.
SPIN_Z = np.diag([1.5, 0.5, -0.5, -1.5]).astype(complex)

_ladder = np.zeros((4, 4), dtype=complex)
_ladder[0, 1] = math.sqrt(3.0)
_ladder[1, 2] = 2.0
_ladder[2, 3] = math.sqrt(3.0)
SPIN_X = 0.5 * (_ladder + _ladder.conj().T)

#: Projectors onto the two Kramers subspaces.
PROJ_HALF = np.diag([0.0, 1.0, 1.0, 0.0]).astype(complex)
PROJ_THREE_HALF = np.diag([1.0, 0.0, 0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class SpinParams:
    """Static-field and RF-drive constants (angular units, rad/ns).

    ``zfs`` is the zero-field-splitting parameter D (the +-3/2 and +-1/2
    doublets are 2*D apart at zero field); ``gyro`` the gyromagnetic
    ratio in rad/(ns*mT); ``rf_freq`` in GHz. ``time_step`` limits the
    integrator step; ``n_phase`` the size of the drive-phase average.
    """

    zfs: float = TWO_PI * 2.25e-3
    gyro: float = TWO_PI * 0.028
    b_z: float = 0.919
    omega: float = TWO_PI * 14.4e-3
    rf_freq: float = 0.03026911
    time_step: float = 0.05
    n_phase: int = 32

    def __post_init__(self):
        limit = 0.5
        if self.rf_freq > 0:
            limit = min(limit, 1.0 / (20.0 * self.rf_freq))
        if not 0.0 < self.time_step <= limit:
            raise ValueError(f"time_step must lie in (0, {limit:.4g}] ns")
        if self.n_phase < 1:
            raise ValueError("n_phase must be at least 1")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")

    @property
    def resonance_freq(self) -> float:
        """|+3/2> <-> |+1/2> transition frequency (2D + gyro*Bz) in GHz."""
        return (2.0 * self.zfs + self.gyro * self.b_z) / TWO_PI


def build_static_hamiltonian(sp: SpinParams) -> np.ndarray:
    """Static Hamiltonian D*Sz^2 + gyro*Bz*Sz in rad/ns (diagonal, 4x4)."""
    return sp.zfs * (SPIN_Z @ SPIN_Z) + sp.gyro * sp.b_z * SPIN_Z


def rho_half() -> np.ndarray:
    """Fully mixed state of the m_s = +-1/2 subspace."""
    return 0.5 * PROJ_HALF.copy()


def rho_three_half() -> np.ndarray:
    """Fully mixed state of the m_s = +-3/2 subspace."""
    return 0.5 * PROJ_THREE_HALF.copy()


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; returns the array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("density matrix must be 4x4")
    if np.linalg.norm(rho - rho.conj().T) > 1e-10:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10:
        raise ValueError("density matrix trace differs from 1")
    eigvals = np.linalg.eigvalsh(rho)
    if eigvals.min() < -1e-10:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def subspace_populations(rho: np.ndarray) -> tuple[float, float]:
    """(p_half, p_three_half) subspace populations of a 4x4 state."""
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    p_three_half = diag[..., 0] + diag[..., 3]
    p_half = diag[..., 1] + diag[..., 2]
    return p_half, p_three_half


def _step_unitaries(sp: SpinParams, t_mid: float, dt: float, phases: np.ndarray) -> np.ndarray:
    """Exact exponentials exp(-i*H(t_mid, phi)*dt), stacked over phases."""
    h0 = build_static_hamiltonian(sp)
    drive = sp.omega * np.cos(TWO_PI * sp.rf_freq * t_mid + phases)
    h = h0[None, :, :] + drive[:, None, None] * SPIN_X[None, :, :]
    eigvals, eigvecs = np.linalg.eigh(h)
    phase = np.exp(-1j * eigvals * dt)
    return np.einsum("pij,pj,pkj->pik", eigvecs, phase, eigvecs.conj())


def _evolve(
    rho_stack: np.ndarray,
    sp: SpinParams,
    t_from: float,
    t_to: float,
    phases: np.ndarray,
) -> np.ndarray:
    """Propagate a stacked set of states from t_from to t_to (absolute drive time)."""
    remaining = t_to - t_from
    t = t_from
    while remaining > 1e-12:
        dt = min(sp.time_step, remaining)
        u = _step_unitaries(sp, t + dt / 2.0, dt, phases)
        rho_stack = u @ rho_stack @ u.conj().transpose(0, 2, 1)
        t += dt
        remaining = t_to - t
    return rho_stack


def propagate(rho0: np.ndarray, sp: SpinParams, duration: float, phase: float = 0.0) -> np.ndarray:
    """Evolve a state under the static Hamiltonian and RF drive.

    Time-ordered product of midpoint-Hamiltonian step exponentials from
    t = 0 to ``duration``; exact matrix exponentials keep the propagation
    unitary to machine precision.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    rho0 = validate_density_matrix(rho0)
    if duration == 0.0:
        return rho0.copy()
    stack = _evolve(rho0[None, :, :].copy(), sp, 0.0, duration, np.array([phase]))
    rho = stack[0]
    return 0.5 * (rho + rho.conj().T)


def phase_averaged_populations(
    rho0: np.ndarray, sp: SpinParams, durations: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Subspace populations vs pulse duration, averaged over the drive phase.

    Phases are the deterministic grid phi_k = 2*pi*k/n_phase. Returns
    (p_half, p_three_half) arrays aligned with ``durations``. The sweep
    is incremental: each requested duration is reached with a final
    partial step, and stepping resumes from there.
    """
    durations = np.asarray(durations, dtype=float)
    if np.any(durations < 0):
        raise ValueError("durations must be non-negative")
    rho0 = validate_density_matrix(rho0)
    phases = TWO_PI * np.arange(sp.n_phase) / sp.n_phase
    order = np.argsort(durations, kind="stable")
    p_half = np.empty(durations.size)
    p_three = np.empty(durations.size)
    stack = np.broadcast_to(rho0, (sp.n_phase, 4, 4)).copy()
    t_now = 0.0
    for idx in order:
        target = durations[idx]
        if target > t_now:
            stack = _evolve(stack, sp, t_now, target, phases)
            t_now = target
        ph, pt = subspace_populations(stack)
        p_half[idx] = ph.mean()
        p_three[idx] = pt.mean()
    return p_half, p_three


def flipped_population(sp: SpinParams, durations: Sequence[float], start_half: bool = True):
    """Population transferred out of the initial Kramers subspace."""
    rho0 = rho_half() if start_half else rho_three_half()
    p_half, p_three = phase_averaged_populations(rho0, sp, durations)
    return p_three if start_half else p_half


def flip_curves(sp: SpinParams, durations: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Flip curves for both initializations sharing one propagator sweep.

    Returns (flip starting from +-1/2, flip starting from +-3/2); the
    step unitaries depend only on the drive phase, so both states ride
    the same stack.
    """
    durations = np.asarray(durations, dtype=float)
    if np.any(durations < 0):
        raise ValueError("durations must be non-negative")
    phases = np.tile(TWO_PI * np.arange(sp.n_phase) / sp.n_phase, 2)
    stack = np.concatenate(
        [
            np.broadcast_to(rho_half(), (sp.n_phase, 4, 4)),
            np.broadcast_to(rho_three_half(), (sp.n_phase, 4, 4)),
        ]
    ).copy()
    order = np.argsort(durations, kind="stable")
    flip_a = np.empty(durations.size)
    flip_b = np.empty(durations.size)
    t_now = 0.0
    for idx in order:
        target = durations[idx]
        if target > t_now:
            stack = _evolve(stack, sp, t_now, target, phases)
            t_now = target
        p_half, p_three = subspace_populations(stack)
        flip_a[idx] = p_three[: sp.n_phase].mean()
        flip_b[idx] = p_half[sp.n_phase :].mean()
    return flip_a, flip_b


def calibrate_pulse(
    sp: SpinParams,
    target_flip: float,
    max_duration: float = 80.0,
    scan_step: float = 1.0,
    tol: float = 0.01,
) -> float:
    """Shortest pulse duration reaching a target flipped population.

    Scans the phase-averaged flip curve, restricts to its first rising
    segment and bisects there. Raises if the target exceeds the largest
    achievable flip, naming that maximum.
    """
    if target_flip <= 0:
        return 0.0
    grid = np.arange(0.0, max_duration + scan_step, scan_step)
    flips = flipped_population(sp, grid)
    if target_flip > flips.max():
        raise ValueError(
            f"target flip {target_flip:.3f} unreachable; maximum achievable is {flips.max():.3f}"
        )
    hit = int(np.argmax(flips >= target_flip))
    lo = grid[max(hit - 1, 0)]
    hi = grid[hit]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if flipped_population(sp, [mid])[0] >= target_flip:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
