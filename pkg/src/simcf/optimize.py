# simcf/optimize.py
# The three system-design routines: greedy interference-aware pilot
# allocation, blockwise phase-probing wave-domain beamforming driven by the
# closed-form sum SE, and bisection max-min power control over the linear
# feasibility system induced by fixed CPU weights.

import logging
from dataclasses import dataclass, field

import numpy as np

from . import se
from .pipeline import NetworkModel
from .scenario import Drop
from .sim_physics import wrap_phases

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Pilot allocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotAssignment:
    pilot_of: np.ndarray   # (K,) pilot index per UE

    def __post_init__(self):
        self.pilot_of.setflags(write=False)

    def copilot_set(self, k):
        """Indices of UEs sharing UE k's pilot, k included."""
        return np.flatnonzero(self.pilot_of == self.pilot_of[k])

    def reuse_counts(self, tau_p):
        return np.bincount(self.pilot_of, minlength=tau_p)


def pilot_interference(drop: Drop, k, assigned, pilot_of, metric, state=None):
    """Contamination cost of giving each pilot to UE k, shape (tau_p,).

    metric "beta": sum over co-pilot UEs j and APs of beta_lk * beta_lj
    (cheap, phase independent). metric "trace": normalized covariance
    overlap sum_l tr(r_lk r_lj) / sqrt(tr r_lk tr r_lj), needs a channel
    state.
    """
    tau_p = drop.cfg.tau_p
    ui = np.zeros(tau_p)
    if metric == "beta":
        cost = drop.beta[:, k][:, None] * drop.beta[:, assigned]   # (L, |assigned|)
        per_ue = cost.sum(axis=0)
    elif metric == "trace":
        if state is None:
            raise ValueError("trace metric needs a channel state")
        r = state.r_all()
        overlap = np.real(np.einsum("luv,ljvu->lj", r[:, k], r[:, assigned]))
        tr = np.real(np.einsum("lkuu->lk", r))
        norm = np.sqrt(tr[:, k][:, None] * tr[:, assigned])
        per_ue = (overlap / np.maximum(norm, 1e-300)).sum(axis=0)
    else:
        raise ValueError(f"unknown pilot metric {metric!r}")
    for i, j in enumerate(assigned):
        ui[pilot_of[j]] += per_ue[i]
    return ui


def allocate_pilots(drop: Drop, metric="beta", state=None) -> PilotAssignment:
    """Greedy contamination-minimizing pilot assignment.

    The first tau_p UEs take pilots 0..tau_p-1; every further UE (in index
    order) takes the pilot with the least accumulated interference toward
    the UEs already holding it, ties broken by the lowest pilot index.
    """
    cfg = drop.cfg
    pilot_of = np.full(cfg.K, -1, dtype=int)
    head = min(cfg.tau_p, cfg.K)
    pilot_of[:head] = np.arange(head)
    for k in range(head, cfg.K):
        assigned = np.arange(k)
        ui = pilot_interference(drop, k, assigned, pilot_of, metric, state)
        pilot_of[k] = int(np.argmin(ui))   # argmin takes the lowest index on ties
    return PilotAssignment(pilot_of=pilot_of)


# ---------------------------------------------------------------------------
# Wave-domain beamforming
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeamformingConfig:
    """Knobs of the blockwise phase-probing search."""
    step_size: float = np.pi / 8     # phase increment per probe, rad
    max_probes: int = 16             # probes per block (full circle at pi/8)
    min_gain: float = 1e-3           # required sum-SE improvement, bit/s/Hz
    block_size: int = 4              # meta-atoms updated jointly
    sweeps: int = 1                  # outer passes over all APs
    symmetric_probe: bool = False    # also try negative increments
    decoder: str = "lsfd"

    def __post_init__(self):
        if not 0.0 < self.step_size < 2.0 * np.pi:
            raise ValueError("step_size must lie in (0, 2 pi)")
        if self.max_probes < 1 or self.block_size < 1 or self.sweeps < 1:
            raise ValueError("max_probes, block_size and sweeps must be >= 1")
        if self.min_gain < 0:
            raise ValueError("min_gain must be nonnegative")


@dataclass
class TraceRow:
    iteration: int
    objective: float
    accepted: bool


class SumSeObjective:
    """Closed-form sum SE with per-AP incremental term updates."""

    def __init__(self, model: NetworkModel, pilot_of, p=None, decoder="lsfd"):
        self.model = model
        self.cfg = model.cfg
        self.pilot_of = np.asarray(pilot_of)
        self.p = model.drop.p if p is None else np.asarray(p, dtype=float)
        self.decoder = decoder
        self.p_hat = model.cfg.pilot_powers()
        self.phases = None
        self.terms = None

    def set_phases(self, phases):
        self.phases = np.array(phases, dtype=float)
        self.terms = self.model.terms(self.phases, self.pilot_of)
        return self.value(self.terms)

    def value(self, terms):
        cfg = self.cfg
        weights = se.decoder_weights(terms, self.decoder, self.p, self.p_hat,
                                     cfg.tau_p, cfg.sigma2)
        gamma = se.sinr_from_weights(terms, weights, self.p, self.p_hat,
                                     cfg.tau_p, cfg.sigma2)
        return float(se.se_from_sinr(gamma, cfg.tau_c, cfg.tau_p).sum())

    def ap_terms(self, l, ap_phases):
        """Terms of the full system with AP l's (M, N) phases replaced."""
        patched = self.phases.copy()
        patched[l] = ap_phases
        slice_terms = self.model.terms(patched, self.pilot_of, ap_indices=[l])
        return self.terms.replace_ap(l, slice_terms), patched

    def try_ap(self, l, ap_phases):
        terms, _ = self.ap_terms(l, ap_phases)
        return self.value(terms)

    def commit_ap(self, l, ap_phases):
        self.terms, self.phases = self.ap_terms(l, ap_phases)


def optimize_beamforming(model: NetworkModel, pilot_of, init_phases,
                         cfg: BeamformingConfig = BeamformingConfig(),
                         rng=None, p=None):
    """Blockwise phase search maximizing the closed-form sum SE.

    For each AP in turn, meta-atom indices are visited in a seeded random
    permutation in blocks of block_size. Each block accumulates step_size
    increments (up to max_probes of them, wrapping modulo 2 pi); the first
    probe improving the objective by more than min_gain is committed and
    the search moves to the next block. The objective trace is
    non-decreasing; with no improving probe the input phases survive.

    Returns (phases, trace) with trace a list of TraceRow per probe.
    """
    rng = np.random.default_rng(rng)
    objective = SumSeObjective(model, pilot_of, p=p, decoder=cfg.decoder)
    phases = wrap_phases(np.array(init_phases, dtype=float))
    best = objective.set_phases(phases)
    n_layers, n_atoms = phases.shape[1], phases.shape[2]
    trace = [TraceRow(iteration=0, objective=best, accepted=False)]
    it = 0
    for _ in range(cfg.sweeps):
        for l in range(phases.shape[0]):
            order = rng.permutation(n_layers * n_atoms)
            for start in range(0, order.size, cfg.block_size):
                block = order[start:start + cfg.block_size]
                rows, cols = np.unravel_index(block, (n_layers, n_atoms))
                candidate = phases[l].copy()
                for probe in range(1, cfg.max_probes + 1):
                    candidate[rows, cols] = wrap_phases(
                        phases[l][rows, cols] + probe * cfg.step_size)
                    it += 1
                    gain = objective.try_ap(l, candidate) - best
                    if cfg.symmetric_probe and gain <= cfg.min_gain:
                        mirrored = phases[l].copy()
                        mirrored[rows, cols] = wrap_phases(
                            phases[l][rows, cols] - probe * cfg.step_size)
                        down = objective.try_ap(l, mirrored) - best
                        if down > gain:
                            candidate, gain = mirrored, down
                    if gain > cfg.min_gain:
                        phases[l] = candidate
                        objective.commit_ap(l, candidate)
                        best += gain
                        trace.append(TraceRow(it, best, True))
                        break
                    trace.append(TraceRow(it, best, False))
    return phases, trace


def write_trace_csv(path, trace):
    """Optimizer trace as CSV rows (iteration, objective, accepted)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iteration", "objective", "accepted"))
        for row in trace:
            writer.writerow((row.iteration, f"{row.objective:.10g}",
                             int(row.accepted)))


# ---------------------------------------------------------------------------
# Max-min power control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerSolution:
    p: np.ndarray          # (K,) transmit powers, W
    t_star: float          # certified min-SINR lower bound
    iterations: int
    bracket: tuple         # final (t_min, t_max)


@dataclass(frozen=True)
class _SinrCoefficients:
    """gamma_k(p) = signal_k p_k / (d[k] @ p + noise_k) for fixed weights."""
    signal: np.ndarray     # (K,)
    d: np.ndarray          # (K, K) interference coefficients, d[k, k] >= 0
    noise: np.ndarray      # (K,)

    def gamma(self, p):
        return self.signal * p / (self.d @ p + self.noise)


def sinr_coefficients(terms: se.SinrTerms, weights, p_hat, tau_p, sigma2):
    """Scalarize the SINR into affine-fraction coefficients for fixed weights."""
    p_hat = np.asarray(p_hat, dtype=float)
    k_ues = terms.n_ues
    signal = np.zeros(k_ues)
    d = np.zeros((k_ues, k_ues))
    noise = np.zeros(k_ues)
    mask = terms.copilot_mask()
    for k in range(k_ues):
        a = weights[k]
        aa = np.abs(a) ** 2
        signal[k] = np.abs(a.conj() @ terms.z[k]) ** 2
        d[k] = terms.xi[k] @ aa
        for j in np.flatnonzero(mask[k]):
            coeff = p_hat[k] * p_hat[j] * tau_p ** 2
            d[k, j] += coeff * np.abs(a.conj() @ terms.delta[k, j]) ** 2
        d[k, k] -= float(aa @ terms.lam[k] ** 2)
        noise[k] = sigma2 * float(aa @ terms.z[k])
    return _SinrCoefficients(signal=signal, d=d, noise=noise)


def _feasible_powers(coeffs, t, p_max, tol=1e-9):
    """Least power vector meeting gamma_k >= t, or None if infeasible.

    For fixed weights the constraints p_k signal_k >= t (d[k] @ p + noise_k)
    are linear; their least solution solves (I - t D~) p = t n~ with
    D~ = d / signal and n~ = noise / signal. The interference matrix D~ is
    entrywise nonnegative, so whenever the target t exceeds what the network
    can support the solve yields a negative component (Perron-Frobenius),
    and a component above p_max certifies infeasibility under the cap.
    (A fixed-point sweep finds the same point but its contraction ratio
    degenerates to 1 at the feasibility boundary; the direct solve is exact.)
    """
    n_ue = coeffs.signal.shape[0]
    if t <= 0:
        return np.zeros(n_ue)
    a = np.eye(n_ue) - t * coeffs.d / coeffs.signal[:, None]
    b = t * coeffs.noise / coeffs.signal
    try:
        p = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return None
    if np.any(p < -tol * p_max) or np.any(p > p_max * (1.0 + tol)):
        return None
    return np.clip(p, 0.0, p_max)


def maxmin_power(terms: se.SinrTerms, weights, p_max, p_hat, tau_p, sigma2,
                 eps=1e-3, t_max=None) -> PowerSolution:
    """Bisection max-min SINR power control for fixed CPU weights.

    Brackets the best common SINR in [0, t_max] (default twice the full
    power maximum) and bisects on the feasibility of the linear system
    p_k signal_k >= t (d[k] @ p + noise_k), 0 <= p <= p_max. Terminates
    when the bracket is narrower than eps.
    """
    coeffs = sinr_coefficients(terms, weights, p_hat, tau_p, sigma2)
    if np.any(coeffs.signal <= 0):
        raise se.SinrComputationError("zero signal coefficient in power control")
    full = np.full(coeffs.signal.shape[0], float(p_max))
    gamma_full = coeffs.gamma(full)
    t_lo, t_hi = 0.0, float(2.0 * gamma_full.max()) if t_max is None else float(t_max)
    if t_hi <= 0:
        return PowerSolution(p=full, t_star=0.0, iterations=0, bracket=(0.0, 0.0))
    best_p = full
    iterations = 0
    while t_hi - t_lo >= eps:
        t = 0.5 * (t_lo + t_hi)
        p = _feasible_powers(coeffs, t, p_max)
        iterations += 1
        if p is None:
            t_hi = t
        else:
            t_lo = t
            best_p = p
    if t_lo > 0:
        p = _feasible_powers(coeffs, t_lo, p_max)
        if p is not None:
            best_p = p
    return PowerSolution(p=best_p, t_star=t_lo, iterations=iterations,
                         bracket=(t_lo, t_hi))
