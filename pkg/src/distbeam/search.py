"""Local random search with one-bit keep/discard feedback.

The generic loop: sample a perturbation from a local measure, evaluate the
received magnitude at the perturbed phases, and let a decision map accept
only non-degrading moves. The canonical instance accepts exactly when the
proposed magnitude strictly exceeds the current one (ties discard).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, TextIO

import numpy as np

from .channel import (
    TWO_PI,
    ChannelRealization,
    PowerConfig,
    SeedLike,
    as_generator,
    canonical_phases,
    measure_magnitude,
    optimal_magnitude,
)


class FeedbackBit(enum.Enum):
    """Receiver broadcast: keep the perturbed phases or fall back."""

    KEEP = "keep"
    DISCARD = "discard"


class DecisionMapViolation(RuntimeError):
    """A plugged decision map accepted a magnitude-decreasing move."""


@dataclass(frozen=True)
class PerturbationSpec:
    """Sampling measure for phase perturbations.

    ``uniform-hypercube`` draws each component i.i.d. uniform on
    [-delta0, delta0]. An optional per-step ``schedule`` overrides delta0 for
    the first ``len(schedule)`` steps (time-varying measure); later steps fall
    back to ``delta0``.
    """

    delta0: float
    family: str = "uniform-hypercube"
    schedule: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family != "uniform-hypercube":
            raise ValueError(f"unknown perturbation family: {self.family!r}")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if self.schedule is not None:
            sched = tuple(float(d) for d in self.schedule)
            if any(not d > 0 for d in sched):
                raise ValueError("schedule entries must be positive")
            object.__setattr__(self, "schedule", sched)

    def delta0_at(self, step_index: int) -> float:
        if self.schedule is not None and step_index < len(self.schedule):
            return self.schedule[step_index]
        return self.delta0


@dataclass(frozen=True)
class SearchState:
    """Accepted phases, their measured magnitude, and the step counter."""

    theta: np.ndarray
    current_mag: float
    step_index: int


@dataclass(frozen=True)
class StopRule:
    """When a trajectory ends: a hard step budget, optionally with a
    convergence threshold (epsilon region, strict >, or alpha fraction, >=).
    """

    max_steps: int
    eps: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.eps is not None and self.alpha is not None:
            raise ValueError("stop rule takes eps or alpha, not both")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")

    @staticmethod
    def steps(max_steps: int) -> "StopRule":
        return StopRule(max_steps=max_steps)

    @staticmethod
    def eps_region(eps: float, max_steps: int) -> "StopRule":
        return StopRule(max_steps=max_steps, eps=eps)

    @staticmethod
    def alpha_fraction(alpha: float, max_steps: int) -> "StopRule":
        return StopRule(max_steps=max_steps, alpha=alpha)

    def met(self, mag: float, opt_mag: float) -> bool | None:
        """Threshold test, or None when this is a pure step-budget rule."""
        if self.eps is not None:
            return mag > opt_mag - self.eps
        if self.alpha is not None:
            return mag >= self.alpha * opt_mag
        return None


class StepRecord(NamedTuple):
    step_index: int
    proposed_theta: np.ndarray | None
    bit: FeedbackBit
    theta: np.ndarray | None
    mag: float
    increment: float


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed record of one search run.

    ``bits[t]``, ``mags[t]`` and ``increments[t]`` describe step t+1 (the
    transition out of state t); ``magnitudes()`` prepends the initial
    magnitude. Per-step phase vectors are kept only when the run recorded
    them. ``converged`` is None for pure step-budget runs, otherwise whether
    the threshold fired within the budget.
    """

    channel: ChannelRealization
    spec: PerturbationSpec
    power: PowerConfig
    stop: StopRule
    seed_label: str
    initial_theta: np.ndarray
    initial_mag: float
    final_theta: np.ndarray
    bits: np.ndarray
    mags: np.ndarray
    increments: np.ndarray
    converged: bool | None
    proposed_thetas: np.ndarray | None = None
    thetas: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return int(self.bits.shape[0])

    @property
    def final_mag(self) -> float:
        return float(self.mags[-1]) if self.n_steps else self.initial_mag

    def magnitudes(self) -> np.ndarray:
        """Magnitude curve indexed by t = 0..n_steps (initial value first)."""
        return np.concatenate(([self.initial_mag], self.mags))

    def first_passage_time(self, threshold: float) -> int | None:
        """Smallest t with magnitude >= threshold, or None if never reached."""
        hits = np.nonzero(self.magnitudes() >= threshold)[0]
        return int(hits[0]) if hits.size else None

    def steps(self) -> Iterator[StepRecord]:
        for t in range(self.n_steps):
            yield StepRecord(
                step_index=t + 1,
                proposed_theta=None
                if self.proposed_thetas is None
                else self.proposed_thetas[t],
                bit=FeedbackBit.KEEP if self.bits[t] else FeedbackBit.DISCARD,
                theta=None if self.thetas is None else self.thetas[t],
                mag=float(self.mags[t]),
                increment=float(self.increments[t]),
            )


def init_state(
    channel: ChannelRealization,
    mode,
    power: PowerConfig,
    rng: SeedLike = None,
) -> SearchState:
    """Initial search state.

    ``mode`` is one of the strings ``"zero"`` / ``"origin"`` (zero beamforming
    phases, so theta[0] equals the channel phases), ``"uniform"`` (each
    component i.i.d. uniform on [0, 2pi)), or an explicit phase vector.
    """
    rng = as_generator(rng)
    if isinstance(mode, str):
        if mode in ("zero", "origin"):
            theta = channel.phi.copy()
        elif mode == "uniform":
            theta = canonical_phases(rng.uniform(0.0, TWO_PI, channel.n_s))
        else:
            raise ValueError(f"unknown init mode: {mode!r}")
    else:
        theta = canonical_phases(mode)
        if theta.shape != (channel.n_s,):
            raise ValueError(
                f"explicit init vector has length {theta.shape[0] if theta.ndim == 1 else '?'}, "
                f"channel has {channel.n_s} transmitters"
            )
    mag = measure_magnitude(channel, theta, power, rng)
    return SearchState(theta=theta, current_mag=mag, step_index=0)


def sample_perturbation(
    spec: PerturbationSpec, n_s: int, step_index: int, rng: SeedLike = None
) -> np.ndarray:
    """One perturbation vector: n_s i.i.d. uniform draws on [-delta0(t), delta0(t)]."""
    d0 = spec.delta0_at(step_index)
    return as_generator(rng).uniform(-d0, d0, n_s)


def _one_bit_step_full(state, channel, spec, power, rng):
    """one_bit_step plus the proposed phase vector (needed by trajectory recording)."""
    delta = sample_perturbation(spec, channel.n_s, state.step_index, rng)
    proposed = canonical_phases(state.theta + delta)
    proposed_mag = measure_magnitude(channel, proposed, power, rng)
    if proposed_mag > state.current_mag:
        new_state = SearchState(proposed, proposed_mag, state.step_index + 1)
        return new_state, FeedbackBit.KEEP, proposed_mag - state.current_mag, proposed
    new_state = SearchState(state.theta, state.current_mag, state.step_index + 1)
    return new_state, FeedbackBit.DISCARD, 0.0, proposed


def one_bit_step(
    state: SearchState,
    channel: ChannelRealization,
    spec: PerturbationSpec,
    power: PowerConfig,
    rng: SeedLike = None,
) -> tuple[SearchState, FeedbackBit, float]:
    """One slot of the one-bit scheme.

    Perturb, measure, and keep exactly when the proposed magnitude strictly
    exceeds the stored magnitude of the last accepted point; ties and losses
    discard and leave the phases untouched. Returns the new state, the
    feedback bit, and the magnitude increment (0 on discard).
    """
    new_state, bit, inc, _ = _one_bit_step_full(
        state, channel, spec, power, as_generator(rng)
    )
    return new_state, bit, inc


def plug_decision_map(
    accept: Callable[[float, float], bool],
) -> Callable[..., tuple[SearchState, FeedbackBit, float]]:
    """Build a step function from an accept predicate on (current, proposed).

    The framework requires accepted moves never to decrease the objective; in
    noiseless mode a decreasing accept raises :class:`DecisionMapViolation`.
    The strictly-greater predicate reproduces :func:`one_bit_step` exactly.
    """

    def step(state, channel, spec, power, rng=None):
        rng = as_generator(rng)
        delta = sample_perturbation(spec, channel.n_s, state.step_index, rng)
        proposed = canonical_phases(state.theta + delta)
        proposed_mag = measure_magnitude(channel, proposed, power, rng)
        if accept(state.current_mag, proposed_mag):
            if power.sigma2 == 0.0 and proposed_mag < state.current_mag:
                raise DecisionMapViolation(
                    f"decision map accepted a decrease at step {state.step_index + 1}: "
                    f"{state.current_mag!r} -> {proposed_mag!r}"
                )
            new_state = SearchState(proposed, proposed_mag, state.step_index + 1)
            return new_state, FeedbackBit.KEEP, proposed_mag - state.current_mag
        new_state = SearchState(state.theta, state.current_mag, state.step_index + 1)
        return new_state, FeedbackBit.DISCARD, 0.0

    return step


def _seed_label(seed) -> str:
    if isinstance(seed, (int, np.integer)):
        return str(int(seed))
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        if isinstance(ent, (int, np.integer)):
            return str(int(ent))
        if isinstance(ent, (list, tuple)):
            return ":".join(str(int(e)) for e in ent)
    return ""


def run_trajectory(
    channel: ChannelRealization,
    spec: PerturbationSpec,
    power: PowerConfig,
    init_mode,
    stop: StopRule,
    seed: SeedLike = None,
    step_fn: Callable[..., tuple[SearchState, FeedbackBit, float]] | None = None,
    record_thetas: bool = True,
) -> Trajectory:
    """Run the search until the stop rule fires or the step budget runs out.

    The threshold (if any) is also checked at t=0, so an initial point already
    past it yields a zero-step trajectory. Exhausting the budget without
    convergence is reported via ``converged=False``, not an exception.
    Identical inputs and seed give a bit-identical trajectory.
    """
    rng = as_generator(seed)
    state = init_state(channel, init_mode, power, rng)
    initial_theta = state.theta
    initial_mag = state.current_mag
    opt = optimal_magnitude(channel, power.P)

    bits: list[bool] = []
    mags: list[float] = []
    incs: list[float] = []
    props: list[np.ndarray] = []
    thetas: list[np.ndarray] = []

    converged = stop.met(state.current_mag, opt)
    while state.step_index < stop.max_steps and converged is not True:
        if step_fn is None:
            state, bit, inc, proposed = _one_bit_step_full(
                state, channel, spec, power, rng
            )
        else:
            state, bit, inc = step_fn(state, channel, spec, power, rng)
            proposed = state.theta  # custom maps expose the proposal only on keep
        bits.append(bit is FeedbackBit.KEEP)
        mags.append(state.current_mag)
        incs.append(inc)
        if record_thetas:
            props.append(proposed)
            thetas.append(state.theta)
        converged = stop.met(state.current_mag, opt)

    n = len(bits)
    return Trajectory(
        channel=channel,
        spec=spec,
        power=power,
        stop=stop,
        seed_label=_seed_label(seed),
        initial_theta=initial_theta,
        initial_mag=initial_mag,
        final_theta=state.theta,
        bits=np.asarray(bits, dtype=bool),
        mags=np.asarray(mags, dtype=float),
        increments=np.asarray(incs, dtype=float),
        converged=converged,
        proposed_thetas=np.asarray(props, dtype=float).reshape(n, channel.n_s)
        if record_thetas
        else None,
        thetas=np.asarray(thetas, dtype=float).reshape(n, channel.n_s)
        if record_thetas
        else None,
    )


def trajectory_to_csv(traj: Trajectory, out: TextIO) -> None:
    """Serialize a trajectory.

    Header comment lines (in order): gains as a:phi pairs, delta0, P, seed.
    Then a ``step,bit,mag,increment`` table; row 0 carries the initial
    magnitude with empty bit and increment fields, later rows have bit
    ``keep`` or ``discard`` and the realized increment (0.0 on discard).
    """
    gains = ";".join(f"{a!r}:{p!r}" for a, p in traj.channel.gains())
    out.write(f"# gains={gains}\n")
    out.write(f"# delta0={traj.spec.delta0!r}\n")
    out.write(f"# P={traj.power.P!r}\n")
    out.write(f"# seed={traj.seed_label}\n")
    out.write("step,bit,mag,increment\n")
    out.write(f"0,,{traj.initial_mag!r},\n")
    for t in range(traj.n_steps):
        bit = "keep" if traj.bits[t] else "discard"
        out.write(f"{t + 1},{bit},{float(traj.mags[t])!r},{float(traj.increments[t])!r}\n")
