"""Monte Carlo comparison of the tracking scheme against independent sounding.

Every trial draws one channel trajectory ``H_0 .. H_T`` and runs both schemes
on it (common random numbers). Random streams are derived from
``(master_seed, trial_index, stream)`` with Philox, so a trial's output does
not depend on which worker runs it or in which order trials finish.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from mmtrack.baseband import make_pilot
from mmtrack.channel_model import (
    ChannelParams,
    EvolutionParams,
    assemble_channel,
    correlation_from_velocity,
    evolve_state,
    sample_initial_state,
)
from mmtrack.codebook import (
    BasisCodebook,
    adapt_codebook,
    build_candidate_dictionary,
    design_basis_codebook,
)
from mmtrack.pipeline import Dictionaries, Rotations, block_pipeline, initial_state
from mmtrack.tracker import HybridConfig, SoundingBudget

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "independent")
USES_PER_BLOCK = 500  # 0.5 ms block of ~1 us OFDM symbols

_STREAM_CHANNEL, _STREAM_INIT, _STREAM_PROPOSED, _STREAM_INDEPENDENT, _STREAM_CODEBOOK = range(5)


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


def velocity_to_delta(velocity_kmh: float) -> float:
    """Per-block angle drift bound: 3 degrees per km/h, returned in radians."""
    if velocity_kmh < 0:
        raise ValueError(f"velocity must be non-negative, got {velocity_kmh}")
    return math.radians(3.0 * velocity_kmh)


@dataclass(frozen=True)
class ExperimentConfig:
    # channel
    n_tx: int = 64
    n_rx: int = 64
    n_paths: int = 4
    spacing_ratio: float = 0.5
    # hybrid transceiver
    n_rf: int = 4
    n_streams: int = 4
    phase_bits: int = 4
    noise_var: float = 1.0
    # evolution: either (rho, delta_deg) or (carrier_hz, velocity_kmh, block_s)
    rho: float | None = None
    delta_deg: float | None = None
    carrier_hz: float | None = None
    velocity_kmh: float | None = None
    block_s: float | None = None
    # codebooks
    codebook_size: int = 24
    phase_order: int | None = None
    gamma: float = 0.4
    rotation_projection: str = "phase"
    include_identity: bool = True
    n_can: int = 200
    search_budget: int = 10_000
    bench_size: int = 32
    # experiment
    n_pilot: int = 6
    blocks: int = 10
    trials: int = 500
    master_seed: int = 0
    schemes: tuple[str, ...] = SCHEMES

    def __post_init__(self):
        explicit = [k for k in ("rho", "delta_deg") if getattr(self, k) is not None]
        physical = [k for k in ("carrier_hz", "velocity_kmh", "block_s") if getattr(self, k) is not None]
        if explicit and physical:
            raise ConfigError("specify either rho/delta_deg or carrier_hz/velocity_kmh/block_s, not both", explicit[0])
        if explicit and len(explicit) != 2:
            missing = ({"rho", "delta_deg"} - set(explicit)).pop()
            raise ConfigError("explicit evolution needs both rho and delta_deg", missing)
        if physical and len(physical) != 3:
            missing = sorted({"carrier_hz", "velocity_kmh", "block_s"} - set(physical))[0]
            raise ConfigError("physical evolution needs carrier_hz, velocity_kmh and block_s", missing)
        if not explicit and not physical:
            object.__setattr__(self, "carrier_hz", 72e9)
            object.__setattr__(self, "velocity_kmh", 3.0)
            object.__setattr__(self, "block_s", 5e-4)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}", "trials")
        if self.blocks < 1:
            raise ConfigError(f"blocks must be >= 1, got {self.blocks}", "blocks")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes}", "schemes")
        if self.n_pilot < self.n_rf:
            raise ConfigError(f"n_pilot must be >= n_rf={self.n_rf}, got {self.n_pilot}", "n_pilot")
        if self.rotation_projection not in ("norm", "phase"):
            raise ConfigError("rotation_projection must be 'norm' or 'phase'", "rotation_projection")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}", "gamma")
        # sub-configs run their own validation
        try:
            self.channel
            self.hybrid
            self.evolution
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.n_tx, self.n_rx, self.n_paths, self.spacing_ratio)

    @property
    def hybrid(self) -> HybridConfig:
        return HybridConfig(self.n_tx, self.n_rx, self.n_rf, self.n_streams, self.phase_bits, self.noise_var)

    @property
    def evolution(self) -> EvolutionParams:
        if self.rho is not None:
            return EvolutionParams(self.rho, math.radians(self.delta_deg))
        rho = correlation_from_velocity(self.carrier_hz, self.velocity_kmh, self.block_s)
        return EvolutionParams(rho, velocity_to_delta(self.velocity_kmh))

    @property
    def proposed_budget(self) -> SoundingBudget:
        return SoundingBudget(self.codebook_size, self.n_rf, self.n_pilot)

    @property
    def independent_budget(self) -> SoundingBudget:
        return SoundingBudget(self.bench_size, self.n_rf, self.n_pilot)

    def budget(self, scheme: str) -> SoundingBudget:
        return self.proposed_budget if scheme == "proposed" else self.independent_budget


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, raw: str, line: int):
    ftype = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    raw = raw.strip()
    try:
        if name == "schemes":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if raw.lower() in ("none", "") and "None" in str(ftype):
            return None
        if "bool" in str(ftype):
            return _BOOL[raw.lower()]
        if "int" in str(ftype):
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if "float" in str(ftype):
            return float(raw)
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"cannot parse {raw!r} as {ftype}", name, line) from None


def load_config(text: str, **overrides) -> ExperimentConfig:
    """Parse flat ``key = value`` text; ``#`` starts a comment, ``[section]`` lines are ignored."""
    known = {f.name for f in fields(ExperimentConfig)}
    values, lines_of = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        values[key] = _coerce(key, value, lineno)
        lines_of[key] = lineno
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        if exc.key in lines_of and exc.line is None:
            raise ConfigError(str(exc).rsplit(" (", 1)[0], exc.key, lines_of[exc.key]) from None
        raise


def trial_rng(master_seed: int, trial_index: int, stream: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index, stream))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ExperimentContext:
    """Per-experiment constants shared by every trial."""

    config: ExperimentConfig
    dicts: Dictionaries
    rotations: Rotations
    basis_rx: BasisCodebook
    basis_tx: BasisCodebook

    @classmethod
    def build(cls, config: ExperimentConfig) -> "ExperimentContext":
        first = 0 if config.include_identity else 1
        rng = trial_rng(config.master_seed, 0, _STREAM_CODEBOOK)
        basis_rx = design_basis_codebook(
            config.n_rx, config.codebook_size, config.phase_order, config.search_budget, rng, first_power=first
        )
        if config.n_tx == config.n_rx and config.phase_order is None:
            basis_tx = basis_rx
        else:
            basis_tx = design_basis_codebook(
                config.n_tx, config.codebook_size, config.phase_order, config.search_budget, rng, first_power=first
            )
        rho = config.evolution.rho
        rotations = Rotations(
            adapt_codebook(basis_rx, rho, config.gamma, config.rotation_projection),
            adapt_codebook(basis_tx, rho, config.gamma, config.rotation_projection),
        )
        dicts = Dictionaries(
            build_candidate_dictionary(config.n_rx, config.n_can, config.phase_bits, config.spacing_ratio),
            build_candidate_dictionary(config.n_tx, config.n_can, config.phase_bits, config.spacing_ratio),
        )
        return cls(config, dicts, rotations, basis_rx, basis_tx)


def run_trial(
    config: ExperimentConfig,
    trial_index: int,
    context: ExperimentContext | None = None,
    observer=None,
) -> dict[str, np.ndarray]:
    """Throughput of every configured scheme at blocks ``0 .. blocks``.

    ``observer(scheme, block, result)``, when given, sees every ``BlockResult``.
    """
    ctx = ExperimentContext.build(config) if context is None else context
    cfg = config.hybrid
    params = config.channel
    evo = config.evolution
    pilot = make_pilot(config.n_rf, config.n_pilot)
    seed = config.master_seed

    channel_rng = trial_rng(seed, trial_index, _STREAM_CHANNEL)
    path_state = sample_initial_state(channel_rng, params)
    h = assemble_channel(path_state, params)

    # block 0 is an independent sweep for both schemes, computed once
    start = block_pipeline(
        initial_state(ctx.dicts, cfg), h, "independent", ctx.dicts, pilot, cfg,
        trial_rng(seed, trial_index, _STREAM_INIT), budget=config.independent_budget,
    )
    _check_uses(start.channel_uses, config.independent_budget, "independent")

    streams = {"proposed": _STREAM_PROPOSED, "independent": _STREAM_INDEPENDENT}
    rngs = {s: trial_rng(seed, trial_index, streams[s]) for s in config.schemes}
    states = {s: start.state for s in config.schemes}
    out = {s: np.empty(config.blocks + 1) for s in config.schemes}
    for s in config.schemes:
        out[s][0] = start.throughput
        if observer is not None:
            observer(s, 0, start)

    for n in range(1, config.blocks + 1):
        path_state = evolve_state(path_state, evo, channel_rng)
        h = assemble_channel(path_state, params)
        for s in config.schemes:
            res = block_pipeline(
                states[s], h, s, ctx.dicts, pilot, cfg, rngs[s],
                rotations=ctx.rotations, budget=config.independent_budget,
            )
            _check_uses(res.channel_uses, config.budget(s), s)
            states[s] = res.state
            out[s][n] = res.throughput
            if observer is not None:
                observer(s, n, res)
    return out


def _check_uses(used: int, budget: SoundingBudget, scheme: str) -> None:
    if used != budget.total_uses_per_block:
        raise RuntimeError(f"{scheme} block consumed {used} channel uses, budget is {budget.total_uses_per_block}")


@dataclass
class ThroughputTrace:
    config: ExperimentConfig
    samples: dict[str, np.ndarray]  # scheme -> (trials, blocks + 1)
    overhead_uses: dict[str, int] = field(default_factory=dict)

    @property
    def schemes(self) -> tuple[str, ...]:
        return tuple(self.samples)

    @property
    def trials(self) -> int:
        return next(iter(self.samples.values())).shape[0] if self.samples else 0

    @property
    def stderr_valid(self) -> bool:
        return self.trials > 1

    def mean(self, scheme: str) -> np.ndarray:
        return self.samples[scheme].mean(axis=0)

    def stderr(self, scheme: str) -> np.ndarray:
        """Sample standard deviation over ``sqrt(trials)``; zero for a single trial."""
        x = self.samples[scheme]
        if x.shape[0] < 2:
            return np.zeros(x.shape[1])
        return x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])

    def overhead_fraction(self, scheme: str) -> float:
        return self.overhead_uses[scheme] / USES_PER_BLOCK


def _run_chunk(args):
    config, indices = args
    ctx = _WORKER_CONTEXT if _WORKER_CONTEXT is not None else ExperimentContext.build(config)
    return [run_trial(config, i, ctx) for i in indices]


_WORKER_CONTEXT: ExperimentContext | None = None


def _init_worker(ctx: ExperimentContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ctx


def run_experiment(config: ExperimentConfig, workers: int = 1, context: ExperimentContext | None = None) -> ThroughputTrace:
    """Run every trial and stack the traces in trial order."""
    ctx = ExperimentContext.build(config) if context is None else context
    indices = list(range(config.trials))
    if workers <= 1:
        results = [run_trial(config, i, ctx) for i in indices]
    else:
        chunks = [indices[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
        by_index = {i: r for chunk, part in zip(chunks, parts) for i, r in zip(chunk, part)}
        results = [by_index[i] for i in indices]

    samples = {s: np.stack([r[s] for r in results]) for s in config.schemes}
    overhead = {s: config.budget(s).total_uses_per_block for s in config.schemes}
    trace = ThroughputTrace(config, samples, overhead)
    if not trace.stderr_valid:
        log.warning("a single trial gives no standard error; reporting 0")
    return trace


CSV_HEADER = ["scheme", "block", "rho", "velocity_kmh", "mean_bits_per_hz", "stderr", "trials", "overhead_uses"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def write_csv(trace: ThroughputTrace | None, destination) -> None:
    """One row per (scheme, block); an empty trace writes the header only."""
    path = Path(destination)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            if trace is None or not trace.samples:
                return
            cfg = trace.config
            rho = cfg.evolution.rho
            velocity = cfg.velocity_kmh if cfg.velocity_kmh is not None else float("nan")
            for s in trace.schemes:
                means, errs = trace.mean(s), trace.stderr(s)
                for n in range(len(means)):
                    writer.writerow([
                        s, n, _fmt(rho), _fmt(velocity), _fmt(means[n]), _fmt(errs[n]),
                        trace.trials, trace.overhead_uses[s],
                    ])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(source) -> list[dict]:
    with Path(source).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["block"] = int(row["block"])
        row["trials"] = int(row["trials"])
        row["overhead_uses"] = int(row["overhead_uses"])
        for key in ("rho", "velocity_kmh", "mean_bits_per_hz", "stderr"):
            row[key] = float(row[key])
    return rows


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
