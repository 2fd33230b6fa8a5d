"""Scenario configuration: JSON document validated against ``hidden-reach/1``.

Matrices are row-major nested arrays; a bare number stands for a 1x1 matrix.
:func:`parse` fills defaults, so ``parse(to_dict(cfg)) == cfg`` holds for any
parsed config.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .calibration import AttackMoments, QuantileMethod
from .errors import ConfigError, HiddenReachError
from .model import ObserverDesign, SystemModel, Tolerances
from .reach import default_b_grid
from .sdp import normalize_backend
from .sim import ClipMode, SimConfig, Strategy

SCHEMA_ID = "hidden-reach/1"

Matrix = list  # nested list of floats


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("hidden_reach").joinpath("schema/scenario.schema.json").read_text())


def _matrix(x) -> Matrix | None:
    if x is None:
        return None
    if isinstance(x, (int, float)):
        return [[float(x)]]
    return [[float(v) for v in row] for row in x]


def _array(x) -> np.ndarray | None:
    return None if x is None else np.array(x, dtype=float)


@dataclass
class SystemBlock:
    F: Matrix
    C: Matrix
    R1: Matrix
    R2: Matrix
    G: Matrix | None = None
    R0: Matrix | None = None


@dataclass
class SynthesisBlock:
    gamma: float
    A: float | None = None
    method: str = "extended"
    sigma_iterations: int = 10
    b_grid: list[float] | None = None
    kappa_grid: list[float] | None = None


@dataclass
class ObserverBlock:
    L: Matrix | None = None
    synthesize: SynthesisBlock | None = None


@dataclass
class Case2Block:
    A: float
    a_p: list[float]
    mean: list[float] | None = None
    second_moment: Matrix | None = None


@dataclass
class DetectorBlock:
    A: list[float]
    quantile_method: str = "exact"
    mc_samples: int = 1_000_000
    case2: Case2Block | None = None


@dataclass
class SolverBlock:
    backend: str = "conic"
    b_grid: str | list[float] = "default"
    refine: bool = True
    workers: int = 1
    tol_feas: float = 1e-7
    tol_gap: float = 1e-7
    tol_cert: float = 1e-7
    tol_psd: float = 1e-9
    tol_lyap: float = 1e-8
    tol_schur: float = 1e-9


@dataclass
class ContainmentBlock:
    trials: int = 100
    horizon: int = 1000
    candidates: int = 8


@dataclass
class SimBlock:
    A: float | None = None
    horizon: int = 1000
    trials: int = 10
    seed: int | None = None
    strategy: str = "GREEDY_HIDDEN"
    clip_mode: str = "none"
    warmup: int = 100
    containment: ContainmentBlock | None = None


@dataclass
class OutputBlock:
    directory: str = "hidden-reach-out"
    formats: list[str] = field(default_factory=lambda: ["json", "csv", "svg"])


@dataclass
class ScenarioConfig:
    system: SystemBlock
    observer: ObserverBlock
    detector: DetectorBlock
    solver: SolverBlock = field(default_factory=SolverBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    name: str = ""
    schema: str = SCHEMA_ID

    # -- derived objects --------------------------------------------------------

    @property
    def tolerances(self) -> Tolerances:
        s = self.solver
        return Tolerances(psd=s.tol_psd, lyap=s.tol_lyap, schur=s.tol_schur)

    def model(self) -> SystemModel:
        s = self.system
        try:
            return SystemModel(_array(s.F), _array(s.C), _array(s.R1), _array(s.R2),
                               G=_array(s.G), R0=_array(s.R0), tol=self.tolerances)
        except HiddenReachError as exc:
            raise ConfigError(str(exc), path="system") from exc

    def observer_design(self) -> ObserverDesign:
        if self.observer.L is None:
            raise ConfigError("an observer gain L is required for this command", path="observer.L")
        return ObserverDesign(_array(self.observer.L))

    @property
    def quantile_method(self) -> QuantileMethod:
        return QuantileMethod(self.detector.quantile_method)

    @property
    def backend(self) -> str:
        return normalize_backend(self.solver.backend)

    def b_grid(self) -> np.ndarray:
        g = self.solver.b_grid
        return default_b_grid() if g == "default" else np.array(g, dtype=float)

    def moments(self) -> AttackMoments | None:
        c2 = self.detector.case2
        if c2 is None or (c2.mean is None and c2.second_moment is None):
            return None
        m = len(self.system.C)
        mean = np.zeros(m) if c2.mean is None else np.array(c2.mean, dtype=float)
        M = np.eye(m) if c2.second_moment is None else np.array(c2.second_moment, dtype=float)
        return AttackMoments(mean, M)

    def sim_config(self, seed: int | None = None) -> SimConfig:
        s = self.sim
        seed = s.seed if seed is None else seed
        return SimConfig(horizon=s.horizon, trials=s.trials, seed=0 if seed is None else seed,
                         clip_mode=ClipMode(s.clip_mode), attack=Strategy(s.strategy), warmup=s.warmup)

    def sim_rate(self) -> float:
        if self.sim.A is not None:
            return self.sim.A
        if not self.detector.A:
            raise ConfigError("no false-alarm rate for the simulation; set sim.A", path="sim.A")
        return self.detector.A[0]


# --- parsing -------------------------------------------------------------------------


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(list(e.absolute_path)), _path(e)))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, path=_path(err))


def _shape(M) -> tuple[int, int]:
    return len(M), len(M[0])


def _check_dims(cfg: ScenarioConfig) -> None:
    s = cfg.system
    for key in ("F", "C", "R1", "R2", "G", "R0"):
        M = getattr(s, key)
        if M is not None and len({len(r) for r in M}) != 1:
            raise ConfigError("ragged matrix rows", path=f"system.{key}")
    n, n2 = _shape(s.F)
    if n != n2:
        raise ConfigError(f"F must be square, got {n}x{n2}", path="system.F")
    m, nc = _shape(s.C)
    if nc != n:
        raise ConfigError(f"C must have {n} columns, got {nc}", path="system.C")
    want = {"R1": (n, n), "R2": (m, m), "R0": (n, n)}
    for key, shape in want.items():
        M = getattr(s, key)
        if M is not None and _shape(M) != shape:
            raise ConfigError(f"expected {shape[0]}x{shape[1]}, got {_shape(M)[0]}x{_shape(M)[1]}", path=f"system.{key}")
    if s.G is not None and len(s.G) != n:
        raise ConfigError(f"G must have {n} rows", path="system.G")
    L = cfg.observer.L
    if L is not None and _shape(L) != (n, m):
        raise ConfigError(f"L must be {n}x{m}, got {_shape(L)[0]}x{_shape(L)[1]}", path="observer.L")
    c2 = cfg.detector.case2
    if c2 is not None:
        for i, ap in enumerate(c2.a_p):
            if not ap < c2.A:
                raise ConfigError(f"a_p must be below A = {c2.A}", path=f"detector.case2.a_p.{i}")
        if c2.mean is not None and len(c2.mean) != m:
            raise ConfigError(f"mean must have {m} entries", path="detector.case2.mean")
        if c2.second_moment is not None and _shape(c2.second_moment) != (m, m):
            raise ConfigError(f"second moment must be {m}x{m}", path="detector.case2.second_moment")


def parse(doc: dict) -> ScenarioConfig:
    validate(doc)
    sysd = doc["system"]
    system = SystemBlock(**{k: _matrix(sysd.get(k)) for k in ("F", "C", "R1", "R2", "G", "R0")})
    obsd = doc["observer"]
    synth = None
    if "synthesize" in obsd:
        sd = dict(obsd["synthesize"])
        synth = SynthesisBlock(**sd)
    observer = ObserverBlock(L=_matrix(obsd.get("L")), synthesize=synth)
    detd = dict(doc["detector"])
    case2 = None
    if "case2" in detd:
        c2 = dict(detd.pop("case2"))
        if "second_moment" in c2:
            c2["second_moment"] = _matrix(c2["second_moment"])
        case2 = Case2Block(**c2)
    detector = DetectorBlock(**detd, case2=case2)
    solver = SolverBlock(**doc.get("solver", {}))
    simd = dict(doc.get("sim", {}))
    cont = ContainmentBlock(**simd.pop("containment")) if "containment" in simd else None
    sim = SimBlock(**simd, containment=cont)
    output = OutputBlock(**doc.get("output", {}))
    cfg = ScenarioConfig(system, observer, detector, solver, sim, output, doc.get("name", ""), doc["schema"])
    _check_dims(cfg)
    try:
        normalize_backend(cfg.solver.backend)
    except HiddenReachError as exc:
        raise ConfigError(str(exc), path="solver.backend") from exc
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical JSON form: defaults filled, absent optional blocks dropped."""

    def prune(x):
        if isinstance(x, dict):
            return {k: prune(v) for k, v in x.items() if v is not None}
        if isinstance(x, list):
            return [prune(v) for v in x]
        return x

    doc = prune(asdict(cfg))
    order = ["schema", "name", "system", "observer", "detector", "solver", "sim", "output"]
    return {k: doc[k] for k in order if k in doc}


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def loads(text: str) -> ScenarioConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", path="<root>") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", path="<root>")
    return parse(doc)


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from exc
    return loads(text)
