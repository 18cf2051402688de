"""
Filename: runconfig.py
Description:
    Run configuration documents: grid, linear system, nonlinearity,
    dichotomy and engine knobs. Documents are JSON; validation failures are
    reported as ConfigError carrying a JSON pointer into the document.

License: Apache 2.0
"""
import hashlib
import json
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, Iterator, Literal, Optional, Union

from pydantic import AfterValidator, BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from ..config import config
from ..engine.error import ConfigError, DepcagError
from ..exprlang import parse
from .bounds import CertifiedBound
from .dichotomy import DichotomySpec
from .grid import AnyGrid, builtin_family, explicit_window
from .system import LinearSystem, MatrixFunction, Nonlinearity, VectorField


def _number_to_text(v: Any) -> Any:
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        return repr(float(v))
    return v


def _parses(src: str) -> str:
    try:
        parse(src)
    except DepcagError as e:
        raise ValueError(e.message) from None
    return src


ExprText = Annotated[str, BeforeValidator(_number_to_text), AfterValidator(_parses)]

# validation-error location parts that name union members rather than document keys
_UNION_TAGS = ("function-", "list[", "tuple[", "literal[", "dict[", "float", "int", "str")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExplicitGridConfig(_Section):
    t: list[float]
    zeta: list[float]
    first_index: int = 0
    theta: Optional[float] = Field(default=None, gt=0)


class GridConfig(_Section):
    family: Optional[str] = None
    params: list[float] = Field(default_factory=list)
    explicit: Optional[ExplicitGridConfig] = None

    @model_validator(mode="after")
    def _one_kind(self) -> "GridConfig":
        if (self.family is None) == (self.explicit is None):
            raise ValueError("give exactly one of 'family' or 'explicit'")
        return self


class BoundConfig(_Section):
    """Either an analytic value or a sampling budget."""
    analytic: Optional[float] = Field(default=None, ge=0)
    samples: Optional[int] = Field(default=None, ge=100)
    inflation: Optional[float] = Field(default=None, ge=1.0)

    def certified(self) -> Optional[CertifiedBound]:
        return None if self.analytic is None else CertifiedBound.analytic(self.analytic)

    def budget(self) -> tuple[int, float]:
        return self.samples or config.samples, self.inflation or config.inflation


class SystemConfig(_Section):
    dim: int = Field(gt=0)
    A: list[list[ExprText]]
    A0: list[list[ExprText]]
    bounds: dict[Literal["M", "M0"], BoundConfig] = Field(default_factory=dict)
    t_range: tuple[float, float] = (-50.0, 50.0)

    @model_validator(mode="after")
    def _square(self) -> "SystemConfig":
        for name in ("A", "A0"):
            rows = getattr(self, name)
            if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
                raise ValueError(f"{name} must be {self.dim}x{self.dim}")
        return self


class NonlinearityConfig(_Section):
    f: list[ExprText]
    bounds: dict[Literal["mu", "ell1", "ell2"], BoundConfig] = Field(default_factory=dict)
    state_radius: float = Field(default=2.0, gt=0)


class DichotomyConfig(_Section):
    P: Union[Literal["discrete-auto"], list[list[float]]]
    K: Union[Literal["auto"], float] = "auto"
    alpha: float = Field(gt=0)

    @model_validator(mode="after")
    def _K_at_least_one(self) -> "DichotomyConfig":
        if self.K != "auto" and self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        return self


class EngineConfig(_Section):
    horizon_T: Optional[float] = Field(default=None, gt=0)
    picard_tol: Optional[float] = Field(default=None, gt=0)
    mesh_step: Optional[float] = Field(default=None, gt=0)
    quad_step: Optional[float] = Field(default=None, gt=0)
    window: tuple[int, int] = (-10, 10)
    t_range: tuple[float, float] = (0.0, 1.0)
    samples_per_interval: int = Field(default=8, ge=4)

    @model_validator(mode="after")
    def _ordered(self) -> "EngineConfig":
        if self.window[0] > self.window[1] or self.t_range[0] > self.t_range[1]:
            raise ValueError("window and t_range must be ordered pairs")
        return self


class RunConfig(_Section):
    """One run: everything needed to rebuild the system and the engine."""
    grid: GridConfig
    system: SystemConfig
    nonlinearity: Optional[NonlinearityConfig] = None
    dichotomy: DichotomyConfig
    engine: EngineConfig = Field(default_factory=EngineConfig)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _dimensions(self) -> "RunConfig":
        if self.nonlinearity is not None and len(self.nonlinearity.f) != self.system.dim:
            raise ValueError(f"f has {len(self.nonlinearity.f)} components, system has dim={self.system.dim}")
        if isinstance(self.dichotomy.P, list) and len(self.dichotomy.P) != self.system.dim:
            raise ValueError(f"P must be {self.system.dim}x{self.system.dim}")
        return self

    # builders

    def build_grid(self) -> AnyGrid:
        with _pointer("/grid"):
            if self.grid.explicit is not None:
                e = self.grid.explicit
                return explicit_window(e.t, e.zeta, e.first_index, e.theta)
            return builtin_family(self.grid.family, self.grid.params)

    def build_system(self) -> LinearSystem:
        grid = self.build_grid()
        s = self.system
        bounds = {}
        for name in ("M", "M0"):
            spec = s.bounds.get(name, BoundConfig())
            matrix = MatrixFunction(entries=tuple(tuple(r) for r in getattr(s, "A" if name == "M" else "A0")))
            with _pointer(f"/system/bounds/{name}"):
                samples, inflation = spec.budget()
                bounds[name] = spec.certified() or matrix.sup_norm_bound(s.t_range, samples, inflation)
        return LinearSystem.build(s.A, s.A0, grid, M=bounds["M"], M0=bounds["M0"])

    def build_nonlinearity(self) -> Optional[Nonlinearity]:
        nl = self.nonlinearity
        if nl is None:
            return None
        r = nl.state_radius
        ranges = {"t": self.system.t_range, "x": (-r, r), "y": (-r, r)}
        given = {name: b.certified() for name, b in nl.bounds.items()}
        samples, inflation = max((b.budget() for b in nl.bounds.values()),
                                 default=(config.samples, config.inflation))
        with _pointer("/nonlinearity/f"):
            if VectorField(components=tuple(nl.f), state_dim=len(nl.f)).is_zero:
                return Nonlinearity.zero(len(nl.f))
            return Nonlinearity.certify(nl.f, ranges, samples, inflation, mu=given.get("mu"),
                                        ell1=given.get("ell1"), ell2=given.get("ell2"))

    def build_dichotomy(self) -> Optional[DichotomySpec]:
        """The dichotomy as configured; None for discrete-auto, which needs the flow."""
        d = self.dichotomy
        if d.P == "discrete-auto":
            return None
        with _pointer("/dichotomy/P"):
            auto = d.K == "auto"
            return DichotomySpec(P=d.P, K=1.0 if auto else d.K, alpha=d.alpha, K_auto=auto)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the document."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


@contextmanager
def _pointer(path: str) -> Iterator[None]:
    """Re-raise build failures as ConfigError at a JSON pointer."""
    try:
        yield
    except ConfigError:
        raise
    except DepcagError as e:
        raise ConfigError(path, e.message) from e
    except ValidationError as e:
        raise ConfigError(path, e.errors()[0]["msg"]) from e


def json_pointer(loc: tuple) -> str:
    return "/" + "/".join(str(p) for p in loc) if loc else ""


def parse_run_config(document: Any) -> RunConfig:
    """
    Validate a decoded JSON document.

    :raises ConfigError: first validation failure, with its JSON pointer
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        err = e.errors()[0]
        loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p.startswith(_UNION_TAGS)))
        raise ConfigError(json_pointer(loc), err["msg"]) from None


def load_run_config(path: Path) -> RunConfig:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("", f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError("", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_run_config(document)
